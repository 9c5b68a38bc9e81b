"""Plain-text (YAML) manifest written beside every generated dataset directory."""

import os

import yaml

from models.models import DomainSpec

MANIFEST_FILE = "manifest.yaml"


def build_manifest(seed: int, entries: list[dict]) -> dict:
    """``entries``: dicts with ``file``, ``role``, ``count`` and ``domains`` (list of (name, DomainSpec))."""
    return {
        "data_seed": seed,
        "datasets": [
            {
                "file": entry["file"],
                "role": entry["role"],
                "count": entry["count"],
                "domains": [
                    {"name": name, **spec.model_dump(mode="json")} for name, spec in entry["domains"]
                ],
            }
            for entry in entries
        ],
    }


def write_manifest(manifest: dict, directory: str) -> str:
    path = os.path.join(directory, MANIFEST_FILE)
    with open(path, "w", encoding="utf-8") as file:
        yaml.safe_dump(manifest, file, default_flow_style=False, sort_keys=False, allow_unicode=True)
    return path


def load_manifest(directory: str) -> dict:
    path = os.path.join(directory, MANIFEST_FILE)
    if not os.path.exists(path):
        raise FileNotFoundError(f"Manifest {path} not found; run 'gen' first")
    with open(path, encoding="utf-8") as file:
        return yaml.safe_load(file)


def manifest_domain_ids(manifest: dict) -> set[int]:
    return {
        DomainSpec(**{k: v for k, v in domain.items() if k != "name"}).domain_id
        for entry in manifest["datasets"]
        for domain in entry["domains"]
    }
