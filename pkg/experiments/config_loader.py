import os
from pathlib import Path

import yaml
from pydantic import ValidationError

from models.models import DomainEntry, ExperimentConfig, Season, TaskConfig, TasksConfig

RESOLVED_CONFIG_FILE = "resolved.cfg"


class ConfigError(ValueError):
    """Invalid experiment configuration text or task registry."""


def load_tasks_config(config_path: str = "tasks.yaml") -> TasksConfig:
    """Load the domain registry and task definitions from YAML."""
    # Convert to absolute path if it's relative
    if not os.path.isabs(config_path):
        config_path = os.path.join(os.path.dirname(__file__), config_path)

    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Configuration file {config_path} not found")

    with open(config_path, encoding="utf-8") as file:
        data = yaml.safe_load(file)

    try:
        domains = [DomainEntry(**entry) for entry in data["domains"]]
        tasks = {name: TaskConfig(name=name, **task) for name, task in data["tasks"].items()}
        return TasksConfig(domains=domains, tasks=tasks)
    except (KeyError, TypeError, ValidationError) as e:
        raise ConfigError(f"invalid task registry {config_path}: {e}") from e


def get_task(config: TasksConfig, name: str) -> TaskConfig:
    if name not in config.tasks:
        raise ConfigError(f"unknown task '{name}'; known tasks: {', '.join(sorted(config.tasks))}")
    return config.tasks[name]


def get_domain(config: TasksConfig, name: str) -> DomainEntry:
    for entry in config.domains:
        if entry.name == name:
            return entry
    raise ConfigError(f"unknown domain '{name}'")


def get_domains_by_season(config: TasksConfig, season: Season | str) -> list[DomainEntry]:
    """Registered domains of one season."""
    return [entry for entry in config.domains if entry.spec.season == Season(season)]


def _describe(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "config"
        if item["type"] == "extra_forbidden":
            problems.append(f"unknown key '{key}'")
        else:
            problems.append(f"{key}: {item['msg']}")
    return "; ".join(problems)


def parse_config_text(text: str) -> ExperimentConfig:
    """Flat ``key=value`` lines; ``#`` starts a comment, blank lines are ignored."""
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected key=value, got '{raw.strip()}'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {number}: duplicate key '{key}'")
        values[key] = value.strip()

    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


def load_experiment_config(config_path: str | Path | None) -> ExperimentConfig:
    if config_path is None:
        return ExperimentConfig()
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Configuration file {config_path} not found")
    return parse_config_text(Path(config_path).read_text(encoding="utf-8"))


def _format(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, list):
        return ",".join(_format(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_experiment_config(cfg: ExperimentConfig) -> str:
    """Every field, resolved; parse_config_text(dump_experiment_config(cfg)) == cfg."""
    lines = ["# resolved experiment configuration"]
    for key, value in cfg.model_dump(mode="json", by_alias=True).items():
        lines.append(f"{key}={_format(value)}")
    return "\n".join(lines) + "\n"


def write_resolved_config(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    path = Path(out_dir) / RESOLVED_CONFIG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_experiment_config(cfg), encoding="utf-8")
    return path
