"""Palette tables and their resolution into per-world color sets."""

import os
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from models.models import DomainSpec

PALETTE_FILE = "palettes.txt"
SURFACES = ("trail", "ground", "foliage", "sky", "sky_horizon")

RGB = tuple[float, float, float]


class Palette(NamedTuple):
    """Resolved colors of one world; ``tint`` is the light multiplier applied at render."""

    trail: RGB
    ground: RGB
    foliage: RGB
    sky: RGB
    sky_horizon: RGB
    tint: RGB


def load_palette_table(path: str = PALETTE_FILE) -> dict[str, RGB]:
    """Load the committed ``name r g b`` table."""
    if not os.path.isabs(path):
        path = os.path.join(os.path.dirname(__file__), path)

    if not os.path.exists(path):
        raise FileNotFoundError(f"Palette file {path} not found")

    table = {}
    with open(path, encoding="utf-8") as file:
        for lineno, raw in enumerate(file, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'name r g b', got {raw.strip()!r}")
            rgb = tuple(float(p) for p in parts[1:])
            if not all(0.0 <= c <= 1.0 for c in rgb):
                raise ValueError(f"{path}:{lineno}: channel values must lie in [0, 1]")
            table[parts[0]] = rgb
    return table


@lru_cache(maxsize=1)
def default_table() -> dict[str, RGB]:
    return load_palette_table()


def base_palette(spec: DomainSpec, table: dict[str, RGB] | None = None) -> Palette:
    """Palette straight from the tables, before any jitter."""
    table = table if table is not None else default_table()
    season = spec.season.value
    colors = {surface: table[f"{season}.{surface}"] for surface in SURFACES}
    return Palette(**colors, tint=table[f"light.{spec.light.value}"])


def resolve_palette(spec: DomainSpec, rng: np.random.Generator) -> Palette:
    """Base palette, jittered per channel by ``palette_jitter`` when the domain is a reality proxy."""
    palette = base_palette(spec)
    if not spec.reality_proxy or spec.palette_jitter == 0.0:
        return palette

    jittered = {}
    for surface in SURFACES:
        color = np.asarray(getattr(palette, surface))
        factor = 1.0 + rng.uniform(-spec.palette_jitter, spec.palette_jitter, size=3)
        jittered[surface] = tuple(float(c) for c in np.clip(color * factor, 0.0, 1.0))
    return Palette(**jittered, tint=palette.tint)


def luminance(rgb: RGB) -> float:
    r, g, b = rgb
    return 0.2126 * r + 0.7152 * g + 0.0722 * b
