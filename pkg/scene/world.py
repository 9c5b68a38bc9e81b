"""Procedural trail worlds: centerline, trees and palette, all derived from (seed, spec)."""

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter
from scipy.spatial import cKDTree

from models.models import DomainSpec, Terrain
from scene.palettes import Palette, resolve_palette
from utils.rng import stream

DS = 0.5
LOOKAHEAD_M = 40.0
BASE_MAX_TURN_PER_DS = 0.04
TURN_CORRELATION = 0.95
HALF_WIDTH_MID = 1.3
HALF_WIDTH_SPAN = 0.3
TREE_DENSITY_PER_M = 0.8
TREE_LATERAL_MAX = 14.0
SPECKLE_TABLE_SIZE = 128

# centerline columns
CX, CY, CHEADING, CHALF_WIDTH = range(4)
# tree columns: x, y, height, girth, foliage r, g, b
TX, TY, THEIGHT, TGIRTH = range(4)
TCOLOR = slice(4, 7)


class TerrainProfile(NamedTuple):
    camera_height: float
    curvature_scale: float
    roughness: float


TERRAIN_PROFILES = {
    Terrain.TRAIL1: TerrainProfile(camera_height=1.6, curvature_scale=1.0, roughness=0.05),
    Terrain.TRAIL2: TerrainProfile(camera_height=2.4, curvature_scale=1.5, roughness=0.15),
}


class TrailRangeError(ValueError):
    """Arc length outside the centerline."""


class TrailFrame(NamedTuple):
    point: tuple[float, float]
    heading: float
    half_width: float


class Location(NamedTuple):
    s: float
    lateral: float
    half_width: float


@dataclass(frozen=True, eq=False)
class TrailWorld:
    seed: int
    spec: DomainSpec
    length_m: float
    ds: float
    centerline: np.ndarray  # (N, 4): x, y, heading, half_width
    trees: np.ndarray  # (M, 7): x, y, height, girth, r, g, b
    palette: Palette

    @property
    def total_length(self) -> float:
        return (len(self.centerline) - 1) * self.ds

    @property
    def profile(self) -> TerrainProfile:
        return TERRAIN_PROFILES[self.spec.terrain]

    @property
    def max_turn_per_ds(self) -> float:
        return BASE_MAX_TURN_PER_DS * self.profile.curvature_scale

    @cached_property
    def kdtree(self) -> cKDTree:
        return cKDTree(self.centerline[:, :2])

    @cached_property
    def speckle(self) -> np.ndarray:
        # lookup table indexed by (x cell, |y| cell); shared by a world and its mirror
        return stream(self.seed, "speckle").random((SPECKLE_TABLE_SIZE, SPECKLE_TABLE_SIZE))

    def __eq__(self, other):
        if not isinstance(other, TrailWorld):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.spec == other.spec
            and self.length_m == other.length_m
            and self.ds == other.ds
            and self.palette == other.palette
            and np.array_equal(self.centerline, other.centerline)
            and np.array_equal(self.trees, other.trees)
        )

    __hash__ = None


def _smooth_series(rng: np.random.Generator, n: int, correlation: float) -> np.ndarray:
    """Unit-variance AR(1) series of length n."""
    noise = rng.standard_normal(n) * math.sqrt(1.0 - correlation**2)
    return lfilter([1.0], [1.0, -correlation], noise)


def assemble_world(
    seed: int,
    spec: DomainSpec,
    length_m: float,
    headings: np.ndarray,
    half_widths: np.ndarray,
    ds: float = DS,
    trees: np.ndarray | None = None,
) -> TrailWorld:
    """Integrate headings into a centerline starting at the origin and attach trees + palette."""
    headings = np.asarray(headings, dtype=np.float64)
    steps = ds * np.stack([np.cos(headings[:-1]), np.sin(headings[:-1])], axis=1)
    points = np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
    centerline = np.column_stack([points, headings, np.asarray(half_widths, dtype=np.float64)])

    palette = resolve_palette(spec, stream(seed, "palette"))
    world = TrailWorld(
        seed=seed,
        spec=spec,
        length_m=float(length_m),
        ds=ds,
        centerline=centerline,
        trees=np.zeros((0, 7)),
        palette=palette,
    )
    if trees is None:
        trees = _place_trees(world, stream(seed, "trees"))
    return dataclasses.replace(world, trees=trees)


def build_world(seed: int, spec: DomainSpec, length_m: float) -> TrailWorld:
    """Deterministic world for (seed, spec, length_m)."""
    if length_m <= 0:
        raise ValueError(f"length_m must be positive, got {length_m}")

    profile = TERRAIN_PROFILES[spec.terrain]
    n = int(math.ceil((length_m + LOOKAHEAD_M) / DS)) + 1
    max_turn = BASE_MAX_TURN_PER_DS * profile.curvature_scale

    turns = 0.5 * max_turn * _smooth_series(stream(seed, "centerline"), n - 1, TURN_CORRELATION)
    turns = np.clip(turns, -max_turn, max_turn)
    headings = np.concatenate([[0.0], np.cumsum(turns)])

    width_walk = _smooth_series(stream(seed, "half_width"), n, 0.98)
    half_widths = HALF_WIDTH_MID + HALF_WIDTH_SPAN * np.tanh(width_walk)

    return assemble_world(seed, spec, length_m, headings, half_widths)


def _place_trees(world: TrailWorld, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample trees outside the trail ribbon."""
    target = int(TREE_DENSITY_PER_M * world.total_length)
    max_half_width = float(world.centerline[:, CHALF_WIDTH].max())
    accepted = []
    count = 0

    for _ in range(20):
        if count >= target:
            break
        m = 2 * (target - count) + 8
        s = rng.uniform(0.0, world.total_length, m)
        side = rng.choice([-1.0, 1.0], m)
        offset = rng.uniform(0.5, TREE_LATERAL_MAX, m)
        girth = rng.uniform(0.25, 0.6, m)
        height = rng.uniform(6.0, 14.0, m)
        shade = rng.uniform(0.8, 1.1, m)

        frames = _interpolate(world, s)
        normal = np.stack([-np.sin(frames[:, CHEADING]), np.cos(frames[:, CHEADING])], axis=1)
        xy = frames[:, :2] + (side * (frames[:, CHALF_WIDTH] + offset))[:, None] * normal

        nearest, _ = world.kdtree.query(xy)
        keep = nearest >= max_half_width + girth + world.ds / 2
        color = np.clip(np.outer(shade, world.palette.foliage), 0.0, 1.0)
        batch = np.column_stack([xy, height, girth, color])[keep]
        batch = batch[: target - count]
        accepted.append(batch)
        count += len(batch)

    return np.vstack(accepted) if accepted else np.zeros((0, 7))


def _interpolate(world: TrailWorld, s: np.ndarray) -> np.ndarray:
    f = np.asarray(s, dtype=np.float64) / world.ds
    i = np.minimum(np.floor(f).astype(int), len(world.centerline) - 2)
    t = (f - i)[:, None]
    return world.centerline[i] * (1.0 - t) + world.centerline[i + 1] * t


def trail_frame(world: TrailWorld, s: float) -> TrailFrame:
    """Point, heading and half width at arc length ``s`` (linear interpolation)."""
    if not 0.0 <= s <= world.total_length:
        raise TrailRangeError(f"arc length {s} outside [0, {world.total_length}]")
    row = _interpolate(world, np.array([s]))[0]
    return TrailFrame(
        point=(float(row[CX]), float(row[CY])),
        heading=float(row[CHEADING]),
        half_width=float(row[CHALF_WIDTH]),
    )


def mirror_world(world: TrailWorld) -> TrailWorld:
    """Reflect all geometry across the x-axis; palette and seed are unchanged."""
    centerline = world.centerline.copy()
    centerline[:, CY] = -centerline[:, CY]
    centerline[:, CHEADING] = -centerline[:, CHEADING]
    trees = world.trees.copy()
    trees[:, TY] = -trees[:, TY]
    return dataclasses.replace(world, centerline=centerline, trees=trees)


def camera_height_at(world: TrailWorld, s: float) -> float:
    """Terrain camera height plus the bumpy-road term at arc length ``s``."""
    profile = world.profile
    phase = stream(world.seed, "roughness").uniform(0.0, 2 * math.pi, 2)
    bump = 0.6 * math.sin(2 * math.pi * s / 3.1 + phase[0]) + 0.4 * math.sin(
        2 * math.pi * s / 1.3 + phase[1]
    )
    return profile.camera_height + profile.roughness * bump


def _project_on_segments(world: TrailWorld, seg: np.ndarray, px: np.ndarray, py: np.ndarray):
    """Distance, segment parameter and signed side of points against segments ``seg -> seg+1``."""
    a = world.centerline[seg]
    b = world.centerline[seg + 1]
    ex = b[..., CX] - a[..., CX]
    ey = b[..., CY] - a[..., CY]
    wx = px - a[..., CX]
    wy = py - a[..., CY]
    t = np.clip((wx * ex + wy * ey) / (ex * ex + ey * ey), 0.0, 1.0)
    dx = wx - t * ex
    dy = wy - t * ey
    dist = np.sqrt(dx * dx + dy * dy)
    side = ex * wy - ey * wx
    half_width = a[..., CHALF_WIDTH] * (1.0 - t) + b[..., CHALF_WIDTH] * t
    return dist, t, side, half_width


def distance_to_trail(world: TrailWorld, px: np.ndarray, py: np.ndarray):
    """Distance of each point to the centerline polyline and the local half width."""
    _, nearest = world.kdtree.query(np.stack([px, py], axis=-1))
    last = len(world.centerline) - 2
    before = np.clip(nearest - 1, 0, last)
    after = np.clip(nearest, 0, last)
    d0, _, _, hw0 = _project_on_segments(world, before, px, py)
    d1, _, _, hw1 = _project_on_segments(world, after, px, py)
    closer = d1 < d0
    return np.where(closer, d1, d0), np.where(closer, hw1, hw0)


def locate(
    world: TrailWorld, x: float, y: float, s_hint: float | None = None, window: tuple = (-2.0, 6.0)
) -> Location:
    """Nearest centerline point to (x, y); searches near ``s_hint`` when given. Left is positive lateral."""
    last = len(world.centerline) - 2
    if s_hint is None:
        _, nearest = world.kdtree.query([x, y])
        lo, hi = max(nearest - 1, 0), min(nearest, last)
    else:
        lo = max(int(math.floor((s_hint + window[0]) / world.ds)), 0)
        hi = min(int(math.ceil((s_hint + window[1]) / world.ds)), last)
        lo = min(lo, hi)
    seg = np.arange(lo, hi + 1)
    dist, t, side, half_width = _project_on_segments(
        world, seg, np.full(len(seg), x), np.full(len(seg), y)
    )
    k = int(np.argmin(dist))
    lateral = float(dist[k]) if side[k] >= 0 else -float(dist[k])
    return Location(s=float((seg[k] + t[k]) * world.ds), lateral=lateral, half_width=float(half_width[k]))
