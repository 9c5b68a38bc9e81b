"""Painter-order perspective renderer for trail worlds.

Layers, back to front: sky gradient, ground (trail or speckled off-trail ground, fading to
haze at max view distance), tree billboards sorted far to near. Then the light tint and,
for reality-proxy domains, blur, additive noise and clamping.

The renderer is exactly mirror-equivariant: every quantity that depends on the sign of
the lateral coordinate is computed as an odd function of it, and the textures are keyed
on |y|.
"""

import math
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from models.models import CameraConfig, CameraPose
from scene.world import SPECKLE_TABLE_SIZE, TCOLOR, TGIRTH, THEIGHT, TX, TY, TrailWorld, distance_to_trail
from utils.rng import stream

SPECKLE_CELL_M = 0.25
GROUND_SPECKLE = 0.30
TRAIL_SPECKLE = 0.15
SKY_GRADIENT_RAD = math.pi / 6
NEAR_M = 0.3
TRUNK_COLOR = (0.30, 0.22, 0.15)
TRUNK_FRACTION = 0.35
TRUNK_WIDTH_FRACTION = 0.35

Image = np.ndarray  # (h, w, 3) float64 in [0, 1]


def hflip(image: Image) -> Image:
    return image[:, ::-1, :].copy()


def _camera_basis(pose: CameraPose):
    cy, sy = math.cos(pose.yaw), math.sin(pose.yaw)
    cp, sp = math.cos(pose.pitch), math.sin(pose.pitch)
    forward = (cy * cp, sy * cp, -sp)
    right = (sy, -cy, 0.0)
    up = (cy * sp, sy * sp, cp)
    return forward, right, up


def _pixel_grid(w: int, h: int, tan_half: float):
    """Normalized image-plane coordinates of pixel centers; exactly odd in the column offset."""
    half = w / 2.0
    cols = (np.arange(w) + 0.5 - half) / half * tan_half
    rows = (np.arange(h) + 0.5 - h / 2.0) / half * tan_half
    return np.meshgrid(cols, rows)


def _speckle(world: TrailWorld, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    ix = np.floor(gx / SPECKLE_CELL_M).astype(np.int64) % SPECKLE_TABLE_SIZE
    iy = np.floor(np.abs(gy) / SPECKLE_CELL_M).astype(np.int64) % SPECKLE_TABLE_SIZE
    return world.speckle[ix, iy]


def _proxy_noise(world: TrailWorld, pose: CameraPose, w: int, h: int) -> np.ndarray:
    """Left-right symmetric unit-variance noise keyed on mirror-invariant pose values."""
    key = [
        round(pose.x * 1e4),
        round(abs(pose.y) * 1e4),
        round(abs(pose.yaw) * 1e6),
        round(pose.height * 1e4),
        round(pose.pitch * 1e6),
    ]
    field = stream(world.seed, "noise", *key).standard_normal((h, w, 3))
    return (field + field[:, ::-1, :]) / math.sqrt(2.0)


def render(
    world: TrailWorld, pose: CameraPose, w: int, h: int, camera: CameraConfig | None = None
) -> Image:
    """Render an (h, w, 3) frame of ``world`` seen from ``pose``."""
    if w < 16 or h < 16:
        raise ValueError(f"image must be at least 16x16, got {w}x{h}")
    camera = camera or CameraConfig()
    palette = world.palette
    tan_half = math.tan(math.radians(camera.hfov_deg) / 2.0)
    forward, right, up = _camera_basis(pose)

    px, py = _pixel_grid(w, h, tan_half)
    dx = forward[0] + px * right[0] - py * up[0]
    dy = forward[1] + px * right[1] - py * up[1]
    dz = forward[2] - py * up[2]

    image = np.empty((h, w, 3))

    # sky
    horizontal = np.sqrt(dx * dx + dy * dy)
    elevation = np.arctan2(dz, horizontal)
    mix = np.clip(elevation / SKY_GRADIENT_RAD, 0.0, 1.0)[..., None]
    image[:] = np.asarray(palette.sky_horizon) * (1.0 - mix) + np.asarray(palette.sky) * mix

    # ground
    ground = dz < 0.0
    if ground.any():
        t = pose.height / -dz[ground]
        gx = pose.x + t * dx[ground]
        gy = pose.y + t * dy[ground]
        dist = t * horizontal[ground]

        on_ground = dist < camera.max_view_m
        gx, gy, dist = gx[on_ground], gy[on_ground], dist[on_ground]
        rows, cols = np.nonzero(ground)
        rows, cols = rows[on_ground], cols[on_ground]

        trail_dist, half_width = distance_to_trail(world, gx, gy)
        on_trail = (trail_dist <= half_width)[:, None]
        texture = (_speckle(world, gx, gy) - 0.5)[:, None]
        trail_color = np.asarray(palette.trail) * (1.0 + TRAIL_SPECKLE * texture)
        ground_color = np.asarray(palette.ground) * (1.0 + GROUND_SPECKLE * texture)
        color = np.where(on_trail, trail_color, ground_color)

        haze = ((dist / camera.max_view_m) ** 2)[:, None]
        image[rows, cols] = color * (1.0 - haze) + np.asarray(palette.sky_horizon) * haze

    _draw_trees(image, world, pose, camera, px[0], py[:, 0], forward, right, up)

    image = image * np.asarray(palette.tint)

    spec = world.spec
    if spec.reality_proxy:
        if spec.blur_radius > 0:
            image = gaussian_filter(image, sigma=(spec.blur_radius, spec.blur_radius, 0), mode="reflect")
        if spec.noise_sigma > 0:
            image = image + spec.noise_sigma * _proxy_noise(world, pose, w, h)

    return np.clip(image, 0.0, 1.0)


def _draw_trees(image, world, pose, camera, cols, rows, forward, right, up):
    trees = world.trees
    if len(trees) == 0:
        return

    rx = trees[:, TX] - pose.x
    ry = trees[:, TY] - pose.y
    # camera-frame coordinates of each tree base (z = 0) and top
    base_z = -pose.height
    depth = rx * forward[0] + ry * forward[1] + base_z * forward[2]
    lateral = rx * right[0] + ry * right[1]
    base_up = rx * up[0] + ry * up[1] + base_z * up[2]
    horizontal = np.sqrt(rx * rx + ry * ry)

    visible = (depth > NEAR_M) & (horizontal < camera.max_view_m)
    if not visible.any():
        return
    idx = np.nonzero(visible)[0]
    order = idx[np.argsort(-depth[idx], kind="stable")]

    sky_horizon = np.asarray(world.palette.sky_horizon)
    for k in order:
        z = depth[k]
        center = lateral[k] / z
        girth = trees[k, TGIRTH] / z
        height = trees[k, THEIGHT]
        # billboard: the whole tree is drawn at the depth of its base
        bottom = -base_up[k] / z
        top = -(base_up[k] + height * up[2]) / z
        trunk_top = bottom + (top - bottom) * TRUNK_FRACTION

        offset = cols - center
        in_trunk_cols = np.abs(offset) <= girth * TRUNK_WIDTH_FRACTION
        in_crown_cols = np.abs(offset) <= girth

        haze = min(horizontal[k] / camera.max_view_m, 1.0) ** 2
        crown = np.asarray(trees[k, TCOLOR]) * (1.0 - haze) + sky_horizon * haze
        trunk = np.asarray(TRUNK_COLOR) * (1.0 - haze) + sky_horizon * haze

        trunk_rows = (rows <= bottom) & (rows >= trunk_top)
        crown_rows = (rows < trunk_top) & (rows >= top)
        if trunk_rows.any() and in_trunk_cols.any():
            image[np.ix_(trunk_rows, in_trunk_cols)] = trunk
        if crown_rows.any() and in_crown_cols.any():
            image[np.ix_(crown_rows, in_crown_cols)] = crown


def write_ppm(path: str | Path, image: Image) -> None:
    """Binary PPM (P6, maxval 255)."""
    h, w, _ = image.shape
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
    with open(path, "wb") as file:
        file.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        file.write(pixels.tobytes())


def read_ppm(path: str | Path) -> Image:
    with open(path, "rb") as file:
        data = file.read()
    # header: four whitespace-separated tokens, then exactly one whitespace byte
    tokens, pos = [], 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P6" or tokens[3] != b"255":
        raise ValueError(f"{path}: not a P6 PPM with maxval 255")
    w, h = int(tokens[1]), int(tokens[2])
    body = data[pos + 1 :]
    pixels = np.frombuffer(body[: w * h * 3], dtype=np.uint8)
    if pixels.size != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w, 3).astype(np.float64) / 255.0
