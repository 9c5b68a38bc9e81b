"""Closed-loop episodes: render, classify, control, step."""

import csv
import logging
import math
from pathlib import Path
from typing import NamedTuple

import numpy as np

from classifier.network import TrailNet
from flight.controller import ModelPolicy, Policy, control
from flight.vehicle import VehicleState, step_vehicle
from models.models import CameraConfig, CameraPose, ControllerConfig, FlightSummaryRow
from scene.renderer import render, write_ppm
from scene.world import TrailWorld, camera_height_at, locate, trail_frame

logger = logging.getLogger(__name__)


class TraceRow(NamedTuple):
    step: int
    x: float
    y: float
    yaw: float
    v: float
    s_progress: float
    P_TL: float
    P_GS: float
    P_TR: float
    v_cmd: float
    yaw_cmd: float
    lateral: float


TRACE_COLUMNS = list(TraceRow._fields)


class EpisodeResult(NamedTuple):
    distance: float
    steps: int
    failed: bool
    failure_s: float | None
    mean_abs_lateral: float
    trace: list[TraceRow]


def run_episode(
    world: TrailWorld,
    policy: Policy | TrailNet,
    ctrl_cfg: ControllerConfig,
    dt: float,
    max_steps: int,
    start_s: float = 0.0,
    image_size: int = 32,
    camera: CameraConfig | None = None,
    failure_margin_frac: float = 0.5,
    frame_dir: str | Path | None = None,
) -> EpisodeResult:
    """Fly from ``start_s`` until ``max_steps``, the end of the trail, or a lateral failure.

    Failure: |lateral offset| > half_width * (1 + failure_margin_frac).
    """
    if isinstance(policy, TrailNet):
        if policy.image_size != image_size:
            raise ValueError(f"network expects {policy.image_size}px frames, episode renders {image_size}px")
        policy = ModelPolicy(policy)
    camera = camera or CameraConfig()
    if not 0.0 <= start_s < world.length_m:
        raise ValueError(f"start_s {start_s} outside [0, {world.length_m})")
    if frame_dir is not None:
        Path(frame_dir).mkdir(parents=True, exist_ok=True)

    start = trail_frame(world, start_s)
    state = VehicleState(x=start.point[0], y=start.point[1], yaw=start.heading, s_progress=start_s)
    pitch = math.radians(camera.pitch_deg)
    trace: list[TraceRow] = []
    failure_s = None

    for step in range(max_steps):
        frame = None
        if policy.needs_frame or frame_dir is not None:
            pose = CameraPose(
                x=state.x, y=state.y, yaw=state.yaw, height=camera_height_at(world, state.s_progress), pitch=pitch
            )
            frame = render(world, pose, image_size, image_size, camera)
            if frame_dir is not None:
                write_ppm(Path(frame_dir) / f"frame_{step:05d}.ppm", frame)

        probs = policy.probabilities(world, state, frame)
        cmd = control(probs, ctrl_cfg)
        previous_s = state.s_progress
        state = step_vehicle(state, cmd, dt, world)
        here = locate(world, state.x, state.y, s_hint=previous_s)

        trace.append(
            TraceRow(
                step,
                state.x,
                state.y,
                state.yaw,
                state.v,
                state.s_progress,
                *map(float, probs),
                cmd.v_cmd,
                cmd.yaw_cmd,
                here.lateral,
            )
        )
        if abs(here.lateral) > here.half_width * (1.0 + failure_margin_frac):
            failure_s = here.s
            break
        if state.s_progress >= world.length_m:
            break

    logger.debug(
        f"{policy.label}: {len(trace)} steps, s={state.s_progress:.2f}"
        + (f", left the trail at s={failure_s:.2f}" if failure_s is not None else "")
    )
    distance = min(state.s_progress, world.length_m) - start_s
    return EpisodeResult(
        distance=distance,
        steps=len(trace),
        failed=failure_s is not None,
        failure_s=failure_s,
        mean_abs_lateral=float(np.mean([abs(row.lateral) for row in trace])) if trace else 0.0,
        trace=trace,
    )


def write_trace_csv(result: EpisodeResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(file, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in result.trace:
            writer.writerow(row._asdict())


def summarize_episodes(label: str, results: list[EpisodeResult]) -> FlightSummaryRow:
    if not results:
        raise ValueError("no episodes to summarize")
    distances = np.array([r.distance for r in results])
    return FlightSummaryRow(
        label=label,
        episodes=len(results),
        mean_distance=float(distances.mean()),
        median_distance=float(np.median(distances)),
        failure_rate=sum(r.failed for r in results) / len(results),
    )
