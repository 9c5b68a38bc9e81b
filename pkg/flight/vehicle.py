"""Planar unicycle kinematics."""

import math
from dataclasses import dataclass, replace

from flight.controller import Command
from scene.world import TrailWorld, locate


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    yaw: float
    v: float = 0.0
    s_progress: float = 0.0


def step_vehicle(
    state: VehicleState, cmd: Command, dt: float, world: TrailWorld | None = None
) -> VehicleState:
    """Euler step; a positive yaw command turns right, which lowers the heading."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    yaw = state.yaw - cmd.yaw_cmd * dt
    x = state.x + cmd.v_cmd * math.cos(yaw) * dt
    y = state.y + cmd.v_cmd * math.sin(yaw) * dt
    moved = replace(state, x=x, y=y, yaw=yaw, v=cmd.v_cmd)
    if world is None:
        return moved
    s = locate(world, x, y, s_hint=state.s_progress).s
    return replace(moved, s_progress=max(state.s_progress, s))
