"""Reactive controller and the policies that feed it class probabilities."""

import math
from abc import ABC, abstractmethod
from typing import NamedTuple

import numpy as np

from classifier.network import TrailNet, predict
from data.capture import quantize
from models.models import ControllerConfig
from scene.world import TrailWorld, locate, trail_frame


class Command(NamedTuple):
    v_cmd: float
    yaw_cmd: float  # rad/s, positive turns right


def control(probs, cfg: ControllerConfig) -> Command:
    """Speed follows P(GS); yaw rate follows P(TR) - P(TL)."""
    p_tl, p_gs, p_tr = (float(p) for p in probs)
    v_cmd = min(max(cfg.k_v * p_gs, cfg.v_min), cfg.v_max)
    yaw_cmd = min(max(cfg.k_yaw * (p_tr - p_tl), -cfg.yaw_max), cfg.yaw_max)
    return Command(v_cmd, yaw_cmd)


class Policy(ABC):
    """Maps the current view (or the vehicle state) to (P_TL, P_GS, P_TR)."""

    label: str = "policy"
    needs_frame: bool = False

    @abstractmethod
    def probabilities(self, world: TrailWorld, state, frame: np.ndarray | None) -> np.ndarray:
        pass


class ModelPolicy(Policy):
    needs_frame = True

    def __init__(self, net: TrailNet, label: str = "model"):
        self.net = net
        self.label = label

    def probabilities(self, world, state, frame):
        # same uint8 quantisation the training images went through
        pixels = quantize(frame)[None]
        return predict(self.net, pixels)[0].double().numpy()


class GeometryOraclePolicy(Policy):
    """Reads the centerline directly and steers towards a point ``lookahead_m`` ahead."""

    label = "oracle"

    def __init__(self, lookahead_m: float = 3.0, gain: float = 2.0):
        self.lookahead_m = lookahead_m
        self.gain = gain

    def probabilities(self, world, state, frame):
        here = locate(world, state.x, state.y, state.s_progress)
        s_ahead = min(here.s + self.lookahead_m, world.total_length)
        target = trail_frame(world, s_ahead).point
        bearing = math.atan2(target[1] - state.y, target[0] - state.x)
        error = math.remainder(bearing - state.yaw, 2 * math.pi)
        # target to the left (error > 0) needs a left turn, i.e. P_TL > P_TR
        d = float(np.clip(-self.gain * error, -1.0, 1.0))
        return np.array([max(-d, 0.0), 1.0 - abs(d), max(d, 0.0)])


class UniformPolicy(Policy):
    label = "uniform"

    def probabilities(self, world, state, frame):
        return np.full(3, 1.0 / 3.0)
