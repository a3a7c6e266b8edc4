"""Dead reckoning from IMU deltas and the visual/inertial cross-check."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .pose_estimator import argmax_pose, one_hot
from .poses import DiscretePose, heading_angle, level_distance, to_world

VISUAL = "visual"
INERTIAL = "inertial"


@dataclass(frozen=True)
class FusionConfig:
    gamma1: float  # position gate, grid cells
    gamma2: float  # orientation gate, levels

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ContractError("fusion gates must be positive")

    @classmethod
    def from_imu(cls, imu, levels):
        """Gates at three standard deviations plus one step of bias."""
        g1 = 3.0 * imu.sigma_pos + abs(imu.bias_pos)
        g2 = (3.0 * imu.sigma_theta + abs(imu.bias_theta)) * levels / (2.0 * math.pi)
        # a zero-noise IMU still needs an open gate for exact agreement
        return cls(max(g1, 1e-6), max(g2, 1e-6))


@dataclass
class FusionOutcome:
    pose: DiscretePose
    belief: np.ndarray
    source: str


def dead_reckon(prev, u, levels, H, W):
    """Apply an egocentric displacement (dx, dy, dtheta radians) to ``prev``."""
    dx, dy, dth = u
    wx, wy = to_world(dx, dy, heading_angle(prev.r, levels))
    x = min(max(int(round(prev.x + wx)), 0), H - 1)
    y = min(max(int(round(prev.y + wy)), 0), W - 1)
    r = (prev.r + int(round(dth * levels / (2.0 * math.pi)))) % levels
    return DiscretePose(r, x, y)


def cross_check(visual, inertial, cfg, levels):
    """VISUAL when both gates pass (strict inequalities), else INERTIAL."""
    pos = math.hypot(visual.x - inertial.x, visual.y - inertial.y)
    ang = level_distance(visual.r, inertial.r, levels)
    return VISUAL if pos < cfg.gamma1 and ang < cfg.gamma2 else INERTIAL


def select_belief(v, inertial, source):
    if source == VISUAL:
        return FusionOutcome(argmax_pose(v), v, VISUAL)
    if source == INERTIAL:
        return FusionOutcome(inertial, one_hot(inertial, v.shape), INERTIAL)
    raise ContractError(f"unknown pose source {source!r}")
