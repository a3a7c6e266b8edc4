"""Per-episode data preparation and the per-step localization logic."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .inertial_fusion import INERTIAL, VISUAL, FusionConfig, cross_check, dead_reckon, select_belief
from .observation import filter_noise, project_features
from .pose_estimator import argmax_pose, one_hot, rotation_stack, visual_belief
from .scene_sim import CameraModel, ErrorModel, ImuModel, ground_truth_map, simulate_detections

START = "start"
TRUTH = "truth"
MODES = ("teacher", "visual", "visual-inertial", "dead-reckoning")


@dataclass(frozen=True)
class PipelineConfig:
    levels: int = 8
    h: int = 11
    beta: float = 0.02
    tier: str = "real"
    camera: CameraModel = field(default_factory=CameraModel)
    errors: ErrorModel = field(default_factory=ErrorModel)
    gamma1: float | None = None
    gamma2: float | None = None

    def fusion(self, imu):
        auto = FusionConfig.from_imu(imu, self.levels)
        return FusionConfig(
            self.gamma1 if self.gamma1 is not None else auto.gamma1,
            self.gamma2 if self.gamma2 is not None else auto.gamma2,
        )


@dataclass
class Episode:
    key: tuple  # (scene index, trajectory index)
    truth: np.ndarray  # (L, H, W)
    poses: list  # true DiscretePose per step
    imu: list  # noisy (dx, dy, dtheta) per transition
    stacks: np.ndarray  # (T, R, L, h, h) rotation stacks of the filtered observations
    imu_model: ImuModel

    @property
    def T(self):
        return len(self.poses)

    @property
    def shape(self):
        return self.truth.shape


def observation_rng(seed, key, step):
    return np.random.default_rng([seed, key[0], key[1], step, 0x0B5])


def prepare_episode(scene, poses, imu, cfg, key=(0, 0), seed=0, imu_model=None, steps=None):
    """Simulate the observations of a trajectory and build their rotation stacks."""
    if steps is not None:
        poses = poses[:steps]
        imu = imu[:max(steps - 1, 0)]
    stacks = np.empty((len(poses), cfg.levels, scene.L, cfg.h, cfg.h))
    for t, pose in enumerate(poses):
        dets = simulate_detections(
            scene, pose, cfg.camera, cfg.levels, cfg.tier, observation_rng(seed, key, t), cfg.errors
        )
        obs = filter_noise(project_features(dets, cfg.h, scene.L, t), cfg.beta)
        stacks[t] = rotation_stack(obs, cfg.levels)
    return Episode(key, ground_truth_map(scene), list(poses), list(imu), stacks,
                   imu_model or ImuModel())


@dataclass
class StepPose:
    pose: object
    belief: np.ndarray
    source: str


class Localizer:
    """Produces the pose estimate and registration belief for each step of an episode."""

    def __init__(self, mode, episode, fusion=None):
        if mode not in MODES:
            raise ContractError(f"unknown localization mode {mode!r}")
        self.mode = mode
        self.ep = episode
        self.fusion = fusion
        self.prev = None

    def step(self, t, grid):
        ep = self.ep
        R = ep.stacks.shape[1]
        shape = (R,) + ep.shape[1:]
        if self.mode == "teacher":
            pose, source = ep.poses[t], TRUTH
        elif t == 0:
            pose, source = ep.poses[0], START
        else:
            out = self._estimate(t, grid, shape)
            self.prev = out.pose
            return out
        self.prev = pose
        return StepPose(pose, one_hot(pose, shape), source)

    def _estimate(self, t, grid, shape):
        ep = self.ep
        R, H, W = shape
        inertial = dead_reckon(self.prev, ep.imu[t - 1], R, H, W)
        if self.mode == "dead-reckoning":
            return StepPose(inertial, one_hot(inertial, shape), INERTIAL)
        v = visual_belief(grid, ep.stacks[t])
        if self.mode == "visual":
            return StepPose(argmax_pose(v), v, VISUAL)
        source = cross_check(argmax_pose(v), inertial, self.fusion, R)
        out = select_belief(v, inertial, source)
        return StepPose(out.pose, out.belief, out.source)


def synthetic_episode(seed, L=3, H=7, W=7, h=5, levels=2, T=5):
    """Dense random mini-episode for gradient checks: random targets, observations and poses."""
    from .poses import DiscretePose

    rng = np.random.default_rng(seed)
    # soft targets avoid exact cancellations that make true gradients vanish
    truth = rng.random((L, H, W))
    poses = [DiscretePose(int(rng.integers(levels)), int(rng.integers(H)), int(rng.integers(W)))
             for _ in range(T)]
    stacks = rng.random((T, levels, L, h, h))
    imu = [(0.0, 0.0, 0.0)] * (T - 1)
    return Episode((0, seed), truth, poses, imu, stacks, ImuModel())
