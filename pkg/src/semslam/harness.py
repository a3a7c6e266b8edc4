"""Experiment engine: episode runs, metrics, dataset splits and map evaluation."""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .episode import Episode, Localizer, PipelineConfig, prepare_episode
from .errors import ContractError
from .inertial_fusion import INERTIAL
from .map_updater import SemanticMap, convlstm_forward, heuristic_update, project_observation, roi_mask
from .poses import level_distance
from .trainer import smooth

CSV_VERSION = 1
CSV_COLUMNS = ("step", "true_r", "true_x", "true_y", "est_r", "est_x", "est_y",
               "pos_err", "dir_err_deg", "source", "map_mse")
HEURISTIC_ALPHAS = (0.1, 0.3, 0.7, 1.0)
RUN_MODES = ("visual", "visual-inertial", "dead-reckoning", "heuristic")


def position_error(est, true):
    return math.hypot(est.x - true.x, est.y - true.y)


def direction_error_deg(est_r, true_r, levels):
    """Circular heading difference in degrees, in [0, 180]."""
    return level_distance(est_r, true_r, levels) * 360.0 / levels


def map_mse(grid, truth, eps=1e-4):
    """Mean squared difference of the per-cell class distributions (eps-smoothed)."""
    return float(np.mean((smooth(grid, eps) - smooth(truth, eps)) ** 2))


# -- map updaters -------------------------------------------------------------

class ConvLstmUpdater:
    name = "ours"

    def __init__(self, params):
        self.params = params
        self.w_b = params.stacked()

    def __call__(self, smap, obs, window):
        return convlstm_forward(smap, obs, window, self.params, self.w_b)[0]


class HeuristicUpdater:
    """Leaky integration of the ROI part of the registered observation."""

    def __init__(self, alpha):
        self.alpha = alpha
        self.name = f"heuristic-{alpha:g}"

    def __call__(self, smap, obs, window):
        x0, x1, y0, y1 = window
        masked = np.zeros_like(obs)
        masked[:, x0:x1, y0:y1] = obs[:, x0:x1, y0:y1]
        return heuristic_update(smap, masked, self.alpha)


# -- episode runs -------------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    true: tuple
    est: tuple
    pos_err: float
    dir_err_deg: float
    source: str
    map_mse: float  # map entering this step, i.e. after `step` updates

    def row(self):
        return [self.step, *self.true, *self.est, repr(self.pos_err), repr(self.dir_err_deg),
                self.source, repr(self.map_mse)]


@dataclass
class EpisodeResult:
    key: tuple
    records: list
    final_mse: float
    mse_series: list  # map MSE after each update, steps 1..T
    final_map: SemanticMap

    @property
    def ape(self):
        return float(np.mean([r.pos_err for r in self.records]))

    @property
    def ade(self):
        return float(np.mean([r.dir_err_deg for r in self.records]))

    @property
    def inertial_fraction(self):
        return float(np.mean([r.source == INERTIAL for r in self.records]))

    def summary(self):
        return {"scene": self.key[0], "trajectory": self.key[1], "steps": len(self.records),
                "ape": self.ape, "ade": self.ade, "final_map_mse": self.final_mse,
                "inertial_fraction": self.inertial_fraction}


def run_episode(episode, updater, mode, fusion=None, eps=1e-4):
    """Localize and map through one episode from a zero map and a known start pose."""
    L, H, W = episode.shape
    R = episode.stacks.shape[1]
    h = episode.stacks.shape[-1]
    loc = Localizer(mode, episode, fusion)
    smap = SemanticMap.empty(L, H, W)
    records, series = [], []
    for t in range(episode.T):
        mse = map_mse(smap.grid, episode.truth, eps)
        step = loc.step(t, smap.grid)
        true = episode.poses[t]
        records.append(StepRecord(
            t, tuple(true), tuple(step.pose), position_error(step.pose, true),
            direction_error_deg(step.pose.r, true.r, R), step.source, mse,
        ))
        obs = project_observation(step.belief, episode.stacks[t])
        smap = updater(smap, obs, roi_mask(step.pose, h, H, W).window)
        series.append(map_mse(smap.grid, episode.truth, eps))
    return EpisodeResult(episode.key, records, series[-1], series, smap)


# -- datasets to episodes -----------------------------------------------------

def build_episode(ds, key, cfg, seed=0):
    rec = ds.scenes[key[0]]
    tr = rec.trajectories[key[1]]
    if cfg.levels != ds.levels:
        raise ContractError(f"dataset has {ds.levels} orientation levels, config {cfg.levels}")
    return prepare_episode(rec.scene, tr.poses, tr.imu_deltas, cfg, key, seed, ds.imu)


def _build_star(args):
    return build_episode(*args)


def build_episodes(ds, keys, cfg, seed=0, workers=1):
    """Episodes for ``keys`` in key order; ``workers`` > 1 uses a process pool."""
    jobs = [(ds, k, cfg, seed) for k in keys]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_build_star, jobs))
    return [_build_star(j) for j in jobs]


# -- splits -------------------------------------------------------------------

@dataclass
class ExperimentSplit:
    mode: str
    train: list  # (scene, trajectory) keys
    test: list

    def scenes(self, part):
        return sorted({k[0] for k in getattr(self, part)})


def make_split(ds, mode, test_scenes=None, seed=0):
    """intra-scene: last trajectory of every scene is held out.
    cross-scene: a seeded subset of whole scenes is held out (default a third)."""
    n = len(ds.scenes)
    if mode == "intra-scene":
        train, test = [], []
        for s, rec in enumerate(ds.scenes):
            m = len(rec.trajectories)
            if m < 2:
                raise ContractError("intra-scene splits need at least two trajectories per scene")
            train += [(s, j) for j in range(m - 1)]
            test.append((s, m - 1))
        return ExperimentSplit(mode, train, test)
    if mode == "cross-scene":
        if n < 2:
            raise ContractError("cross-scene splits need at least two scenes")
        k = test_scenes if test_scenes is not None else max(1, n // 3)
        if not 1 <= k < n:
            raise ContractError(f"cannot hold out {k} of {n} scenes")
        held = set(int(s) for s in np.random.default_rng(seed).permutation(n)[:k])
        keys = ds.keys()
        split = ExperimentSplit(mode, [q for q in keys if q[0] not in held],
                                [q for q in keys if q[0] in held])
        assert not set(split.scenes("train")) & set(split.scenes("test"))
        return split
    if mode == "all":
        return ExperimentSplit(mode, ds.keys(), ds.keys())
    raise ContractError(f"unknown split {mode!r}")


# -- map-construction study ---------------------------------------------------

def eval_map_methods(episodes, params, alphas=HEURISTIC_ALPHAS, eps=1e-4):
    """Teacher-forced map construction; per method, final-map MSE per episode
    and the mean per-step MSE series."""
    methods = []
    if params is not None:
        methods.append(ConvLstmUpdater(params))
    methods += [HeuristicUpdater(a) for a in alphas]
    table = {}
    for m in methods:
        runs = [run_episode(ep, m, "teacher", eps=eps) for ep in episodes]
        finals = [r.final_mse for r in runs]
        table[m.name] = {
            "mean": float(np.mean(finals)),
            "std": float(np.std(finals)),
            "per_episode": finals,
            "series": [float(v) for v in np.mean([r.mse_series for r in runs], axis=0)],
        }
    return table


def window_means(series, first=(1, 10), last=(21, 30)):
    """Mean of a 1-indexed per-step series over two inclusive step windows.

    A window that lies wholly beyond the end of the series gives None.
    """
    def mean(lo, hi):
        part = series[lo - 1:hi]
        return float(np.mean(part)) if len(part) else None

    return mean(*first), mean(*last)


__all__ = [
    "CSV_COLUMNS", "CSV_VERSION", "ConvLstmUpdater", "Episode", "EpisodeResult",
    "ExperimentSplit", "HEURISTIC_ALPHAS", "HeuristicUpdater", "PipelineConfig", "RUN_MODES",
    "StepRecord", "build_episode", "build_episodes", "direction_error_deg", "eval_map_methods",
    "make_split", "map_mse", "position_error", "run_episode", "window_means",
]
