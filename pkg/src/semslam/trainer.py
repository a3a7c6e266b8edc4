"""KL map-reconstruction loss, backpropagation through time, gradient checks and training.

Pose beliefs are constants for differentiation: gradients reach the ConvLSTM
parameters only through the map-update chain.
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .episode import Localizer
from .errors import ContractError, TrainingError
from .map_updater import (
    ConvLstmParams,
    SemanticMap,
    convlstm_backward,
    convlstm_forward,
    project_observation,
    roi_mask,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 30
    batch: int = 1
    eps_smooth: float = 1e-4
    seed: int = 0
    teacher_forcing: bool = True
    kernel_size: int = 3
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ContractError("learning rate must be non-negative")
        if self.eps_smooth <= 0:
            raise ContractError("eps_smooth must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def smooth(a, eps):
    """Per-cell distribution over channels after adding eps everywhere."""
    a = a + eps
    return a / a.sum(axis=0, keepdims=True)


def kl_loss(truth, est, eps=1e-4):
    """Sum over cells of KL(truth || est), both eps-smoothed into distributions over channels."""
    if eps <= 0:
        raise ContractError("eps must be positive")
    p = smooth(np.asarray(truth, dtype=np.float64), eps)
    q = smooth(np.asarray(est, dtype=np.float64), eps)
    return float(np.sum(p * (np.log(p) - np.log(q))))


class _KL:
    """kl_loss and its gradient in ``est`` against a fixed target."""

    def __init__(self, truth, eps):
        self.eps = eps
        self.p = smooth(truth, eps)
        self.p_logp = float(np.sum(self.p * np.log(self.p)))

    def value_and_grad(self, est):
        a = est + self.eps
        s = a.sum(axis=0, keepdims=True)
        value = self.p_logp - float(np.sum(self.p * (np.log(a) - np.log(s))))
        # p sums to one per cell
        grad = 1.0 / s - self.p / a
        return value, grad

    def terms(self, est):
        """Per-entry loss contributions in the dtype of ``est``; they sum to the loss."""
        a = est + self.eps
        s = a.sum(axis=0, keepdims=True)
        p = self.p.astype(a.dtype, copy=False)
        return p * (np.log(p) - np.log(a) + np.log(s))


@dataclass
class Rollout:
    loss: float
    maps: list
    caches: list
    dloss: list
    steps: list  # StepPose per step
    terms: list  # per-entry loss contributions per step (keep=False only)


def rollout(params, episode, cfg, mode="teacher", fusion=None, frozen=None, keep=True, h=None):
    """Run the map-update chain over an episode; returns the mean-over-steps KL loss."""
    T = episode.T
    L, H, W = episode.shape
    h = h or episode.stacks.shape[-1]
    kl = _KL(episode.truth, cfg.eps_smooth)
    loc = Localizer(mode, episode, fusion)
    w_b = params.stacked()
    smap = SemanticMap.empty(L, H, W, params.wx.dtype)
    total = 0.0
    maps, caches, dloss, steps, terms = [], [], [], [], []
    for t in range(T):
        step = frozen[t] if frozen is not None else loc.step(t, smap.grid)
        obs = project_observation(step.belief, episode.stacks[t])
        window = roi_mask(step.pose, h, H, W).window
        smap, cache = convlstm_forward(smap, obs, window, params, w_b)
        if keep:
            value, grad = kl.value_and_grad(smap.grid)
            caches.append(cache)
            dloss.append(grad)
        else:
            terms.append(kl.terms(smap.grid))
            value = terms[-1].sum()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at step {t}", step=t)
        total += value
        maps.append(smap)
        steps.append(step)
    return Rollout(total / T, maps, caches, dloss, steps, terms)


def backprop(params, ro):
    """Gradients of ``ro.loss`` w.r.t. every parameter, by BPTT over the cached chain."""
    grads = ConvLstmParams.zeros(params.channels, params.ksize)
    w_b = params.stacked()
    T = len(ro.caches)
    shape = ro.maps[0].grid.shape
    dgrid = np.zeros(shape)
    dcell = np.zeros(shape)
    for t in range(T - 1, -1, -1):
        dgrid += ro.dloss[t] / T
        convlstm_backward(ro.caches[t], dgrid, dcell, params, grads, w_b)
    for name, a in zip(("wx", "wh", "b"), grads.arrays()):
        if not np.all(np.isfinite(a)):
            raise TrainingError(f"non-finite gradient in {name}")
    return grads


def rollout_and_backprop(episode, params, cfg, mode=None, fusion=None, frozen=None):
    """(loss, grads) for one episode; pose beliefs are held constant."""
    if mode is None:
        mode = "teacher" if cfg.teacher_forcing else "visual-inertial"
    if mode == "visual-inertial" and fusion is None:
        raise ContractError("visual-inertial rollouts need a FusionConfig")
    ro = rollout(params, episode, cfg, mode, fusion, frozen)
    return ro.loss, backprop(params, ro), ro


@dataclass
class GradReport:
    errors: dict  # block name -> max relative error
    fd_step: float
    checked: dict = field(default_factory=dict)  # block name -> coordinates checked

    @property
    def max_error(self):
        return max(self.errors.values())

    def passed(self, tol=1e-4):
        return self.max_error < tol


def rel_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


PRECISIONS = {"double": np.float64, "extended": np.longdouble}


def grad_check(params, episode, fd_step=1e-5, cfg=None, coords=100, seed=0, mode="teacher",
               fusion=None, include_zero=True, precision="double"):
    """Central differences against analytic gradients on a random coordinate subset.

    Runs at ``params`` and, when ``include_zero``, again at the all-zero
    parameter point. Beliefs are frozen to those of the analytic pass at each
    point. The difference f(θ+δ) − f(θ−δ) is summed entry by entry over the
    per-step loss contributions, so entries the perturbation leaves untouched
    cancel exactly instead of adding rounding noise. ``precision='extended'``
    evaluates the perturbed rollouts in long double, which lowers the floor
    further.
    """
    if not 1e-7 <= fd_step <= 1e-3:
        raise ContractError(f"fd step {fd_step} outside [1e-7, 1e-3]")
    if precision not in PRECISIONS:
        raise ContractError(f"unknown precision {precision!r}")
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(seed)
    points = [params.copy()]
    if include_zero:
        points.append(ConvLstmParams.zeros(params.channels, params.ksize))
    errors, checked = {}, {}
    for point in points:
        _, grads, ro = rollout_and_backprop(episode, point, cfg, mode, fusion)
        frozen = ro.steps
        analytic = grads.blocks()
        probe = point.astype(PRECISIONS[precision])
        for name, block in probe.blocks().items():
            n = block.size
            idx = rng.choice(n, size=min(coords, n), replace=False)
            flat = block.reshape(-1)
            worst = errors.get(name, 0.0)
            for j in idx:
                orig = flat[j]
                flat[j] = orig + fd_step
                up = rollout(probe, episode, cfg, frozen=frozen, keep=False).terms
                flat[j] = orig - fd_step
                down = rollout(probe, episode, cfg, frozen=frozen, keep=False).terms
                flat[j] = orig
                diff = sum(np.sum(u - d) for u, d in zip(up, down)) / len(up)
                fd = float(diff / (2 * fd_step))
                worst = max(worst, rel_error(analytic[name].reshape(-1)[j], fd))
            errors[name] = worst
            checked[name] = checked.get(name, 0) + len(idx)
    return GradReport(errors, fd_step, checked)


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for a, g in zip(params.arrays(), grads.arrays()):
            a -= self.lr * g


def batch_gradients(episodes, params, cfg, mode=None, fusion=None):
    """Summed loss and summed gradients over ``episodes``, reduced in order."""
    total = 0.0
    grads = ConvLstmParams.zeros(params.channels, params.ksize)
    losses = []
    for ep in episodes:
        loss, g, _ = rollout_and_backprop(ep, params, cfg, mode, fusion)
        losses.append(loss)
        total += loss
        for acc, part in zip(grads.arrays(), g.arrays()):
            acc += part
    return total, grads, losses


def evaluate_loss(episodes, params, cfg, mode=None, fusion=None):
    if mode is None:
        mode = "teacher" if cfg.teacher_forcing else "visual-inertial"
    losses = [rollout(params, ep, cfg, mode, fusion, keep=False).loss for ep in episodes]
    return float(np.mean(losses)) if losses else float("nan")


@dataclass
class TrainResult:
    params: ConvLstmParams
    losses: list  # mean training loss per epoch
    heldout: list  # mean held-out loss per epoch (empty without a test set)
    initial_loss: float


def train(episodes, params0, cfg, test=None, mode=None, fusion=None, on_epoch=None):
    """Optimise ConvLSTM parameters over shuffled episodes.

    Each epoch's reported loss is the mean, over episodes in dataset order, of
    the loss measured when that episode was visited.
    """
    if not episodes:
        raise ContractError("training needs at least one episode")
    params = params0.copy()
    opt = (Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
           if cfg.optimizer == "adam" else Sgd(params, cfg.learning_rate))
    initial = evaluate_loss(episodes, params, cfg, mode, fusion)
    losses, heldout = [], []
    n = len(episodes)
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        per_episode = np.zeros(n)
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            _, grads, batch_losses = batch_gradients([episodes[i] for i in idx], params, cfg,
                                                     mode, fusion)
            per_episode[idx] = batch_losses
            scale = 1.0 / len(idx)
            for g in grads.arrays():
                g *= scale
            opt.step(params, grads)
        mean = float(per_episode.mean())
        if not np.isfinite(mean) or mean > cfg.divergence_factor * initial:
            raise TrainingError(
                f"training diverged at epoch {epoch}: loss {mean:.4g} vs initial {initial:.4g}",
                diagnostics={"epoch": epoch, "loss": mean, "initial": initial, "curve": losses},
            )
        losses.append(mean)
        if test:
            heldout.append(evaluate_loss(test, params, cfg, mode, fusion))
        log.info("epoch %d loss %.6f%s", epoch, mean,
                 f" heldout {heldout[-1]:.6f}" if test else "")
        if on_epoch is not None:
            on_epoch(epoch + 1, params, mean)
    return TrainResult(params, losses, heldout, initial)
