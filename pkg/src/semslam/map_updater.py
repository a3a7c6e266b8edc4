"""Registering observations into the world map and fusing them with a ConvLSTM cell.

The map doubles as the ConvLSTM hidden state; a co-located cell-state tensor
carries the recurrent memory. Only cells inside the ROI window are touched.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError
from .tensor_core import adjoint_project, softmax_per_cell

GATES = ("input", "forget", "output", "candidate")
PARTS = ("obs", "hidden", "bias")


@dataclass
class SemanticMap:
    grid: np.ndarray  # (L, H, W) class evidence
    cell: np.ndarray  # (L, H, W) ConvLSTM memory

    @classmethod
    def empty(cls, L, H, W, dtype=np.float64):
        return cls(np.zeros((L, H, W), dtype), np.zeros((L, H, W), dtype))

    def copy(self):
        return SemanticMap(self.grid.copy(), self.cell.copy())


@dataclass
class ConvLstmParams:
    """Gate kernels over the observation (wx) and hidden map (wh), plus biases.

    wx, wh: (4, L, L, k, k) in GATES order; b: (4, L).
    """

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        g, L, L2, k, k2 = self.wx.shape
        if g != 4 or L != L2 or k != k2 or k % 2 == 0:
            raise ContractError(f"bad observation kernel shape {self.wx.shape}")
        if self.wh.shape != self.wx.shape or self.b.shape != (4, L):
            raise ContractError("gate kernel and bias shapes disagree")

    @property
    def channels(self):
        return self.wx.shape[1]

    @property
    def ksize(self):
        return self.wx.shape[3]

    @classmethod
    def initialize(cls, L, k=3, seed=0):
        """Uniform in +-1/sqrt(fan_in); forget-gate bias shifted by +1."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(2 * L * k * k)
        wx = rng.uniform(-bound, bound, (4, L, L, k, k))
        wh = rng.uniform(-bound, bound, (4, L, L, k, k))
        b = rng.uniform(-bound, bound, (4, L))
        b[GATES.index("forget")] += 1.0
        return cls(wx, wh, b)

    @classmethod
    def zeros(cls, L, k=3):
        return cls(np.zeros((4, L, L, k, k)), np.zeros((4, L, L, k, k)), np.zeros((4, L)))

    def copy(self):
        return ConvLstmParams(self.wx.copy(), self.wh.copy(), self.b.copy())

    def astype(self, dtype):
        return ConvLstmParams(self.wx.astype(dtype), self.wh.astype(dtype), self.b.astype(dtype))

    def blocks(self):
        """Views of every per-gate parameter block, keyed 'gate.part'."""
        out = {}
        for g, name in enumerate(GATES):
            out[f"{name}.obs"] = self.wx[g]
            out[f"{name}.hidden"] = self.wh[g]
            out[f"{name}.bias"] = self.b[g]
        return out

    def arrays(self):
        return (self.wx, self.wh, self.b)

    def stacked(self):
        """Combined kernel (4L, 2L, k, k) over [obs; hidden] and bias (4L,)."""
        L, k = self.channels, self.ksize
        w = np.concatenate([self.wx, self.wh], axis=2).reshape(4 * L, 2 * L, k, k)
        return np.ascontiguousarray(w), self.b.reshape(4 * L)


@dataclass
class RoiMask:
    grid: np.ndarray  # (H, W) of 0/1
    window: tuple  # (x0, x1, y0, y1), half-open; empty when x0 == x1

    @classmethod
    def full(cls, H, W):
        return cls(np.ones((H, W)), (0, H, 0, W))

    @classmethod
    def empty(cls, H, W):
        return cls(np.zeros((H, W)), (0, 0, 0, 0))


def roi_mask(pose, h, H, W):
    """h x h square around ``pose`` clipped to the map."""
    if h % 2 == 0:
        raise ContractError(f"ROI size must be odd, got {h}")
    c = h // 2
    x0, x1 = max(pose.x - c, 0), min(pose.x + c + 1, H)
    y0, y1 = max(pose.y - c, 0), min(pose.y + c + 1, W)
    grid = np.zeros((H, W))
    grid[x0:x1, y0:y1] = 1.0
    return RoiMask(grid, (x0, x1, y0, y1))


def project_observation(belief, stack):
    """Allocentric observation: the rotation stack stamped at every pose, weighted by belief."""
    nz = np.flatnonzero(belief)
    if len(nz) == 1 and belief.flat[nz[0]] == 1.0:
        r, x, y = np.unravel_index(nz[0], belief.shape)
        return _stamp(stack[r], x, y, belief.shape[1:])
    return adjoint_project(belief, stack)


def _stamp(kernel, x, y, shape):
    L, h, _ = kernel.shape
    H, W = shape
    c = h // 2
    out = np.zeros((L, H, W), dtype=kernel.dtype)
    x0, x1 = max(x - c, 0), min(x + c + 1, H)
    y0, y1 = max(y - c, 0), min(y + c + 1, W)
    out[:, x0:x1, y0:y1] = kernel[:, x0 - x + c:x1 - x + c, y0 - y + c:y1 - y + c]
    return out


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _padded_window(a, window, p):
    """a[:, x0-p:x1+p, y0-p:y1+p] with zeros beyond the map edge."""
    x0, x1, y0, y1 = window
    C, H, W = a.shape
    out = np.zeros((C, x1 - x0 + 2 * p, y1 - y0 + 2 * p), dtype=a.dtype)
    sx0, sx1 = max(x0 - p, 0), min(x1 + p, H)
    sy0, sy1 = max(y0 - p, 0), min(y1 + p, W)
    out[:, sx0 - (x0 - p):sx1 - (x0 - p), sy0 - (y0 - p):sy1 - (y0 - p)] = a[:, sx0:sx1, sy0:sy1]
    return out


@dataclass
class StepCache:
    window: tuple
    xp: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c_prev: np.ndarray
    tanh_c: np.ndarray
    soft: np.ndarray


def convlstm_forward(smap, obs, window, params, w_b=None):
    """One ConvLSTM step restricted to ``window``; returns (new map, cache)."""
    x0, x1, y0, y1 = window
    if x1 <= x0 or y1 <= y0:
        return smap.copy(), None
    L = params.channels
    p = params.ksize // 2
    w, b = w_b if w_b is not None else params.stacked()
    xp = np.concatenate([_padded_window(obs, window, p), _padded_window(smap.grid, window, p)])
    z = kernels.conv_valid_any(xp.astype(w.dtype, copy=False), w) + b[:, None, None]
    i = _sigmoid(z[:L])
    f = _sigmoid(z[L:2 * L])
    o = _sigmoid(z[2 * L:3 * L])
    g = np.tanh(z[3 * L:])
    c_prev = smap.cell[:, x0:x1, y0:y1].copy()
    c_new = f * c_prev + i * g
    tanh_c = np.tanh(c_new)
    soft = softmax_per_cell(o * tanh_c)
    new = smap.copy()
    new.grid[:, x0:x1, y0:y1] = soft
    new.cell[:, x0:x1, y0:y1] = c_new
    return new, StepCache(window, xp, i, f, o, g, c_prev, tanh_c, soft)


def convlstm_backward(cache, dgrid, dcell, params, grads, w_b=None):
    """Backpropagate one step.

    ``dgrid``/``dcell`` are gradients w.r.t. the step's output map and cell
    state; they are overwritten with the gradients w.r.t. its inputs. Parameter
    gradients are accumulated into ``grads`` (a ConvLstmParams of zeros).
    """
    if cache is None:
        return
    x0, x1, y0, y1 = cache.window
    L = params.channels
    k = params.ksize
    p = k // 2
    w, _ = w_b if w_b is not None else params.stacked()
    dsoft = dgrid[:, x0:x1, y0:y1]
    dh = cache.soft * (dsoft - (dsoft * cache.soft).sum(axis=0, keepdims=True))
    do = dh * cache.tanh_c
    dc = dcell[:, x0:x1, y0:y1] + dh * cache.o * (1.0 - cache.tanh_c ** 2)
    dz = np.empty((4 * L,) + dc.shape[1:])
    dz[:L] = dc * cache.g * cache.i * (1.0 - cache.i)
    dz[L:2 * L] = dc * cache.c_prev * cache.f * (1.0 - cache.f)
    dz[2 * L:3 * L] = do * cache.o * (1.0 - cache.o)
    dz[3 * L:] = dc * cache.i * (1.0 - cache.g ** 2)
    dw = kernels.conv_valid_grad_weight(cache.xp, dz, k, k).reshape(4, L, 2 * L, k, k)
    grads.wx += dw[:, :, :L]
    grads.wh += dw[:, :, L:]
    grads.b += dz.sum(axis=(1, 2)).reshape(4, L)
    dxp = kernels.conv_valid_grad_input(dz, w)
    dcell[:, x0:x1, y0:y1] = dc * cache.f
    dgrid[:, x0:x1, y0:y1] = 0.0
    H, W = dgrid.shape[1:]
    sx0, sx1 = max(x0 - p, 0), min(x1 + p, H)
    sy0, sy1 = max(y0 - p, 0), min(y1 + p, W)
    dgrid[:, sx0:sx1, sy0:sy1] += dxp[L:, sx0 - (x0 - p):sx1 - (x0 - p), sy0 - (y0 - p):sy1 - (y0 - p)]


def convlstm_update(smap, obs, mask, params):
    """Map after one ConvLSTM fusion step inside ``mask``; untouched elsewhere."""
    if obs.shape != smap.grid.shape:
        raise ContractError(f"observation {obs.shape} does not match map {smap.grid.shape}")
    new, _ = convlstm_forward(smap, obs, mask.window, params)
    return new


def heuristic_update(smap, obs, alpha):
    """Leaky integration toward ``obs`` wherever it is positive."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    grid = np.where(obs > 0, (1.0 - alpha) * smap.grid + alpha * obs, smap.grid)
    return SemanticMap(grid, smap.cell.copy())
