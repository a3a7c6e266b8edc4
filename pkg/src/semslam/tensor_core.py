"""Dense multi-channel grid arithmetic.

Grids are float64 numpy arrays shaped (channels, height, width); kernel stacks
are shaped (R, L, h, h) with h odd. Correlation is cross-correlation (no
kernel flip) with zero padding of h//2, so outputs keep the map's extent.
"""
import math

import numpy as np

from . import kernels
from .errors import ContractError

# source coordinates closer than this to an integer are snapped onto it, which
# makes rotations by multiples of pi/2 exact permutations
_SNAP = 1e-9


def as_grid(a, ndim=3):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ContractError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def _check_stack(map_channels, stack):
    if stack.ndim != 4:
        raise ContractError(f"kernel stack must be (R, L, h, h), got {stack.shape}")
    R, L, kh, kw = stack.shape
    if kh != kw or kh % 2 == 0:
        raise ContractError(f"kernel must be square with odd size, got {kh}x{kw}")
    if L != map_channels:
        raise ContractError(f"map has {map_channels} channels, kernels have {L}")


def correlate(grid, stack):
    """out[r, x, y] = sum_{l,i,j} grid[l, x+i-c, y+j-c] * stack[r, l, i, j], c = h//2."""
    grid = as_grid(grid)
    stack = as_grid(stack, 4)
    _check_stack(grid.shape[0], stack)
    c = stack.shape[2] // 2
    padded = np.pad(grid, ((0, 0), (c, c), (c, c)))
    return kernels.conv_valid(padded, stack)


def adjoint_project(belief, stack):
    """Transposed correlation: stamps every kernel slice at every pose, weighted by belief.

    This is the exact linear adjoint of ``correlate`` in its grid argument.
    """
    belief = as_grid(belief)
    stack = as_grid(stack, 4)
    if belief.shape[0] != stack.shape[0]:
        raise ContractError(f"belief has {belief.shape[0]} rotations, stack has {stack.shape[0]}")
    _check_stack(stack.shape[1], stack)
    c = stack.shape[2] // 2
    padded = kernels.conv_valid_grad_input(belief, stack)
    H, W = belief.shape[1:]
    return np.ascontiguousarray(padded[:, c:c + H, c:c + W])


def _floating(t):
    t = np.asarray(t)
    return t if np.issubdtype(t.dtype, np.floating) else t.astype(np.float64)


def softmax_all(t):
    """Softmax over every entry of ``t`` jointly."""
    t = _floating(t)
    e = np.exp(t - t.max())
    return e / e.sum()


def softmax_per_cell(t):
    """Softmax over the channel axis (axis 0) independently at each cell."""
    t = _floating(t)
    e = np.exp(t - t.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def _snap(v):
    r = np.rint(v)
    return np.where(np.abs(v - r) < _SNAP, r, v)


def rotate_bilinear(obs, angle):
    """Rotate an (L, h, h) grid by ``angle`` radians about its center cell.

    Inverse mapping: the output offset d samples the source at rot(-angle) d,
    so content at egocentric offset e lands at rot(angle) e. Bilinear
    interpolation; source samples outside the grid read 0.
    """
    obs = as_grid(obs)
    L, n, m = obs.shape
    if n != m:
        raise ContractError(f"rotation needs a square grid, got {n}x{m}")
    if angle == 0.0:
        return obs.copy()
    c = (n - 1) / 2.0
    ca, sa = math.cos(angle), math.sin(angle)
    di, dj = np.meshgrid(np.arange(n) - c, np.arange(n) - c, indexing="ij")
    sx = _snap(c + ca * di + sa * dj)
    sy = _snap(c - sa * di + ca * dj)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros_like(obs)
    for ox, oy, wt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + ox
        yi = y0 + oy
        ok = (xi >= 0) & (xi < n) & (yi >= 0) & (yi < n) & (wt != 0)
        out[:, ok] += wt[ok] * obs[:, xi[ok], yi[ok]]
    return out
