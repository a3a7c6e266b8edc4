"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and the same per-element summation order, so the two backends agree
bit-for-bit on ``conv_valid``.
"""
import math

import numpy as np

FREE = -1
WALL = -2


def conv_valid(xp, w):
    """Valid cross-correlation: out[o,x,y] = sum_{c,i,j} xp[c,x+i,y+j] * w[o,c,i,j]."""
    cin, hp, wp = xp.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"channel mismatch: input {cin}, kernel {cin_w}")
    ho, wo = hp - kh + 1, wp - kw + 1
    out = np.zeros((cout, ho, wo), dtype=np.result_type(xp, w))
    for c in range(cin):
        for i in range(kh):
            for j in range(kw):
                out += w[:, c, i, j][:, None, None] * xp[None, c, i:i + ho, j:j + wo]
    return out


def conv_valid_grad_input(dout, w):
    """Adjoint of ``conv_valid`` in its input argument."""
    cout, ho, wo = dout.shape
    _, cin, kh, kw = w.shape
    dxp = np.zeros((cin, ho + kh - 1, wo + kw - 1), dtype=np.result_type(dout, w))
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + ho, j:j + wo] += np.tensordot(w[:, :, i, j], dout, axes=(0, 0))
    return dxp


def conv_valid_grad_weight(xp, dout, kh, kw):
    """Adjoint of ``conv_valid`` in its kernel argument."""
    cout, ho, wo = dout.shape
    cin = xp.shape[0]
    dw = np.zeros((cout, cin, kh, kw), dtype=np.result_type(xp, dout))
    for i in range(kh):
        for j in range(kw):
            dw[:, :, i, j] = np.tensordot(dout, xp[:, i:i + ho, j:j + wo], axes=([1, 2], [1, 2]))
    return dw


def trace_rays(ids, ox, oy, angles, max_range):
    """Grid traversal (Amanatides-Woo) of rays cast from a continuous origin.

    Cell (i, j) covers [i-0.5, i+0.5] x [j-0.5, j+0.5]. Non-free cells entered
    at distance <= max_range are recorded in traversal order; a ray stops after
    a wall cell or on leaving the grid.

    Returns (cells, t_in, t_out, count): cells is int64 (n, cap, 2), the
    distances are float (n, cap), count is int64 (n,).
    """
    H, W = ids.shape
    n = len(angles)
    cap = int(2 * math.ceil(max_range)) + 4
    cells = np.zeros((n, cap, 2), dtype=np.int64)
    t_in = np.zeros((n, cap))
    t_out = np.zeros((n, cap))
    count = np.zeros(n, dtype=np.int64)
    cx0 = int(round(ox))
    cy0 = int(round(oy))
    for k in range(n):
        dx = math.cos(angles[k])
        dy = math.sin(angles[k])
        cx, cy = cx0, cy0
        if dx > 0:
            step_x, tmax_x, tdelta_x = 1, (cx + 0.5 - ox) / dx, 1.0 / dx
        elif dx < 0:
            step_x, tmax_x, tdelta_x = -1, (ox - (cx - 0.5)) / -dx, -1.0 / dx
        else:
            step_x, tmax_x, tdelta_x = 0, math.inf, math.inf
        if dy > 0:
            step_y, tmax_y, tdelta_y = 1, (cy + 0.5 - oy) / dy, 1.0 / dy
        elif dy < 0:
            step_y, tmax_y, tdelta_y = -1, (oy - (cy - 0.5)) / -dy, -1.0 / dy
        else:
            step_y, tmax_y, tdelta_y = 0, math.inf, math.inf
        m = 0
        while True:
            if tmax_x < tmax_y:
                t_enter = tmax_x
                cx += step_x
                tmax_x += tdelta_x
            elif tmax_y < tmax_x:
                t_enter = tmax_y
                cy += step_y
                tmax_y += tdelta_y
            else:
                # exact lattice corner: pass diagonally, skipping the zero-length cell
                t_enter = tmax_x
                cx += step_x
                cy += step_y
                tmax_x += tdelta_x
                tmax_y += tdelta_y
            if t_enter > max_range or not (0 <= cx < H and 0 <= cy < W):
                break
            cid = ids[cx, cy]
            if cid != FREE:
                if m < cap:
                    cells[k, m, 0] = cx
                    cells[k, m, 1] = cy
                    t_in[k, m] = t_enter
                    t_out[k, m] = min(tmax_x, tmax_y)
                    m += 1
                if cid == WALL:
                    break
        count[k] = m
    return cells, t_in, t_out, count
