import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semslam import _kernels_py, kernels
from semslam._kernels_py import FREE, WALL

BACKENDS = kernels.available_backends()


def test_default_backend_is_available():
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_compiled_backend_routes_gradients_to_numpy():
    impl = kernels.get_backend("compiled")
    assert impl.conv_valid is kernels.raw_backend("compiled").conv_valid
    for name in kernels.BLAS_ROUTED:
        assert getattr(impl, name) is getattr(_kernels_py, name)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("gpu")


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), cin=st.integers(1, 5), cout=st.integers(1, 6),
       ho=st.integers(1, 9), wo=st.integers(1, 9), k=st.sampled_from([1, 3, 5]))
def test_backends_bit_identical(seed, cin, cout, ho, wo, k):
    rng = np.random.default_rng(seed)
    xp = rng.standard_normal((cin, ho + k - 1, wo + k - 1))
    w = rng.standard_normal((cout, cin, k, k))
    dout = rng.standard_normal((cout, ho, wo))
    a, b = (kernels.raw_backend(n) for n in BACKENDS[:2])
    assert np.array_equal(a.conv_valid(xp, w), b.conv_valid(xp, w))
    np.testing.assert_allclose(a.conv_valid_grad_input(dout, w), b.conv_valid_grad_input(dout, w),
                               rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(a.conv_valid_grad_weight(xp, dout, k, k),
                               b.conv_valid_grad_weight(xp, dout, k, k), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("name", BACKENDS)
def test_conv_gradients_are_adjoints(name):
    impl = kernels.raw_backend(name)
    rng = np.random.default_rng(3)
    xp = rng.standard_normal((3, 8, 7))
    w = rng.standard_normal((4, 3, 3, 3))
    dout = rng.standard_normal((4, 6, 5))
    y = impl.conv_valid(xp, w)
    assert y.shape == dout.shape
    ref = np.vdot(y, dout)
    assert np.vdot(xp, impl.conv_valid_grad_input(dout, w)) == pytest.approx(ref, rel=1e-12)
    assert np.vdot(w, impl.conv_valid_grad_weight(xp, dout, 3, 3)) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_conv_channel_mismatch(name):
    with pytest.raises(ValueError):
        kernels.get_backend(name).conv_valid(np.zeros((2, 3, 3)), np.zeros((1, 3, 1, 1)))


def test_numpy_kernel_keeps_extended_precision():
    xp = np.ones((1, 3, 3), dtype=np.longdouble)
    w = np.ones((1, 1, 3, 3), dtype=np.longdouble)
    assert _kernels_py.conv_valid(xp, w).dtype == np.longdouble


def _room(H=9, W=9):
    ids = np.full((H, W), FREE, dtype=np.int64)
    ids[0, :] = ids[-1, :] = ids[:, 0] = ids[:, -1] = WALL
    return ids


def _march(ids, ox, oy, angle, max_range, step=1e-4):
    """Dense ray marching reference: non-free cells in order of first entry."""
    H, W = ids.shape
    t = np.arange(0.0, max_range, step)
    cx = np.floor(ox + t * math.cos(angle) + 0.5).astype(int)
    cy = np.floor(oy + t * math.sin(angle) + 0.5).astype(int)
    inside = (cx >= 0) & (cx < H) & (cy >= 0) & (cy < W)
    if not inside.all():
        stop = int(np.argmin(inside))
        cx, cy = cx[:stop], cy[:stop]
    seen = []
    for x, y in zip(cx.tolist(), cy.tolist()):
        if ids[x, y] != FREE and (x, y) not in seen:
            seen.append((x, y))
            if ids[x, y] == WALL:
                break
    return seen


@pytest.mark.parametrize("name", BACKENDS)
def test_trace_rays_straight_ahead(name):
    ids = _room()
    ids[6, 4] = 0
    cells, t_in, t_out, count = kernels.get_backend(name).trace_rays(
        ids, 4.0, 4.0, np.array([0.0]), 10.0)
    assert count[0] == 2
    assert cells[0, 0].tolist() == [6, 4] and cells[0, 1].tolist() == [8, 4]
    assert t_in[0, 0] == pytest.approx(1.5) and t_out[0, 0] == pytest.approx(2.5)


@pytest.mark.parametrize("name", BACKENDS)
def test_trace_rays_respects_range(name):
    ids = _room()
    ids[7, 4] = 0
    _, _, _, count = kernels.get_backend(name).trace_rays(ids, 4.0, 4.0, np.array([0.0]), 2.4)
    assert count[0] == 0


@pytest.mark.parametrize("name", BACKENDS)
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_trace_rays_matches_marching(name, seed):
    rng = np.random.default_rng(seed)
    ids = _room(11, 11)
    for _ in range(12):
        x, y = rng.integers(1, 10, size=2)
        ids[x, y] = int(rng.integers(0, 3))
    ids[5, 5] = FREE
    angles = rng.uniform(-math.pi, math.pi, 6)
    cells, _, _, count = kernels.get_backend(name).trace_rays(ids, 5.0, 5.0, angles, 7.0)
    for k, a in enumerate(angles):
        got = [tuple(c) for c in cells[k, :count[k]].tolist()]
        ref = _march(ids, 5.0, 5.0, a, 7.0)
        # equal unless some chord is shorter than the marching step
        assert got == ref


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_trace_rays_backends_agree():
    rng = np.random.default_rng(11)
    ids = _room(15, 15)
    for _ in range(30):
        x, y = rng.integers(1, 14, size=2)
        ids[x, y] = int(rng.integers(0, 5))
    ids[7, 7] = FREE
    angles = np.linspace(-math.pi, math.pi, 360, endpoint=False)
    a, b = (kernels.get_backend(n).trace_rays(ids, 7.0, 7.0, angles, 7.5) for n in BACKENDS[:2])
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)
