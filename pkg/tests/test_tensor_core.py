import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semslam.errors import ContractError
from semslam.tensor_core import (
    adjoint_project,
    correlate,
    rotate_bilinear,
    softmax_all,
    softmax_per_cell,
)

from oracles import adjoint_ref, correlate_ref, rotate_ref


def _instance(seed, L, H, W, R, h):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((L, H, W)), rng.standard_normal((R, L, h, h))


@pytest.mark.parametrize("L,H,W,R,h", [(1, 1, 1, 1, 1), (2, 5, 7, 3, 3), (4, 9, 9, 4, 3),
                                       (3, 6, 4, 2, 5), (2, 3, 3, 1, 7)])
def test_correlate_matches_nested_loops_exactly(backend, L, H, W, R, h):
    m, k = _instance(L * 100 + H, L, H, W, R, h)
    assert np.array_equal(correlate(m, k), correlate_ref(m, k))


@pytest.mark.parametrize("L,H,W,R,h", [(1, 4, 4, 1, 3), (2, 5, 7, 3, 3), (3, 6, 4, 2, 5)])
def test_adjoint_matches_nested_loops(backend, L, H, W, R, h):
    rng = np.random.default_rng(7)
    p = rng.standard_normal((R, H, W))
    k = rng.standard_normal((R, L, h, h))
    np.testing.assert_allclose(adjoint_project(p, k), adjoint_ref(p, k), rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), L=st.integers(1, 4), H=st.integers(1, 12),
       W=st.integers(1, 12), R=st.integers(1, 8), hh=st.integers(0, 3))
def test_adjoint_identity(seed, L, H, W, R, hh):
    h = 2 * hh + 1
    m, k = _instance(seed, L, H, W, R, h)
    p = np.random.default_rng(seed + 1).standard_normal((R, H, W))
    lhs = np.vdot(correlate(m, k), p)
    rhs = np.vdot(m, adjoint_project(p, k))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs), abs(rhs))


def test_correlate_single_cell_picks_kernel_entry():
    m = np.zeros((1, 5, 5))
    m[0, 2, 3] = 1.0
    k = np.arange(9.0).reshape(1, 1, 3, 3)
    out = correlate(m, k)
    # out[x, y] = k[2-x+1, 3-y+1]
    assert out[0, 2, 3] == k[0, 0, 1, 1]
    assert out[0, 1, 2] == k[0, 0, 2, 2]
    assert out[0, 3, 4] == k[0, 0, 0, 0]


def test_contract_errors():
    with pytest.raises(ContractError):
        correlate(np.zeros((2, 3, 3)), np.zeros((1, 3, 3, 3)))
    with pytest.raises(ContractError):
        correlate(np.zeros((1, 3, 3)), np.zeros((1, 1, 2, 2)))
    with pytest.raises(ContractError):
        adjoint_project(np.zeros((2, 3, 3)), np.zeros((1, 1, 3, 3)))


def test_softmax_per_cell_uniform_on_zeros():
    out = softmax_per_cell(np.zeros((2, 3, 4)))
    assert np.all(out == 0.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(0.1, 800.0))
def test_softmax_normalizes_and_is_shift_invariant(seed, scale):
    t = np.random.default_rng(seed).standard_normal((3, 4, 5)) * scale
    a = softmax_all(t)
    assert abs(a.sum() - 1.0) < 1e-12 and np.all(a >= 0)
    np.testing.assert_allclose(softmax_all(t + 7.5), a, rtol=1e-9, atol=1e-300)
    c = softmax_per_cell(t)
    np.testing.assert_allclose(c.sum(axis=0), 1.0, atol=1e-12)


def test_softmax_argmax_preserved():
    t = np.random.default_rng(3).standard_normal((4, 6, 6))
    assert np.argmax(softmax_all(t)) == np.argmax(t)


def test_rotate_zero_is_copy():
    obs = np.random.default_rng(0).random((2, 5, 5))
    out = rotate_bilinear(obs, 0.0)
    assert np.array_equal(out, obs) and out is not obs


def test_rotate_quarter_turn_moves_ahead_to_left():
    # content at egocentric offset e lands at rot(angle) e: (+2, 0) -> (0, +2)
    obs = np.zeros((1, 5, 5))
    obs[0, 4, 2] = 1.0
    out = rotate_bilinear(obs, math.pi / 2)
    expect = np.zeros((1, 5, 5))
    expect[0, 2, 4] = 1.0
    assert np.array_equal(out, expect)


@pytest.mark.parametrize("quarter", [1, 2, 3])
def test_rotate_quarter_turns_are_exact_permutations(quarter):
    obs = np.random.default_rng(quarter).random((3, 7, 7))
    out = rotate_bilinear(obs, quarter * math.pi / 2)
    assert np.array_equal(out, np.rot90(obs, k=quarter, axes=(1, 2)))


def test_rotate_full_turn_by_quarters_is_identity():
    obs = np.random.default_rng(9).random((2, 9, 9))
    out = obs
    for _ in range(4):
        out = rotate_bilinear(out, math.pi / 2)
    assert np.array_equal(out, obs)


@pytest.mark.parametrize("angle", [0.3, math.pi / 4, 2.0, -1.1])
def test_rotate_matches_per_pixel_reference(angle):
    obs = np.random.default_rng(5).random((2, 7, 7))
    np.testing.assert_allclose(rotate_bilinear(obs, angle), rotate_ref(obs, angle),
                               rtol=1e-12, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(angle=st.floats(-7.0, 7.0), seed=st.integers(0, 1000))
def test_rotate_is_linear_and_center_preserving(angle, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, 2, 7, 7))
    lhs = rotate_bilinear(2.0 * a - b, angle)
    rhs = 2.0 * rotate_bilinear(a, angle) - rotate_bilinear(b, angle)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    center = np.zeros((1, 7, 7))
    center[0, 3, 3] = 1.0
    assert rotate_bilinear(center, angle)[0, 3, 3] == pytest.approx(1.0)


def test_rotate_mass_never_grows_beyond_interpolation_bound():
    obs = np.random.default_rng(2).random((1, 11, 11))
    out = rotate_bilinear(obs, math.pi / 4)
    # every output pixel is a convex combination of at most four inputs
    assert out.max() <= obs.max() + 1e-12
    assert out.min() >= 0.0
