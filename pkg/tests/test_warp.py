import math

import numpy as np
import pytest

from chromawarp.core import Rng, UsageError, grad_check
from chromawarp.warp import (
    BilinearWarpOp, FlowField, TanhOp, apply_flow, init_flow, restrict_flow,
)


def _brute_force_sample(x, i, j, di, dj):
    """Scalar four-corner interpolation with border clamp, kept independent
    of the vectorized implementation."""
    h, w = x.shape
    si = min(max(i + di, 0.0), h - 1.0)
    sj = min(max(j + dj, 0.0), w - 1.0)
    i0, j0 = int(math.floor(si)), int(math.floor(sj))
    ai, aj = si - i0, sj - j0
    i1, j1 = min(i0 + 1, h - 1), min(j0 + 1, w - 1)
    return ((1 - ai) * (1 - aj) * x[i0, j0] + (1 - ai) * aj * x[i0, j1]
            + ai * (1 - aj) * x[i1, j0] + ai * aj * x[i1, j1])


def test_init_flow_zero_scale_is_zero():
    f = init_flow(4, 5, Rng(0), scale=0.0)
    assert np.array_equal(f.displacements, np.zeros((2, 4, 5)))


def test_init_flow_range_and_reproducibility():
    f1 = init_flow(8, 8, Rng(123), scale=0.01)
    f2 = init_flow(8, 8, Rng(123), scale=0.01)
    assert np.array_equal(f1.displacements, f2.displacements)
    assert np.abs(f1.displacements).max() <= 0.01
    f3 = init_flow(8, 8, Rng(124), scale=0.01)
    assert not np.array_equal(f1.displacements, f3.displacements)


def test_init_flow_validation():
    with pytest.raises(UsageError):
        init_flow(0, 5, Rng(0))
    with pytest.raises(UsageError):
        init_flow(5, 5, Rng(0), scale=-0.1)
    with pytest.raises(UsageError):
        FlowField(np.full((2, 3, 3), np.nan))


def test_restrict_flow_tanh_values():
    f = FlowField(np.array([[[0.0, 1.0]], [[100.0, -100.0]]]))
    r = restrict_flow(f).displacements
    assert r[0, 0, 0] == 0.0
    assert r[0, 0, 1] == pytest.approx(math.tanh(1.0), abs=1e-12)
    assert abs(r[1, 0, 0] - 1.0) < 1e-6 and abs(r[1, 0, 1] + 1.0) < 1e-6
    op = TanhOp()
    op.forward(np.array([100.0]))
    assert op.backward(np.array([1.0]))[0] < 1e-6


def test_zero_flow_is_bit_exact_identity():
    x = Rng(9).uniform_array((3, 7, 5), 0.0, 1.0, dtype=np.float32)
    out = apply_flow(x, np.zeros((2, 7, 5), np.float32))
    assert out.dtype == x.dtype
    assert np.array_equal(out, x)


def test_half_pixel_sample_matches_brute_force():
    x = np.array([[[0.0, 1.0], [2.0, 3.0]]])
    f = np.zeros((2, 2, 2))
    f[:, 0, 0] = 0.5
    out = apply_flow(x, f)
    assert out[0, 0, 0] == _brute_force_sample(x[0], 0, 0, 0.5, 0.5) == 1.5
    assert np.array_equal(out[0].ravel()[1:], [1.0, 2.0, 3.0])


def test_integer_flow_shifts_columns_with_border_replication():
    x = np.arange(12.0).reshape(1, 3, 4)
    f = np.zeros((2, 3, 4))
    f[1] = 1.0
    out = apply_flow(x, f)
    expected = np.array([[[1, 2, 3, 3], [5, 6, 7, 7], [9, 10, 11, 11]]], dtype=float)
    assert np.array_equal(out, expected)


def test_random_warp_matches_brute_force_everywhere():
    rng = Rng(33)
    x = rng.uniform_array((2, 5, 6), 0.0, 1.0)
    f = rng.uniform_array((2, 5, 6), -1.8, 1.8)
    out = apply_flow(x, f)
    for c in range(2):
        for i in range(5):
            for j in range(6):
                want = _brute_force_sample(x[c], i, j, f[0, i, j], f[1, i, j])
                assert out[c, i, j] == pytest.approx(want, abs=1e-12)


def test_subpixel_locality_3x3_dependency():
    rng = Rng(44)
    x = rng.uniform_array((1, 5, 5), 0.0, 1.0)
    f = rng.uniform_array((2, 5, 5), -0.9, 0.9)
    base = apply_flow(x, f)
    for pi in range(5):
        for pj in range(5):
            bumped = x.copy()
            bumped[0, pi, pj] += 0.31
            moved = apply_flow(bumped, f) - base
            for i in range(5):
                for j in range(5):
                    if max(abs(pi - i), abs(pj - j)) > 1:
                        assert moved[0, i, j] == 0.0


def test_warp_preserves_value_range():
    rng = Rng(55)
    for _ in range(50):
        x = rng.uniform_array((1, 6, 6), -2.0, 3.0)
        f = rng.uniform_array((2, 6, 6), -4.0, 4.0)
        out = apply_flow(x, f)
        assert out.min() >= x.min() - 1e-12
        assert out.max() <= x.max() + 1e-12


def test_warp_shape_mismatch():
    with pytest.raises(UsageError):
        apply_flow(np.zeros((1, 4, 4)), np.zeros((2, 3, 4)))


def test_warp_gradients_against_finite_differences():
    rng = Rng(66)
    x = rng.uniform_array((2, 6, 7), 0.0, 1.0)
    # Flows bounded away from the integer interpolation knots.
    f = np.sign(rng.uniform_array((2, 6, 7), -1.0, 1.0)) * rng.uniform_array((2, 6, 7), 0.08, 0.42)
    assert grad_check(BilinearWarpOp(), [x, f], h=1e-3, rng=Rng(67)) < 1e-4


def test_warp_flow_gradient_direction():
    # Value increases to the right: d(out)/d(dcol) must be positive.
    x = np.array([[[0.0, 1.0, 2.0]] * 3])
    f = np.full((2, 3, 3), 0.3)
    op = BilinearWarpOp()
    op.forward(x, f)
    _, gf = op.backward(np.ones((1, 3, 3)))
    assert np.all(gf[1][:, :2] > 0)
