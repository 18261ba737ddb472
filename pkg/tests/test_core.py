import numpy as np
import pytest

from chromawarp.core import (
    DiffOp, NumericError, Rng, UsageError, derive_seed, grad_check,
)


class IdentityOp(DiffOp):
    def forward(self, x):
        self._save(True)
        return x.copy()

    def backward(self, g):
        self._saved()
        return g.copy()


class TanhOpLocal(DiffOp):
    def forward(self, x):
        y = np.tanh(x)
        self._save(y)
        return y

    def backward(self, g):
        (y,) = self._saved()
        return g * (1.0 - y * y)


class ExplodingOp(DiffOp):
    def forward(self, x):
        with np.errstate(divide="ignore"):
            return x / 0.0

    def backward(self, g):
        return g


def test_same_seed_same_first_draw():
    assert Rng(12345).uniform(0.0, 1.0) == Rng(12345).uniform(0.0, 1.0)
    assert Rng(1).uniform() != Rng(2).uniform()


def test_uniform_mean_converges():
    draws = Rng(42).uniform_array((100_000,), 0.0, 1.0)
    assert abs(draws.mean() - 0.5) < 0.01


def test_uniform_range_contract():
    rng = Rng(7)
    for _ in range(2000):
        v = rng.uniform(-1.0, 1.0)
        assert -1.0 <= v < 1.0


def test_uniform_rejects_bad_interval():
    with pytest.raises(UsageError):
        Rng(0).uniform(1.0, 1.0)
    with pytest.raises(UsageError):
        Rng(0).uniform_array((3,), 2.0, -2.0)


def test_uniform_array_matches_sequential_draws():
    arr = Rng(99).uniform_array((50,), -3.0, 5.0)
    rng = Rng(99)
    seq = [rng.uniform(-3.0, 5.0) for _ in range(50)]
    assert np.array_equal(arr, np.array(seq))


def test_uniform_array_continues_the_stream():
    rng = Rng(4)
    first = rng.uniform_array((10,))
    after = rng.uniform()
    rng2 = Rng(4)
    seq = [rng2.uniform() for _ in range(11)]
    assert np.array_equal(first, seq[:10])
    assert after == seq[10]


def test_randint_range_and_determinism():
    rng = Rng(5)
    values = [rng.randint(7) for _ in range(500)]
    assert all(0 <= v < 7 for v in values)
    rng2 = Rng(5)
    assert values == [rng2.randint(7) for _ in range(500)]
    assert set(values) == set(range(7))
    with pytest.raises(UsageError):
        rng.randint(0)


def test_permutation_covers_range():
    perm = Rng(11).permutation(40)
    assert sorted(perm.tolist()) == list(range(40))
    assert np.array_equal(perm, Rng(11).permutation(40))


def test_derive_seed_is_order_sensitive():
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert derive_seed(0, 0, 0) != derive_seed(0, 0, 1)
    assert derive_seed(3, 4) == derive_seed(3, 4)


def test_grad_check_identity_is_exact():
    # x = 0 with a power-of-two step keeps every float operation exact.
    assert grad_check(IdentityOp(), [np.zeros(1)], h=0.5, rng=Rng(3)) == 0.0


def test_grad_check_tanh_tight():
    x = Rng(8).uniform_array((4, 5), -0.8, 0.8)
    assert grad_check(TanhOpLocal(), [x], h=1e-3, rng=Rng(9)) < 1e-6


def test_grad_check_flags_nonfinite_forward():
    with pytest.raises(NumericError):
        grad_check(ExplodingOp(), [np.ones(3)], h=1e-3)


def test_backward_before_forward_is_usage_error():
    with pytest.raises(UsageError):
        IdentityOp().backward(np.ones(3))


def test_grad_check_coordinate_subsampling():
    x = Rng(10).uniform_array((20, 20), -0.5, 0.5)
    err = grad_check(TanhOpLocal(), [x], h=1e-3, rng=Rng(11), max_coords_per_input=12)
    assert err < 1e-6
