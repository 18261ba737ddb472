"""Shared numerical plumbing: deterministic randomness, the differentiable
operation contract, and a finite-difference gradient checker.

Arrays are plain numpy ndarrays, row-major, channel-first (C, H, W).
Production paths run in float32; gradient checks promote to float64.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "UsageError",
    "FormatError",
    "NumericError",
    "Rng",
    "derive_seed",
    "DiffOp",
    "grad_check",
]


class UsageError(ValueError):
    """An operation was called outside its contract."""


class FormatError(ValueError):
    """A file (weights, image, manifest) is malformed."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


# SplitMix64 constants (Steele, Lea & Flood 2014).
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed, order-sensitively.

    Used to give every (configuration, image) pair of a batch run its own
    reproducible stream without the streams overlapping.
    """
    s = 0x243F6A8885A308D3  # pi fraction, arbitrary non-zero start
    for p in parts:
        s = _mix64((s ^ (int(p) & _MASK64)) + _GOLDEN)
    return s


class Rng:
    """SplitMix64 generator: a 64-bit counter hashed once per draw.

    The same seed yields the same sequence on every platform, so seeded
    runs stay reproducible without depending on numpy's RNG internals.
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """One float in [lo, hi)."""
        if not lo < hi:
            raise UsageError(f"uniform needs lo < hi, got [{lo}, {hi})")
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def uniform_array(self, shape, lo=0.0, hi=1.0, dtype=np.float64) -> np.ndarray:
        """Vectorized equivalent of repeated uniform() calls."""
        if not lo < hi:
            raise UsageError(f"uniform needs lo < hi, got [{lo}, {hi})")
        n = int(np.prod(shape))
        # Counter values the sequential generator would have visited.
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
            z = z ^ (z >> np.uint64(31))
        self._state = (self._state + n * _GOLDEN) & _MASK64
        u = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return np.asarray(lo + (hi - lo) * u, dtype=dtype).reshape(shape)

    def randint(self, n: int) -> int:
        """Integer in [0, n) via the multiply-shift reduction."""
        if n <= 0:
            raise UsageError(f"randint needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx


class DiffOp:
    """Forward/backward operation pair.

    ``forward`` computes the output array and saves whatever ``backward``
    needs on the instance; ``backward`` maps the output gradient to input
    gradients, one per forward input, with matching shapes.  One
    forward/backward pair is in flight per instance; calling ``backward``
    first is a usage error.
    """

    _ctx = None

    def forward(self, *inputs):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def _save(self, *ctx):
        self._ctx = ctx

    def _saved(self):
        if self._ctx is None:
            raise UsageError(f"{type(self).__name__}.backward called before forward")
        return self._ctx


def grad_check(op: DiffOp, inputs, h: float = 1e-3, rng: Rng | None = None,
               max_coords_per_input: int | None = None) -> float:
    """Worst relative error between analytic backward and central differences.

    The op output is reduced to a scalar through a fixed random projection so
    a single backward sweep yields every input gradient; each checked input
    coordinate is then wiggled by +-h in float64.  Errors are measured as
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).  Pass
    ``max_coords_per_input`` to spot-check a random subset of coordinates on
    expensive ops instead of sweeping all of them.
    """
    if h <= 0:
        raise UsageError("grad_check needs h > 0")
    rng = Rng(0xC0FFEE) if rng is None else rng
    xs = [np.array(x, dtype=np.float64) for x in inputs]
    out = op.forward(*xs)
    if not np.all(np.isfinite(out)):
        raise NumericError("grad_check: forward produced non-finite output")
    proj = rng.uniform_array(np.shape(out), -1.0, 1.0)
    grads = op.backward(proj)
    if not isinstance(grads, (tuple, list)):
        grads = (grads,)
    if len(grads) != len(xs):
        raise UsageError("backward must return one gradient per forward input")

    worst = 0.0
    for x, g in zip(xs, grads):
        if g is None:
            continue
        flat = x.reshape(-1)
        gf = np.asarray(g, dtype=np.float64).reshape(-1)
        if gf.shape != flat.shape:
            raise UsageError("gradient shape does not match input shape")
        if max_coords_per_input is not None and flat.size > max_coords_per_input:
            coords = sorted({rng.randint(flat.size) for _ in range(max_coords_per_input)})
        else:
            coords = range(flat.size)
        for k in coords:
            keep = flat[k]
            flat[k] = keep + h
            f_plus = float(np.sum(proj * op.forward(*xs)))
            flat[k] = keep - h
            f_minus = float(np.sum(proj * op.forward(*xs)))
            flat[k] = keep
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(gf[k])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
