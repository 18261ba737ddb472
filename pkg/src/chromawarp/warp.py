"""Flow fields and differentiable bilinear warping.

A flow field holds one (drow, dcol) displacement per pixel.  Warping is
"sample-from": output pixel (i, j) reads the input at (i + drow, j + dcol),
bilinearly interpolating the four surrounding grid points.  Sample
coordinates are clamped to the image rectangle (border replication), which
keeps every output a convex combination of input values.  Both the warped
channels and the flow itself get analytic gradients; at integer sample
coordinates the right-sided weight derivative is used.
"""

from __future__ import annotations

import numpy as np

from .core import DiffOp, Rng, UsageError

__all__ = ["FlowField", "init_flow", "restrict_flow", "apply_flow",
           "TanhOp", "BilinearWarpOp"]


class FlowField:
    """2xHxW displacement field; plane 0 is drow, plane 1 is dcol (pixels)."""

    __slots__ = ("displacements",)

    def __init__(self, displacements):
        d = np.asarray(displacements)
        if d.ndim != 3 or d.shape[0] != 2:
            raise UsageError(f"expected 2xHxW flow, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise UsageError("flow field contains non-finite values")
        self.displacements = d

    @property
    def height(self) -> int:
        return self.displacements.shape[1]

    @property
    def width(self) -> int:
        return self.displacements.shape[2]


def init_flow(h: int, w: int, rng: Rng, scale: float = 0.01,
              dtype=np.float32) -> FlowField:
    """Random flow with each component i.i.d. uniform in [-scale, scale]."""
    if h < 1 or w < 1:
        raise UsageError(f"flow dimensions must be >= 1, got {h}x{w}")
    if scale < 0:
        raise UsageError(f"init scale must be >= 0, got {scale}")
    if scale == 0:
        return FlowField(np.zeros((2, h, w), dtype=dtype))
    return FlowField(rng.uniform_array((2, h, w), -scale, scale, dtype=dtype))


class TanhOp(DiffOp):
    """Elementwise tanh; squashes displacements into (-1, 1)."""

    def forward(self, x):
        y = np.tanh(x)
        self._save(y)
        return y

    def backward(self, grad_out):
        (y,) = self._saved()
        return grad_out * (1.0 - y * y)


def restrict_flow(f: FlowField) -> FlowField:
    """Subpixel restriction: tanh keeps every displacement inside (-1, 1)."""
    return FlowField(TanhOp().forward(f.displacements))


class BilinearWarpOp(DiffOp):
    """Warp CxHxW channels by a 2xHxW flow with border-clamped sampling.

    forward(channels, flow) -> CxHxW; backward returns gradients for both
    inputs.  Interpolation runs in float64 and the output is cast back to
    the channels' dtype, so a zero flow reproduces the input bit-exactly.
    """

    def forward(self, channels, flow):
        x = np.asarray(channels)
        f = np.asarray(flow)
        if x.ndim != 3 or f.ndim != 3 or f.shape[0] != 2 or x.shape[1:] != f.shape[1:]:
            raise UsageError(f"channel/flow shape mismatch: {x.shape} vs {f.shape}")
        _, h, w = x.shape
        xd = x.astype(np.float64)
        fd = f.astype(np.float64)

        grid_i, grid_j = np.meshgrid(np.arange(h, dtype=np.float64),
                                     np.arange(w, dtype=np.float64), indexing="ij")
        raw_i = grid_i + fd[0]
        raw_j = grid_j + fd[1]
        si = np.clip(raw_i, 0.0, h - 1.0)
        sj = np.clip(raw_j, 0.0, w - 1.0)

        i0 = np.floor(si).astype(np.intp)
        j0 = np.floor(sj).astype(np.intp)
        ai = si - i0
        aj = sj - j0
        i1 = np.minimum(i0 + 1, h - 1)
        j1 = np.minimum(j0 + 1, w - 1)

        x00 = xd[:, i0, j0]
        x01 = xd[:, i0, j1]
        x10 = xd[:, i1, j0]
        x11 = xd[:, i1, j1]

        w00 = (1.0 - ai) * (1.0 - aj)
        w01 = (1.0 - ai) * aj
        w10 = ai * (1.0 - aj)
        w11 = ai * aj
        out = w00 * x00 + w01 * x01 + w10 * x10 + w11 * x11

        self._save(x, f, (i0, i1, j0, j1), (ai, aj),
                   (x00, x01, x10, x11), (raw_i, raw_j))
        return out.astype(x.dtype, copy=False)

    def backward(self, grad_out):
        x, f, (i0, i1, j0, j1), (ai, aj), (x00, x01, x10, x11), (raw_i, raw_j) = self._saved()
        _, h, w = x.shape
        g = np.asarray(grad_out, dtype=np.float64)

        gx = np.zeros(x.shape, dtype=np.float64)
        c_idx = np.arange(x.shape[0])[:, None, None]
        np.add.at(gx, (c_idx, i0, j0), g * ((1.0 - ai) * (1.0 - aj)))
        np.add.at(gx, (c_idx, i0, j1), g * ((1.0 - ai) * aj))
        np.add.at(gx, (c_idx, i1, j0), g * (ai * (1.0 - aj)))
        np.add.at(gx, (c_idx, i1, j1), g * (ai * aj))

        # d(out)/d(si) and d(out)/d(sj) from differentiating the weights,
        # then the clamp mask (right-sided subgradient at the borders).
        d_si = (1.0 - aj) * (x10 - x00) + aj * (x11 - x01)
        d_sj = (1.0 - ai) * (x01 - x00) + ai * (x11 - x10)
        mask_i = (raw_i >= 0.0) & (raw_i < h - 1.0)
        mask_j = (raw_j >= 0.0) & (raw_j < w - 1.0)
        gf = np.stack([
            np.sum(g * d_si, axis=0) * mask_i,
            np.sum(g * d_sj, axis=0) * mask_j,
        ])
        return gx.astype(x.dtype, copy=False), gf.astype(f.dtype, copy=False)


def apply_flow(channels, f) -> np.ndarray:
    """Warp channels by a FlowField (or bare 2xHxW array)."""
    d = f.displacements if isinstance(f, FlowField) else f
    return BilinearWarpOp().forward(channels, d)
