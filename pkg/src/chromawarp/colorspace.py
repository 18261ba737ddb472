"""Differentiable conversions between RGB, YCbCr and CIELAB, plus gamut
clipping and luma/chroma channel handling.

Value conventions:
  RGB    float in [0, 1]
  YCbCr  full-range JPEG/JFIF equations on [0, 255], chroma offset 128
  CIELAB D65 illuminant, 2-degree observer; L in [0, 100], a*/b* roughly
         in [-127, 127]

Conversions are float-exact and never clip; out-of-gamut values survive
round trips untouched.  ``clip_to_gamut`` is the one place RGB range is
enforced, and its backward zeroes the gradient at clipped coordinates.
Arithmetic runs in float64 internally and results are cast back to the
input dtype.
"""

from __future__ import annotations

import numpy as np

from .core import DiffOp, UsageError

__all__ = [
    "RGB", "YCBCR", "LAB", "Image",
    "rgb_to_ycbcr", "ycbcr_to_rgb", "rgb_to_lab", "lab_to_rgb",
    "split_luma_chroma", "concat_luma_chroma", "clip_to_gamut",
    "RgbToYcbcrOp", "YcbcrToRgbOp", "RgbToLabOp", "LabToRgbOp", "ClipOp",
]

RGB = "rgb"
YCBCR = "ycbcr"
LAB = "lab"
_SPACES = (RGB, YCBCR, LAB)


class Image:
    """A 3xHxW float raster tagged with its colorspace."""

    __slots__ = ("pixels", "space")

    def __init__(self, pixels, space: str):
        pixels = np.asarray(pixels)
        if pixels.ndim != 3 or pixels.shape[0] != 3:
            raise UsageError(f"expected 3xHxW pixels, got shape {pixels.shape}")
        if pixels.shape[1] < 1 or pixels.shape[2] < 1:
            raise UsageError(f"image dimensions must be >= 1, got {pixels.shape}")
        if space not in _SPACES:
            raise UsageError(f"unknown colorspace {space!r}")
        self.pixels = pixels
        self.space = space

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def copy(self) -> "Image":
        return Image(self.pixels.copy(), self.space)


def _require_space(img: Image, *spaces: str):
    if img.space not in spaces:
        raise UsageError(f"expected {' or '.join(spaces)} image, got {img.space}")


# Full-range YCbCr coefficients.  The chroma rows are evaluated in the
# algebraically identical difference form (their coefficients sum to 0.5
# exactly in decimal) so a gray pixel lands on exactly 128.
_KR, _KG, _KB = 0.299, 0.587, 0.114
_CB_R, _CB_G = 0.168736, 0.331264          # Cb = 128 - CB_R(R-B) - CB_G(G-B)
_CR_G, _CR_B = 0.418688, 0.081312          # Cr = 128 + CR_G(R-G) + CR_B(R-B)

# Jacobian of [0,1]-RGB -> YCbCr (constant; the 255 scale folds in here).
_RGB_TO_YCBCR_J = 255.0 * np.array([
    [_KR, _KG, _KB],
    [-_CB_R, -_CB_G, 0.5],
    [0.5, -_CR_G, -_CR_B],
])

# Inverse direction.  The G-row carries the full-precision values of the
# customary 0.34414 / 0.71414: the rounded forms leak chroma into
# recomputed luma at strong chroma (up to ~2e-4), past the 1e-4 budget.
_RY, _BCB = 1.402, 1.772
_GCB = _BCB * _KB / _KG   # 0.34413594...
_GCR = _RY * _KR / _KG    # 0.71413594...
_YCBCR_TO_RGB_J = np.array([
    [1.0, 0.0, _RY],
    [1.0, -_GCB, -_GCR],
    [1.0, _BCB, 0.0],
]) / 255.0


class RgbToYcbcrOp(DiffOp):
    """Linear map to full-range YCbCr on 255-scaled values."""

    def forward(self, x):
        x = np.asarray(x)
        r, g, b = 255.0 * x.astype(np.float64)
        y = _KR * r + _KG * g + _KB * b
        cb = 128.0 - _CB_R * (r - b) - _CB_G * (g - b)
        cr = 128.0 + _CR_G * (r - g) + _CR_B * (r - b)
        self._save(x.dtype)
        return np.stack([y, cb, cr]).astype(x.dtype, copy=False)

    def backward(self, grad_out):
        (dtype,) = self._saved()
        g = np.asarray(grad_out, dtype=np.float64)
        gx = np.einsum("rc,r...->c...", _RGB_TO_YCBCR_J, g)
        return gx.astype(dtype, copy=False)


class YcbcrToRgbOp(DiffOp):
    """Inverse of RgbToYcbcrOp up to published coefficient rounding; no clipping."""

    def forward(self, x):
        x = np.asarray(x)
        y, cb, cr = x.astype(np.float64)
        r = (y + _RY * (cr - 128.0)) / 255.0
        g = (y - _GCB * (cb - 128.0) - _GCR * (cr - 128.0)) / 255.0
        b = (y + _BCB * (cb - 128.0)) / 255.0
        self._save(x.dtype)
        return np.stack([r, g, b]).astype(x.dtype, copy=False)

    def backward(self, grad_out):
        (dtype,) = self._saved()
        g = np.asarray(grad_out, dtype=np.float64)
        gx = np.einsum("rc,r...->c...", _YCBCR_TO_RGB_J, g)
        return gx.astype(dtype, copy=False)


# sRGB <-> CIEXYZ, D65 illuminant / 2-degree observer.
_SRGB_TO_XYZ = np.array([
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
])
_XYZ_TO_SRGB = np.linalg.inv(_SRGB_TO_XYZ)
# White point taken as the matrix row sums (D65 to four decimals).  Using
# the row sums rather than the customary (0.95047, 1, 1.08883) pins the
# neutral axis to exactly a* = b* = 0.
_WHITE = _SRGB_TO_XYZ.sum(axis=1).reshape(3, 1, 1)

_DELTA = 6.0 / 29.0                  # CIE f(t) knot
_DELTA3 = _DELTA**3
_FT_SLOPE = 1.0 / (3.0 * _DELTA**2)  # linear-branch slope of f(t)
_FT_OFFSET = 4.0 / 29.0
_COMPAND_KNOT = 0.04045              # sRGB companding knot (encoded side)
_LIN_KNOT = _COMPAND_KNOT / 12.92    # same knot on the linear side


def _srgb_decompand(v):
    # maximum() keeps the unselected power branch away from negative bases.
    return np.where(v <= _COMPAND_KNOT, v / 12.92,
                    ((np.maximum(v, _COMPAND_KNOT) + 0.055) / 1.055) ** 2.4)


def _srgb_decompand_deriv(v):
    return np.where(v <= _COMPAND_KNOT, 1.0 / 12.92,
                    (2.4 / 1.055) * np.maximum((v + 0.055) / 1.055, 0.0) ** 1.4)


def _srgb_compand(lin):
    # The linear branch extends below zero so out-of-gamut Lab inputs stay finite.
    return np.where(lin <= _LIN_KNOT, 12.92 * lin,
                    1.055 * np.maximum(lin, _LIN_KNOT) ** (1.0 / 2.4) - 0.055)


def _srgb_compand_deriv(lin):
    return np.where(lin <= _LIN_KNOT, 12.92,
                    (1.055 / 2.4) * np.maximum(lin, _LIN_KNOT) ** (1.0 / 2.4 - 1.0))


def _ft(t):
    return np.where(t > _DELTA3, np.cbrt(t), _FT_SLOPE * t + _FT_OFFSET)


def _ft_deriv(t):
    return np.where(t > _DELTA3, np.cbrt(np.maximum(t, _DELTA3)) ** -2 / 3.0, _FT_SLOPE)


class RgbToLabOp(DiffOp):
    """sRGB decompanding -> XYZ matrix -> CIE f(t) -> (L, a*, b*)."""

    def forward(self, x):
        x = np.asarray(x)
        v = x.astype(np.float64)
        lin = _srgb_decompand(v)
        t = np.einsum("rc,c...->r...", _SRGB_TO_XYZ, lin) / _WHITE
        f = _ft(t)
        lab = np.stack([
            116.0 * f[1] - 16.0,
            500.0 * (f[0] - f[1]),
            200.0 * (f[1] - f[2]),
        ])
        self._save(v, t, x.dtype)
        return lab.astype(x.dtype, copy=False)

    def backward(self, grad_out):
        v, t, dtype = self._saved()
        gl, ga, gb = np.asarray(grad_out, dtype=np.float64)
        gf = np.stack([
            500.0 * ga,
            116.0 * gl - 500.0 * ga + 200.0 * gb,
            -200.0 * gb,
        ])
        gt = gf * _ft_deriv(t) / _WHITE
        glin = np.einsum("rc,r...->c...", _SRGB_TO_XYZ, gt)
        gx = glin * _srgb_decompand_deriv(v)
        return gx.astype(dtype, copy=False)


class LabToRgbOp(DiffOp):
    """Exact inverse of RgbToLabOp; no clipping, may leave [0, 1]."""

    def forward(self, x):
        x = np.asarray(x)
        L, a, b = x.astype(np.float64)
        fy = (L + 16.0) / 116.0
        f = np.stack([fy + a / 500.0, fy, fy - b / 200.0])
        t = np.where(f > _DELTA, f**3, (f - _FT_OFFSET) / _FT_SLOPE)
        lin = np.einsum("rc,c...->r...", _XYZ_TO_SRGB, t * _WHITE)
        v = _srgb_compand(lin)
        self._save(f, lin, x.dtype)
        return v.astype(x.dtype, copy=False)

    def backward(self, grad_out):
        f, lin, dtype = self._saved()
        gv = np.asarray(grad_out, dtype=np.float64)
        glin = gv * _srgb_compand_deriv(lin)
        gt = np.einsum("rc,r...->c...", _XYZ_TO_SRGB, glin) * _WHITE
        gf = gt * np.where(f > _DELTA, 3.0 * f**2, 1.0 / _FT_SLOPE)
        gfx, gfy, gfz = gf
        gl = (gfx + gfy + gfz) / 116.0
        ga = gfx / 500.0
        gb = -gfz / 200.0
        return np.stack([gl, ga, gb]).astype(dtype, copy=False)


class ClipOp(DiffOp):
    """Clamp to [0, 1]; the gradient is zeroed where clamping was active."""

    def forward(self, x):
        x = np.asarray(x)
        self._save((x >= 0.0) & (x <= 1.0), x.dtype)
        return np.clip(x, 0.0, 1.0)

    def backward(self, grad_out):
        mask, dtype = self._saved()
        return np.asarray(grad_out * mask, dtype=dtype)


def rgb_to_ycbcr(img: Image) -> Image:
    _require_space(img, RGB)
    return Image(RgbToYcbcrOp().forward(img.pixels), YCBCR)


def ycbcr_to_rgb(img: Image) -> Image:
    _require_space(img, YCBCR)
    return Image(YcbcrToRgbOp().forward(img.pixels), RGB)


def rgb_to_lab(img: Image) -> Image:
    _require_space(img, RGB)
    return Image(RgbToLabOp().forward(img.pixels), LAB)


def lab_to_rgb(img: Image) -> Image:
    _require_space(img, LAB)
    return Image(LabToRgbOp().forward(img.pixels), RGB)


def split_luma_chroma(img: Image):
    """Split a YCbCr or Lab image into (1xHxW luma, 2xHxW chroma) planes."""
    _require_space(img, YCBCR, LAB)
    return img.pixels[:1].copy(), img.pixels[1:].copy()


def concat_luma_chroma(luma, chroma, space: str) -> Image:
    """Reassemble what split_luma_chroma took apart."""
    if space not in (YCBCR, LAB):
        raise UsageError(f"expected {YCBCR} or {LAB}, got {space}")
    luma = np.asarray(luma)
    chroma = np.asarray(chroma)
    if luma.shape[0] != 1 or chroma.shape[0] != 2 or luma.shape[1:] != chroma.shape[1:]:
        raise UsageError(f"cannot concat luma {luma.shape} with chroma {chroma.shape}")
    return Image(np.concatenate([luma, chroma], axis=0), space)


def clip_to_gamut(img: Image) -> Image:
    _require_space(img, RGB)
    return Image(ClipOp().forward(img.pixels), RGB)
