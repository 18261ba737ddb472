"""Distortion measurement between benign and adversarial images: SSIM,
MS-SSIM, Lp norms, and the Hasler-Suesstrunk colorfulness index.

SSIM follows the standard formulation: 11x11 Gaussian window with
sigma 1.5, K1 = 0.01, K2 = 0.03 on dynamic range 1, Gaussian-weighted
(biased) covariances, no padding (valid windows only), computed per RGB
channel and averaged.  MS-SSIM downsamples with 2x2 average pooling and
weights contrast-structure terms [0.0448, 0.2856, 0.3001, 0.2363, 0.1333],
applying the luminance term at the coarsest scale; scale count clamps to
what the image size supports, renormalizing the weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import UsageError
from .colorspace import RGB, Image, rgb_to_ycbcr

__all__ = ["ssim", "ms_ssim", "colorfulness", "lp_norms", "MetricReport", "measure"]

_WIN = 11
_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03
_C1 = (_K1 * 1.0) ** 2
_C2 = (_K2 * 1.0) ** 2
_MS_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])
_L0_EPS = 1e-6


def _gaussian_window():
    half = (_WIN - 1) / 2.0
    g = np.exp(-((np.arange(_WIN) - half) ** 2) / (2.0 * _SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


_WINDOW = _gaussian_window()


def _filter_valid(plane: np.ndarray) -> np.ndarray:
    """Gaussian-weighted local means over valid (fully interior) windows."""
    win = sliding_window_view(plane, (_WIN, _WIN))
    return np.tensordot(win, _WINDOW, axes=([2, 3], [0, 1]))


def _check_pair(a: Image, b: Image):
    if a.pixels.shape != b.pixels.shape:
        raise UsageError(f"image dimensions differ: {a.pixels.shape} vs {b.pixels.shape}")


def _ssim_maps(pa: np.ndarray, pb: np.ndarray):
    """Per-channel (luminance map, contrast-structure map) lists."""
    lum, cs_ = [], []
    for ca, cb in zip(pa, pb):
        mu_a = _filter_valid(ca)
        mu_b = _filter_valid(cb)
        var_a = _filter_valid(ca * ca) - mu_a * mu_a
        var_b = _filter_valid(cb * cb) - mu_b * mu_b
        cov = _filter_valid(ca * cb) - mu_a * mu_b
        lum.append((2.0 * mu_a * mu_b + _C1) / (mu_a**2 + mu_b**2 + _C1))
        cs_.append((2.0 * cov + _C2) / (var_a + var_b + _C2))
    return lum, cs_


def _planes(img: Image, on_luma: bool) -> np.ndarray:
    """Channel stack a comparison runs on: RGB channels, or the [0,1]-scaled
    luma plane alone (the one switch deciding which variant is reported)."""
    if not on_luma:
        return img.pixels.astype(np.float64)
    return rgb_to_ycbcr(img).pixels[:1].astype(np.float64) / 255.0


def ssim(a: Image, b: Image, on_luma: bool = False) -> float:
    """Mean structural similarity, averaged over the compared channels."""
    _check_pair(a, b)
    if min(a.height, a.width) < _WIN:
        raise UsageError(f"images must be at least {_WIN}x{_WIN} for ssim, "
                         f"got {a.height}x{a.width}")
    lum, cs_ = _ssim_maps(_planes(a, on_luma), _planes(b, on_luma))
    return float(np.mean([np.mean(l * c) for l, c in zip(lum, cs_)]))


def _downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    plane = plane[: h - h % 2, : w - w % 2]
    return 0.25 * (plane[0::2, 0::2] + plane[0::2, 1::2] + plane[1::2, 0::2] + plane[1::2, 1::2])


def max_feasible_scales(height: int, width: int) -> int:
    """Largest scale count whose coarsest level still fits the SSIM window."""
    k = 0
    side = min(height, width)
    while side >= _WIN and k < len(_MS_WEIGHTS):
        k += 1
        side //= 2
    return k


def ms_ssim(a: Image, b: Image, scales: int | None = None,
            on_luma: bool = False) -> float:
    """Multi-scale SSIM; with scales=None the scale count auto-clamps.

    Contrast-structure means of scales 1..M-1 and the full SSIM mean at
    scale M are combined as a weighted product; negative contrast-structure
    means are clamped to zero before exponentiation.
    """
    _check_pair(a, b)
    feasible = max_feasible_scales(a.height, a.width)
    if feasible < 1:
        raise UsageError(f"images must be at least {_WIN}x{_WIN} for ms_ssim, "
                         f"got {a.height}x{a.width}")
    if scales is None:
        scales = feasible
    elif not 1 <= scales <= feasible:
        raise UsageError(f"requested {scales} scales; max feasible for "
                         f"{a.height}x{a.width} is {feasible}")
    weights = _MS_WEIGHTS[:scales] / _MS_WEIGHTS[:scales].sum()

    pa = _planes(a, on_luma)
    pb = _planes(b, on_luma)
    per_channel = np.ones(pa.shape[0])
    for level in range(scales):
        lum, cs_ = _ssim_maps(pa, pb)
        for c in range(pa.shape[0]):
            if level < scales - 1:
                term = max(float(np.mean(cs_[c])), 0.0)
            else:
                term = max(float(np.mean(lum[c] * cs_[c])), 0.0)
            per_channel[c] *= term ** weights[level]
        if level < scales - 1:
            pa = np.stack([_downsample2(p) for p in pa])
            pb = np.stack([_downsample2(p) for p in pb])
    return float(np.mean(per_channel))


def colorfulness(img: Image) -> float:
    """Hasler-Suesstrunk colorfulness on [0,1] RGB; exactly 0 for grayscale."""
    if img.space != RGB:
        raise UsageError(f"colorfulness expects rgb, got {img.space}")
    r, g, b = img.pixels.astype(np.float64)
    rg = r - g
    yb = 0.5 * (r + g) - b
    sigma = np.hypot(np.std(rg), np.std(yb))
    mu = np.hypot(np.mean(rg), np.mean(yb))
    return float(sigma + 0.3 * mu)


def lp_norms(a: Image, b: Image):
    """(l0, l2, linf): changed-pixel count, Euclidean norm, max abs diff.

    l0 counts pixel positions where any channel moved by more than 1e-6.
    """
    _check_pair(a, b)
    d = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    l0 = int(np.count_nonzero(np.any(np.abs(d) > _L0_EPS, axis=0)))
    l2 = float(np.sqrt(np.sum(d * d)))
    linf = float(np.max(np.abs(d))) if d.size else 0.0
    return l0, l2, linf


@dataclass
class MetricReport:
    ssim: float
    ms_ssim: float
    one_minus_ssim: float
    one_minus_ms_ssim: float
    l0: int
    l2: float
    linf: float
    colorfulness_benign: float
    # Slot for externally computed metrics (e.g. learned perceptual scores).
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "ssim": self.ssim,
            "ms_ssim": self.ms_ssim,
            "one_minus_ssim": self.one_minus_ssim,
            "one_minus_ms_ssim": self.one_minus_ms_ssim,
            "l0": self.l0,
            "l2": self.l2,
            "linf": self.linf,
            "colorfulness_benign": self.colorfulness_benign,
        }
        out.update(self.extra)
        return out


def measure(benign: Image, adversarial: Image) -> MetricReport:
    """Full distortion report for an (original, modified) image pair."""
    s = ssim(benign, adversarial)
    ms = ms_ssim(benign, adversarial)
    l0, l2, linf = lp_norms(benign, adversarial)
    return MetricReport(ssim=s, ms_ssim=ms, one_minus_ssim=1.0 - s,
                        one_minus_ms_ssim=1.0 - ms, l0=l0, l2=l2, linf=linf,
                        colorfulness_benign=colorfulness(benign))
