"""Seeded synthetic training data and a loader for labeled PPM directories.

The synthetic set contains 32x32 images whose class is the *spatial layout*
of their chrominance: one of five pattern families (stripe orientations,
checker, rings) at one of two spatial frequencies.  The color palette and
the luminance texture are drawn independently of the class, so a
classifier has to read chroma structure rather than global color
statistics, and every image carries strong local chrominance variation.
Directory datasets follow the layout ``<class_index>/<name>.ppm``.
"""

from __future__ import annotations

import os

import numpy as np

from .core import Rng, UsageError
from .colorspace import YCBCR, Image, clip_to_gamut, ycbcr_to_rgb
from .io_media import read_image

__all__ = ["synthetic_dataset", "grayscale_images", "load_ppm_directory"]


def _texture(kind: int, size: int, period: float, phase_i: float, phase_j: float):
    """Smooth periodic mask in [0,1]; kind selects the pattern family."""
    ii, jj = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    tau = 2.0 * np.pi / period
    if kind == 0:
        t = np.sin(tau * (ii + phase_i))
    elif kind == 1:
        t = np.sin(tau * (jj + phase_j))
    elif kind == 2:
        t = np.sin(tau * (ii + jj + phase_i))
    elif kind == 3:
        t = np.sin(tau * (ii + phase_i)) * np.sin(tau * (jj + phase_j))
    else:
        r = np.hypot(ii - phase_i * size, jj - phase_j * size)
        t = np.sin(tau * r)
    return 0.5 * (t + 1.0)


def synthetic_dataset(rng: Rng, num_classes: int = 10, per_class: int = 40,
                      size: int = 32, chroma_noise: float = 2.0):
    """(images N x 3 x size x size float32, labels N) with N = classes * per_class.

    Images are composed in YCbCr: the luma plane gets a class-independent
    texture around mid-gray, the chroma planes mix two random palette
    points with the class's pattern mask.  Amplitudes are chosen so the
    result stays inside the RGB gamut.
    """
    if not 1 <= num_classes <= 10:
        raise UsageError("num_classes must be in [1, 10]")
    if per_class < 1 or size < 8:
        raise UsageError("need per_class >= 1 and size >= 8")
    images = []
    labels = []
    for c in range(num_classes):
        kind = c % 5
        base_period = 4.0 if c < 5 else 7.5
        for _ in range(per_class):
            period = base_period + rng.uniform(-0.4, 0.4)
            mask = _texture(kind, size, period,
                            rng.uniform(0.0, period), rng.uniform(0.0, period))
            # Luma: a class-independent texture around mid-gray plus a muted
            # copy of the class pattern, so luminance carries real class
            # evidence while chroma (amplitude 26-40) stays dominant.
            luma_kind = rng.randint(5)
            luma_period = 3.0 + rng.uniform(0.0, 8.0)
            luma = (140.0
                    + 22.0 * (_texture(luma_kind, size, luma_period,
                                       rng.uniform(0.0, luma_period),
                                       rng.uniform(0.0, luma_period)) - 0.5)
                    + 26.0 * (mask - 0.5))
            # Two palette points on the chroma plane, well separated in angle.
            theta = rng.uniform(0.0, 2.0 * np.pi)
            gap = rng.uniform(0.55 * np.pi, 1.45 * np.pi)
            r1 = rng.uniform(26.0, 40.0)
            r2 = rng.uniform(26.0, 40.0)
            cb = 128.0 + (1.0 - mask) * r1 * np.cos(theta) + mask * r2 * np.cos(theta + gap)
            cr = 128.0 + (1.0 - mask) * r1 * np.sin(theta) + mask * r2 * np.sin(theta + gap)
            if chroma_noise > 0:
                cb = cb + rng.uniform_array(cb.shape, -chroma_noise, chroma_noise)
                cr = cr + rng.uniform_array(cr.shape, -chroma_noise, chroma_noise)
            ycbcr = Image(np.stack([luma, cb, cr]).astype(np.float32), YCBCR)
            rgb = clip_to_gamut(ycbcr_to_rgb(ycbcr))
            images.append(rgb.pixels.astype(np.float32))
            labels.append(c)
    return np.stack(images), np.asarray(labels, dtype=np.int64)


def grayscale_images(rng: Rng, count: int, size: int = 32):
    """Seeded grayscale rasters (all three channels equal), N x 3 x size x size."""
    out = []
    for _ in range(count):
        kind = rng.randint(5)
        period = 3.0 + rng.uniform(0.0, 6.0)
        v = _texture(kind, size, period, rng.uniform(0.0, period), rng.uniform(0.0, period))
        v = 0.15 + 0.7 * v
        out.append(np.stack([v, v, v]).astype(np.float32))
    return np.stack(out)


def load_ppm_directory(root):
    """Load ``<class_index>/<name>.ppm`` (or .png) files under root."""
    classes = sorted(
        (int(d), d) for d in os.listdir(root) if d.isdigit()
        and os.path.isdir(os.path.join(root, d))
    )
    if not classes:
        raise UsageError(f"{root}: no <class_index>/ subdirectories found")
    images = []
    labels = []
    for label, d in classes:
        folder = os.path.join(root, d)
        names = sorted(n for n in os.listdir(folder)
                       if n.lower().endswith((".ppm", ".png")))
        for name in names:
            images.append(read_image(os.path.join(folder, name)).pixels)
            labels.append(label)
    if not images:
        raise UsageError(f"{root}: class directories contain no .ppm/.png files")
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise UsageError(f"{root}: images disagree on shape: {sorted(shapes)}")
    return np.stack(images), np.asarray(labels, dtype=np.int64)
