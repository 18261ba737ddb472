"""Image file I/O (binary PPM and 8-bit PNG) and the chroma-subsampling
defense transform.

PPM P6 is the dependency-free interchange format and is written with the
exact header ``P6\\n<w> <h>\\n255\\n``; PNG goes through Pillow.  Decoded
values map to [0, 1] by v/255; encoding quantizes with round-half-up.
"""

from __future__ import annotations

import numpy as np

from .core import FormatError, UsageError
from . import colorspace as cs

__all__ = ["read_image", "write_image", "chroma_subsample_420"]


def _read_ppm(data: bytes, path) -> cs.Image:
    # Header tokens may be separated by arbitrary whitespace and '#' comments.
    pos = 2  # past "P6"
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"{path}: non-numeric PPM header fields {tokens}") from None
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: PPM maxval must be 255, got {maxval}")
    need = width * height * 3
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise FormatError(f"{path}: truncated PPM payload, expected {need} bytes, "
                          f"got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return cs.Image((pixels.transpose(2, 0, 1) / 255.0).astype(np.float32), cs.RGB)


def _read_png(path) -> cs.Image:
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        if im.mode == "P":
            im = im.convert("RGB")
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)
            arr = np.stack([arr] * 3, axis=-1)
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.uint8)
        else:
            raise FormatError(f"{path}: unsupported PNG mode {im.mode!r}, "
                              "need 8-bit RGB or grayscale")
    return cs.Image((arr.transpose(2, 0, 1) / 255.0).astype(np.float32), cs.RGB)


def read_image(path) -> cs.Image:
    """Decode a P6 PPM or an 8-bit RGB/grayscale PNG into [0,1] RGB."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    if data[:2] == b"P6":
        return _read_ppm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    raise FormatError(f"{path}: unknown image format (magic {data[:2]!r}); "
                      "expected binary PPM (P6) or PNG")


def _quantize(img: cs.Image) -> np.ndarray:
    if img.space != cs.RGB:
        raise UsageError(f"can only write rgb images, got {img.space}")
    v = img.pixels.astype(np.float64)
    if v.min() < 0.0 or v.max() > 1.0:
        raise UsageError("pixels must lie in [0, 1] before writing")
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)  # round half up


def write_image(img: cs.Image, path, fmt: str | None = None):
    """Encode to PPM or PNG; the format defaults to the path suffix."""
    if fmt is None:
        suffix = str(path).rsplit(".", 1)[-1].lower()
        fmt = {"ppm": "ppm", "png": "png"}.get(suffix)
        if fmt is None:
            raise UsageError(f"cannot infer format from {path}; pass fmt='ppm' or 'png'")
    data = _quantize(img).transpose(1, 2, 0)
    if fmt == "ppm":
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(data.tobytes())
    elif fmt == "png":
        from PIL import Image as PILImage

        PILImage.fromarray(data, mode="RGB").save(path, format="PNG")
    else:
        raise UsageError(f"unknown image format {fmt!r}")


def _block_mean_420(plane: np.ndarray) -> np.ndarray:
    """Replace each 2x2 block by its mean; trailing odd rows/cols average
    over the partial block."""
    h, w = plane.shape
    row_idx = np.arange(0, h, 2)
    col_idx = np.arange(0, w, 2)
    sums = np.add.reduceat(np.add.reduceat(plane, row_idx, axis=0), col_idx, axis=1)
    rows = np.minimum(row_idx + 2, h) - row_idx
    cols = np.minimum(col_idx + 2, w) - col_idx
    means = sums / np.outer(rows, cols)
    return np.repeat(np.repeat(means, 2, axis=0), 2, axis=1)[:h, :w]


def chroma_subsample_420(img: cs.Image, space: str = cs.YCBCR) -> cs.Image:
    """4:2:0 chroma subsampling as a defense: average each 2x2 chroma block
    in the given space, keep luma, convert back and clip to gamut."""
    if img.space != cs.RGB:
        raise UsageError(f"defense input must be rgb, got {img.space}")
    if space == cs.YCBCR:
        converted = cs.rgb_to_ycbcr(img)
    elif space == cs.LAB:
        converted = cs.rgb_to_lab(img)
    else:
        raise UsageError(f"subsampling space must be {cs.YCBCR} or {cs.LAB}, got {space}")
    luma, chroma = cs.split_luma_chroma(converted)
    pooled = np.stack([_block_mean_420(c.astype(np.float64)) for c in chroma])
    pooled = pooled.astype(img.pixels.dtype, copy=False)
    rebuilt = cs.concat_luma_chroma(luma, pooled, converted.space)
    back = cs.ycbcr_to_rgb(rebuilt) if space == cs.YCBCR else cs.lab_to_rgb(rebuilt)
    return cs.clip_to_gamut(back)
