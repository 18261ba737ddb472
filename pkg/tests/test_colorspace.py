import numpy as np
import pytest

from chromawarp.core import Rng, UsageError, grad_check
from chromawarp.colorspace import (
    LAB, RGB, YCBCR, ClipOp, Image, LabToRgbOp, RgbToLabOp, RgbToYcbcrOp,
    YcbcrToRgbOp, clip_to_gamut, concat_luma_chroma, lab_to_rgb, rgb_to_lab,
    rgb_to_ycbcr, split_luma_chroma, ycbcr_to_rgb,
)


def _pixel(r, g, b):
    return Image(np.array([[[r]], [[g]], [[b]]], dtype=np.float64), RGB)


def _ycbcr_reference(r, g, b):
    # Direct evaluation of the published full-range equations on 255-scale.
    r, g, b = 255.0 * r, 255.0 * g, 255.0 * b
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return y, cb, cr


def test_ycbcr_black_and_white_anchor_points():
    assert np.allclose(rgb_to_ycbcr(_pixel(0, 0, 0)).pixels.ravel(), [0, 128, 128])
    assert np.allclose(rgb_to_ycbcr(_pixel(1, 1, 1)).pixels.ravel(), [255, 128, 128])


def test_ycbcr_pure_red_reference_values():
    got = rgb_to_ycbcr(_pixel(1, 0, 0)).pixels.ravel()
    assert np.allclose(got, _ycbcr_reference(1, 0, 0), atol=1e-9)
    # Cr exceeds 255 in float: no quantization anywhere.
    assert got[2] == pytest.approx(255.5)


def test_ycbcr_inverse_anchor_points():
    mid = Image(np.array([[[0.0]], [[128.0]], [[128.0]]]), YCBCR)
    assert np.allclose(ycbcr_to_rgb(mid).pixels.ravel(), [0, 0, 0], atol=1e-12)
    white = Image(np.array([[[255.0]], [[128.0]], [[128.0]]]), YCBCR)
    assert np.allclose(ycbcr_to_rgb(white).pixels.ravel(), [1, 1, 1], atol=1e-12)


def test_ycbcr_round_trip_many_pixels():
    x = Rng(21).uniform_array((3, 100, 100), 0.0, 1.0)
    back = ycbcr_to_rgb(rgb_to_ycbcr(Image(x, RGB))).pixels
    assert np.abs(back - x).max() < 1e-5


def test_lab_black_white_and_mid_gray():
    assert np.allclose(rgb_to_lab(_pixel(0, 0, 0)).pixels.ravel(), [0, 0, 0], atol=1e-9)
    white = rgb_to_lab(_pixel(1, 1, 1)).pixels.ravel()
    assert abs(white[0] - 100.0) < 1e-3
    assert abs(white[1]) < 1e-6 and abs(white[2]) < 1e-6

    # Independent scalar-path evaluation of the mid-gray lightness.
    lin = ((0.5 + 0.055) / 1.055) ** 2.4
    expected_l = 116.0 * lin ** (1.0 / 3.0) - 16.0
    got = rgb_to_lab(_pixel(0.5, 0.5, 0.5)).pixels.ravel()
    assert abs(got[0] - expected_l) < 1e-9
    assert abs(expected_l - 53.389) < 0.01


def test_lab_inverse_anchor_points():
    white = Image(np.array([[[100.0]], [[0.0]], [[0.0]]]), LAB)
    assert np.allclose(lab_to_rgb(white).pixels.ravel(), [1, 1, 1], atol=1e-9)
    mid = Image(np.array([[[53.389]], [[0.0]], [[0.0]]]), LAB)
    assert np.allclose(lab_to_rgb(mid).pixels.ravel(), [0.5, 0.5, 0.5], atol=1e-3)


def test_lab_round_trip_many_pixels():
    x = Rng(22).uniform_array((3, 100, 100), 0.0, 1.0)
    back = lab_to_rgb(rgb_to_lab(Image(x, RGB))).pixels
    assert np.abs(back - x).max() < 1e-4


def test_gray_neutrality_is_exact():
    for v in (0.0, 0.1, 0.25, 0.5, 0.73, 1.0):
        ycbcr = rgb_to_ycbcr(_pixel(v, v, v)).pixels.ravel()
        assert ycbcr[1] == 128.0 and ycbcr[2] == 128.0
        lab = rgb_to_lab(_pixel(v, v, v)).pixels.ravel()
        assert abs(lab[1]) < 1e-6 and abs(lab[2]) < 1e-6


def test_conversions_reject_wrong_space():
    rgb = _pixel(0.2, 0.4, 0.6)
    ycbcr = rgb_to_ycbcr(rgb)
    with pytest.raises(UsageError):
        rgb_to_ycbcr(ycbcr)
    with pytest.raises(UsageError):
        ycbcr_to_rgb(rgb)
    with pytest.raises(UsageError):
        rgb_to_lab(ycbcr)
    with pytest.raises(UsageError):
        lab_to_rgb(rgb)
    with pytest.raises(UsageError):
        split_luma_chroma(rgb)


def test_split_concat_is_inverse():
    img = rgb_to_ycbcr(Image(Rng(3).uniform_array((3, 6, 7), 0.0, 1.0), RGB))
    luma, chroma = split_luma_chroma(img)
    assert luma.shape == (1, 6, 7) and chroma.shape == (2, 6, 7)
    back = concat_luma_chroma(luma, chroma, img.space)
    assert np.array_equal(back.pixels, img.pixels)


def test_split_gray_chroma_planes():
    gray = Image(np.full((3, 4, 4), 0.6), RGB)
    _, chroma_ycbcr = split_luma_chroma(rgb_to_ycbcr(gray))
    assert np.all(chroma_ycbcr == 128.0)
    _, chroma_lab = split_luma_chroma(rgb_to_lab(gray))
    assert np.abs(chroma_lab).max() < 1e-6


def test_clip_examples_and_gradient_mask():
    op = ClipOp()
    x = np.array([[[0.5, 1.3], [-0.2, 1.0]]])
    out = op.forward(x)
    assert np.array_equal(out, [[[0.5, 1.0], [0.0, 1.0]]])
    grads = op.backward(np.ones_like(x))
    assert np.array_equal(grads, [[[1.0, 0.0], [0.0, 1.0]]])

    in_gamut = Rng(5).uniform_array((3, 4, 4), 0.0, 1.0)
    img = Image(in_gamut, RGB)
    assert np.array_equal(clip_to_gamut(img).pixels, in_gamut)
    # idempotence
    once = clip_to_gamut(Image(Rng(6).uniform_array((3, 4, 4), -0.5, 1.5), RGB))
    assert np.array_equal(clip_to_gamut(once).pixels, once.pixels)


def test_conversion_gradients_against_finite_differences():
    rng = Rng(77)
    rgb = rng.uniform_array((3, 5, 6), 0.2, 0.95)  # keeps Lab off its knots
    assert grad_check(RgbToYcbcrOp(), [rgb], h=1e-3, rng=Rng(1)) < 1e-4
    assert grad_check(RgbToLabOp(), [rgb], h=1e-3, rng=Rng(2)) < 1e-4
    ycbcr = RgbToYcbcrOp().forward(rng.uniform_array((3, 5, 6), 0.2, 0.9))
    assert grad_check(YcbcrToRgbOp(), [ycbcr], h=1e-3, rng=Rng(3)) < 1e-4
    lab = RgbToLabOp().forward(rng.uniform_array((3, 5, 6), 0.25, 0.9))
    assert grad_check(LabToRgbOp(), [lab], h=1e-3, rng=Rng(4)) < 1e-4


def test_image_validation():
    with pytest.raises(UsageError):
        Image(np.zeros((2, 4, 4)), RGB)
    with pytest.raises(UsageError):
        Image(np.zeros((3, 0, 4)), RGB)
    with pytest.raises(UsageError):
        Image(np.zeros((3, 4, 4)), "hsv")
