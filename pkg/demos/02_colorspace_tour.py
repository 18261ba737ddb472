"""Tour of the colorspace machinery the attack is built on.

Shows the YCbCr and CIELAB conversions, their round-trip accuracy, the
gray-axis neutrality both are pinned to, and what gamut clipping does to
out-of-range chroma (including the gradient-zeroing behavior the attack
relies on).

Run from the repository root:  python3 demos/02_colorspace_tour.py
"""

import numpy as np

from chromawarp import (
    Image, LAB, RGB, Rng, YCBCR,
    clip_to_gamut, lab_to_rgb, rgb_to_lab, rgb_to_ycbcr, ycbcr_to_rgb,
)
from chromawarp.colorspace import ClipOp

print("== anchor colors ==")
for name, rgb in [("black", (0, 0, 0)), ("white", (1, 1, 1)),
                  ("red", (1, 0, 0)), ("mid gray", (0.5, 0.5, 0.5))]:
    img = Image(np.array(rgb, dtype=np.float64).reshape(3, 1, 1), RGB)
    y = rgb_to_ycbcr(img).pixels.ravel()
    lab = rgb_to_lab(img).pixels.ravel()
    print(f"{name:9s} -> YCbCr ({y[0]:8.3f} {y[1]:8.3f} {y[2]:8.3f})"
          f"   Lab ({lab[0]:8.3f} {lab[1]:8.3f} {lab[2]:8.3f})")
print("note: red's Cr is 255.5 -- conversions never quantize or clip.")

print("\n== round trips on 10k random colors ==")
x = Rng(5).uniform_array((3, 100, 100), 0.0, 1.0)
img = Image(x, RGB)
e1 = np.abs(ycbcr_to_rgb(rgb_to_ycbcr(img)).pixels - x).max()
e2 = np.abs(lab_to_rgb(rgb_to_lab(img)).pixels - x).max()
print(f"RGB -> YCbCr -> RGB worst error: {e1:.2e}")
print(f"RGB -> Lab   -> RGB worst error: {e2:.2e}")

print("\n== the gray axis is exactly neutral ==")
grays = np.linspace(0, 1, 5)
for v in grays:
    g = Image(np.full((3, 1, 1), v), RGB)
    cb, cr = rgb_to_ycbcr(g).pixels.ravel()[1:]
    a, b = rgb_to_lab(g).pixels.ravel()[1:]
    print(f"gray {v:.2f}: Cb-128={cb - 128:+.1e}  Cr-128={cr - 128:+.1e}"
          f"  a*={a:+.1e}  b*={b:+.1e}")

print("\n== gamut clipping zeroes gradients ==")
# Saturated chroma reconstructs to out-of-range RGB; the clip keeps the
# image legal and blocks further gradient flow at those pixels.
hot = Image(np.array([200.0, 30.0, 220.0]).reshape(3, 1, 1), YCBCR)
raw = ycbcr_to_rgb(hot)
clipped = clip_to_gamut(raw)
print(f"reconstructed RGB: {raw.pixels.ravel()}")
print(f"after clipping   : {clipped.pixels.ravel()}")
op = ClipOp()
op.forward(raw.pixels)
grads = op.backward(np.ones_like(raw.pixels))
print(f"gradient mask    : {grads.ravel()}  (0 where the pixel was clipped)")
