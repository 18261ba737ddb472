"""Why chroma warping cannot touch a grayscale image.

A gray pixel maps to exactly Cb = Cr = 128 (and a* = b* = 0), so the
chroma planes are constant; warping a constant plane returns the same
plane, and the attack has no degrees of freedom left.  This demo measures
that failure directly and relates it to the colorfulness index.

Run from the repository root:  python3 demos/03_grayscale_limits.py
"""

import numpy as np

from chromawarp import (
    AttackConfig, Image, REFERENCE_ARCH, RGB, Rng,
    colorfulness, forward, grayscale_images, init_model, run_attack,
    synthetic_dataset, train_toy,
)

rng = Rng(1234)
images, labels = synthetic_dataset(rng, per_class=40)
model = init_model(REFERENCE_ARCH, (3, 32, 32), Rng(99))
train_toy(model, images, labels, epochs=30, lr=0.003, rng=Rng(99))

print("colorfulness of a few dataset images vs grayscale ones:")
for i in range(3):
    print(f"  colorful #{i}: {colorfulness(Image(images[i], RGB)):.3f}")
grays = grayscale_images(Rng(8), 3)
for i, g in enumerate(grays):
    print(f"  grayscale #{i}: {colorfulness(Image(g, RGB)):.3f}")

print("\nattacking the grayscale images in chroma mode (expect failures):")
for i, g in enumerate(grays):
    img = Image(g, RGB)
    pred = int(np.argmax(forward(model, img)))
    target = (pred + 3) % 10
    cfg = AttackConfig(mode="ycbcr", kappa=0.0, max_iters=150, lr=0.01, seed=i)
    result = run_attack(img, target, model, cfg, with_metrics=False)
    shift = np.abs(result.adversarial.pixels - g).max()
    print(f"  image {i}: success={result.success}  "
          f"max pixel change={shift:.2e}  (spent all {result.iterations_used} iterations)")

print("\nthe same images fall to an RGB warp immediately:")
for i, g in enumerate(grays):
    img = Image(g, RGB)
    pred = int(np.argmax(forward(model, img)))
    cfg = AttackConfig(mode="rgb", kappa=0.0, max_iters=300, lr=0.01, seed=i)
    result = run_attack(img, (pred + 3) % 10, model, cfg, with_metrics=False)
    print(f"  image {i}: success={result.success} after {result.iterations_used} iterations")
