import numpy as np
import pytest

from chromawarp.core import NumericError, Rng, UsageError
from chromawarp.colorspace import RGB, Image, rgb_to_lab, rgb_to_ycbcr
from chromawarp.warp import FlowField, TanhOp, apply_flow
from chromawarp.model import ClassifierModel, _build_layers, forward, init_model, train_toy
from chromawarp.datasets import grayscale_images, synthetic_dataset
from chromawarp.attack import (
    MODE_LAB_CHROMA, MODE_RGB_ALL, MODE_YCBCR_CHROMA,
    AdamState, AttackConfig, adam_step, cw_loss, is_success, run_attack, synthesize,
)

SMALL_ARCH = [
    {"type": "conv2d", "out_channels": 6, "kernel": 3, "stride": 1, "pad": 1},
    {"type": "relu"},
    {"type": "maxpool2d", "window": 2, "stride": 2},
    {"type": "flatten"},
    {"type": "dense", "out_features": 4},
]


@pytest.fixture(scope="module")
def small_model():
    rng = Rng(2718)
    images, labels = synthetic_dataset(rng, num_classes=4, per_class=20, size=16)
    model = init_model(SMALL_ARCH, (3, 16, 16), rng)
    train_toy(model, images, labels, epochs=25, lr=0.004, rng=rng)
    return model


@pytest.fixture(scope="module")
def test_image():
    images, _ = synthetic_dataset(Rng(31415), num_classes=4, per_class=1, size=16)
    return Image(images[0], RGB)


def test_cw_loss_clamped_branch():
    loss, grad = cw_loss(np.array([10.0, 0.0]), target=0, kappa=0.0)
    assert loss == 0.0
    assert np.array_equal(grad, [0.0, 0.0])


def test_cw_loss_active_branch():
    loss, grad = cw_loss(np.array([0.0, 10.0]), target=0, kappa=0.0)
    assert loss == 10.0
    assert np.array_equal(grad, [-1.0, 1.0])


def test_cw_loss_margin_below_confidence():
    loss, grad = cw_loss(np.array([7.0, 2.0, 1.0]), target=0, kappa=10.0)
    assert loss == -5.0
    assert is_success(np.array([7.0, 2.0, 1.0]), 0, 10.0) is False


def test_cw_loss_tie_breaks_to_lowest_index():
    _, grad = cw_loss(np.array([0.0, 4.0, 4.0]), target=0, kappa=0.0)
    assert np.array_equal(grad, [-1.0, 1.0, 0.0])


def test_cw_loss_usage_errors():
    with pytest.raises(UsageError):
        cw_loss(np.array([1.0]), 0, 0.0)
    with pytest.raises(UsageError):
        cw_loss(np.array([1.0, 2.0]), 5, 0.0)


def test_is_success_boundaries():
    logits = np.zeros(3)
    logits[1] = 10.0
    assert is_success(logits, 1, 10.0) is True       # margin exactly kappa
    logits[1] = 9.99
    assert is_success(logits, 1, 10.0) is False
    assert is_success(np.array([3.0, 1.0]), 0, 0.0) is True  # argmax at kappa=0


def test_adam_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0, 3.0])
    state = AdamState.like(p)
    out = adam_step(state, p, np.zeros(3), lr=0.1)
    assert np.array_equal(out, p)


def test_adam_first_step_is_signed_lr():
    p = np.zeros(4)
    g = np.array([3.0, -0.5, 1e3, -2.0])
    out = adam_step(AdamState.like(p), p, g, lr=0.05)
    assert np.allclose(out, -0.05 * np.sign(g), atol=0.05 * 1e-4)


def test_adam_constant_gradient_does_not_blow_up():
    p = np.zeros(3)
    g = np.full(3, 0.7)
    state = AdamState.like(p)
    p1 = adam_step(state, p, g, lr=0.01)
    first = np.abs(p1 - p).max()
    p2 = adam_step(state, p1, g, lr=0.01)
    second = np.abs(p2 - p1).max()
    assert second <= first + 1e-6 * 0.01


def test_adam_shape_mismatch():
    state = AdamState.like(np.zeros(3))
    with pytest.raises(UsageError):
        adam_step(state, np.zeros(3), np.zeros(4), lr=0.1)


def test_synthesize_zero_flow_is_identity(test_image):
    zero = FlowField(np.zeros((2, 16, 16), np.float32))
    for mode in (MODE_YCBCR_CHROMA, MODE_LAB_CHROMA, MODE_RGB_ALL):
        out = synthesize(test_image, zero, mode, restricted=False)
        tol = 0.0 if mode == MODE_RGB_ALL else 1e-5
        assert np.abs(out.pixels - test_image.pixels).max() <= tol


def test_synthesize_grayscale_is_warp_invariant():
    gray = Image(grayscale_images(Rng(5), 1, size=16)[0], RGB)
    f = FlowField(Rng(6).uniform_array((2, 16, 16), -3.0, 3.0, np.float32))
    for mode in (MODE_YCBCR_CHROMA, MODE_LAB_CHROMA):
        out = synthesize(gray, f, mode, restricted=False)
        assert np.abs(out.pixels - gray.pixels).max() < 1e-5


def test_synthesize_restricted_stays_subpixel(test_image):
    huge = np.full((2, 16, 16), 100.0, np.float32)
    out = synthesize(test_image, FlowField(huge), MODE_YCBCR_CHROMA, restricted=True)
    # The restricted warp must equal warping by tanh(flow); saturated float32
    # tanh rounds to exactly 1, i.e. one pixel of displacement at most.
    squashed = TanhOp().forward(huge)
    assert np.abs(squashed).max() <= 1.0
    conv = rgb_to_ycbcr(test_image)
    warped_chroma = apply_flow(conv.pixels[1:], squashed)
    expected = synthesize(test_image, FlowField(squashed.astype(np.float32)),
                          MODE_YCBCR_CHROMA, restricted=False)
    assert np.abs(out.pixels - expected.pixels).max() < 1e-6
    assert np.abs(rgb_to_ycbcr(out).pixels[1:] - warped_chroma).max() < 0.5


def test_run_attack_early_exit_on_already_successful_target(small_model, test_image):
    current = int(np.argmax(forward(small_model, test_image)))
    cfg = AttackConfig(mode=MODE_YCBCR_CHROMA, kappa=0.0, max_iters=10, seed=3)
    result = run_attack(test_image, current, small_model, cfg)
    assert result.success and result.iterations_used == 0
    assert np.abs(result.adversarial.pixels - test_image.pixels).max() < 0.05


def test_run_attack_grayscale_fails_with_unchanged_image(small_model):
    gray = Image(grayscale_images(Rng(8), 1, size=16)[0], RGB)
    pred = int(np.argmax(forward(small_model, gray)))
    cfg = AttackConfig(mode=MODE_YCBCR_CHROMA, kappa=0.0, max_iters=20, seed=4)
    result = run_attack(gray, (pred + 1) % 4, small_model, cfg)
    assert not result.success
    assert result.iterations_used == cfg.max_iters
    assert np.abs(result.adversarial.pixels - gray.pixels).max() < 1e-5


def test_run_attack_success_and_result_contract(small_model, test_image):
    pred = int(np.argmax(forward(small_model, test_image)))
    target = (pred + 2) % 4
    cfg = AttackConfig(mode=MODE_YCBCR_CHROMA, kappa=0.0, max_iters=300, lr=0.01, seed=5)
    result = run_attack(test_image, target, small_model, cfg)
    assert result.success
    assert 0.0 <= result.adversarial.pixels.min() and result.adversarial.pixels.max() <= 1.0
    # Success must hold on a fresh forward pass of the returned image.
    fresh = forward(small_model, result.adversarial)
    assert is_success(fresh, target, cfg.kappa)
    assert set(result.metrics) >= {"ssim", "ms_ssim", "l0", "l2", "linf"}


def test_run_attack_is_deterministic(small_model, test_image):
    pred = int(np.argmax(forward(small_model, test_image)))
    cfg = AttackConfig(mode=MODE_LAB_CHROMA, kappa=0.0, max_iters=80, seed=6)
    r1 = run_attack(test_image, (pred + 1) % 4, small_model, cfg)
    r2 = run_attack(test_image, (pred + 1) % 4, small_model, cfg)
    assert r1.success == r2.success
    assert r1.iterations_used == r2.iterations_used
    assert np.array_equal(r1.adversarial.pixels, r2.adversarial.pixels)
    assert np.array_equal(r1.final_logits, r2.final_logits)


def test_run_attack_luma_preserved_on_success(small_model, test_image):
    pred = int(np.argmax(forward(small_model, test_image)))
    for mode, conv in ((MODE_YCBCR_CHROMA, rgb_to_ycbcr), (MODE_LAB_CHROMA, rgb_to_lab)):
        cfg = AttackConfig(mode=mode, kappa=0.0, max_iters=300, seed=7)
        result = run_attack(test_image, (pred + 1) % 4, small_model, cfg)
        if not result.success:
            continue
        inside = np.all((result.adversarial.pixels > 0)
                        & (result.adversarial.pixels < 1), axis=0)
        y_in = conv(test_image).pixels[0]
        y_out = conv(result.adversarial).pixels[0]
        assert np.abs(y_out - y_in)[inside].max() < 1e-3


def test_run_attack_aborts_on_nonfinite_loss(test_image):
    layers = _build_layers([{"type": "flatten"}, {"type": "dense", "out_features": 3}],
                           (3, 16, 16))
    layers[1].weight = np.full((3, 768), 1e38, np.float32)
    broken = ClassifierModel(layers, (3, 16, 16))
    cfg = AttackConfig(mode=MODE_RGB_ALL, kappa=0.0, max_iters=5, seed=8)
    with np.errstate(over="ignore"), pytest.raises(NumericError):
        run_attack(test_image, 0, broken, cfg)


def test_attack_config_validation():
    with pytest.raises(UsageError):
        AttackConfig(mode="hsv")
    with pytest.raises(UsageError):
        AttackConfig(max_iters=0)
    with pytest.raises(UsageError):
        AttackConfig(lr=0.0)
    with pytest.raises(UsageError):
        AttackConfig(kappa=-1.0)


def test_run_attack_validates_inputs(small_model, test_image):
    with pytest.raises(UsageError):
        run_attack(test_image, 99, small_model, AttackConfig())
    out_of_range = Image(test_image.pixels + 2.0, RGB)
    with pytest.raises(UsageError):
        run_attack(out_of_range, 0, small_model, AttackConfig())
    with pytest.raises(UsageError):
        run_attack(rgb_to_ycbcr(test_image), 0, small_model, AttackConfig())
