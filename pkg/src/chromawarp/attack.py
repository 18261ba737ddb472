"""Targeted white-box attack that warps only the chrominance of a
perceptual colorspace (or, as a baseline, all RGB channels).

The optimized variable is a per-pixel flow field.  Each iteration builds a
candidate image from the fixed benign image and the current flow, scores
it with the target model, and follows the loss gradient back through the
clip / colorspace / warp (and optional tanh) chain to update the flow with
Adam.  The loop returns as soon as the candidate is adversarial.

Success means the target logit leads every other logit by at least the
confidence margin kappa; equivalently the clamped margin loss
max(best_other - target, -kappa) sits at its floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NumericError, Rng, UsageError
from . import colorspace as cs
from .warp import BilinearWarpOp, FlowField, TanhOp, init_flow
from . import metrics as metrics_mod
from . import model as model_mod

__all__ = [
    "MODE_YCBCR_CHROMA", "MODE_LAB_CHROMA", "MODE_RGB_ALL", "MODES",
    "AttackConfig", "AttackResult", "AdamState",
    "cw_loss", "is_success", "adam_step", "synthesize", "SynthesisPipeline",
    "run_attack",
]

MODE_YCBCR_CHROMA = "ycbcr"
MODE_LAB_CHROMA = "lab"
MODE_RGB_ALL = "rgb"
MODES = (MODE_YCBCR_CHROMA, MODE_LAB_CHROMA, MODE_RGB_ALL)


@dataclass
class AttackConfig:
    mode: str = MODE_YCBCR_CHROMA
    restricted: bool = False
    kappa: float = 0.0
    max_iters: int = 500
    lr: float = 0.01
    init_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"unknown attack mode {self.mode!r}")
        if self.max_iters < 1:
            raise UsageError("max_iters must be >= 1")
        if self.lr <= 0:
            raise UsageError("lr must be > 0")
        if self.kappa < 0:
            raise UsageError("kappa must be >= 0")
        if self.init_scale < 0:
            raise UsageError("init_scale must be >= 0")


@dataclass
class AttackResult:
    success: bool
    iterations_used: int
    adversarial: cs.Image
    final_logits: np.ndarray
    final_loss: float
    metrics: dict = field(default_factory=dict)


def _margin(logits: np.ndarray, target: int):
    """(best non-target logit - target logit, index of that competitor)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise UsageError("need a 1-D logits vector with at least 2 classes")
    if not 0 <= target < z.size:
        raise UsageError(f"target {target} outside [0, {z.size})")
    masked = z.copy()
    masked[target] = -np.inf
    other = int(np.argmax(masked))  # ties break toward the lowest index
    return float(z[other] - z[target]), other


def cw_loss(logits, target: int, kappa: float):
    """Margin loss max(best_other - target, -kappa) and its logit gradient.

    The gradient is +1 on the best competing logit and -1 on the target
    logit while the margin branch is active, zero once clamped.
    """
    margin, other = _margin(logits, target)
    grad = np.zeros(np.shape(logits), dtype=np.float64)
    if margin > -kappa:
        loss = margin
        grad[other] = 1.0
        grad[target] = -1.0
    else:
        loss = -kappa
    return loss, grad


def is_success(logits, target: int, kappa: float) -> bool:
    """True once the target logit leads every other by at least kappa."""
    margin, _ = _margin(logits, target)
    return margin <= -kappa


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params, **kw):
        return cls(m=np.zeros_like(params, dtype=np.float64),
                   v=np.zeros_like(params, dtype=np.float64), **kw)


def adam_step(state: AdamState, params, grads, lr: float):
    """One bias-corrected Adam update; returns the new parameter array."""
    params = np.asarray(params)
    grads = np.asarray(grads)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise UsageError(f"adam shape mismatch: params {params.shape}, grads {grads.shape}, "
                         f"state {state.m.shape}")
    g = grads.astype(np.float64)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    step = lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return (params.astype(np.float64) - step).astype(params.dtype, copy=False)


class SynthesisPipeline:
    """Differentiable image construction from a flow field.

    Chroma modes: convert the benign image once, then per forward warp only
    the chroma planes, reassemble, convert back to RGB and clip.  RGB mode
    warps all three channels directly.  backward() maps the RGB-image
    gradient to a flow gradient.
    """

    def __init__(self, x: cs.Image, mode: str, restricted: bool):
        if x.space != cs.RGB:
            raise UsageError(f"attack input must be rgb, got {x.space}")
        if mode not in MODES:
            raise UsageError(f"unknown attack mode {mode!r}")
        self.mode = mode
        self.restricted = restricted
        self._tanh = TanhOp() if restricted else None
        self._warp = BilinearWarpOp()
        self._clip = cs.ClipOp()
        if mode == MODE_RGB_ALL:
            self._source = x.pixels
            self._to_rgb = None
        else:
            converted = cs.rgb_to_ycbcr(x) if mode == MODE_YCBCR_CHROMA else cs.rgb_to_lab(x)
            self._luma, self._chroma = cs.split_luma_chroma(converted)
            self._to_rgb = cs.YcbcrToRgbOp() if mode == MODE_YCBCR_CHROMA else cs.LabToRgbOp()
        self.last_preclip = None

    def forward(self, flow: np.ndarray) -> cs.Image:
        f = self._tanh.forward(flow) if self._tanh is not None else flow
        if self.mode == MODE_RGB_ALL:
            preclip = self._warp.forward(self._source, f)
        else:
            warped = self._warp.forward(self._chroma, f)
            stacked = np.concatenate([self._luma, warped], axis=0)
            preclip = self._to_rgb.forward(stacked)
        self.last_preclip = preclip
        return cs.Image(self._clip.forward(preclip), cs.RGB)

    def backward(self, grad_rgb: np.ndarray) -> np.ndarray:
        g = self._clip.backward(grad_rgb)
        if self.mode != MODE_RGB_ALL:
            g = self._to_rgb.backward(g)[1:]  # luma plane is constant
        _, gf = self._warp.backward(g)
        if self._tanh is not None:
            gf = self._tanh.backward(gf)
        return gf


def synthesize(x: cs.Image, f: FlowField, mode: str, restricted: bool) -> cs.Image:
    """Build the warped image for one flow (convenience, non-reusable)."""
    d = f.displacements if isinstance(f, FlowField) else np.asarray(f)
    return SynthesisPipeline(x, mode, restricted).forward(d)


def run_attack(x: cs.Image, target: int, model: model_mod.ClassifierModel,
               cfg: AttackConfig, with_metrics: bool = True) -> AttackResult:
    """Optimize a chroma (or RGB) flow until the image is adversarial.

    Returns as soon as the candidate reaches the confidence margin; on
    budget exhaustion the lowest-loss iterate seen is returned with
    success=False.  Fully deterministic for fixed inputs and config.
    """
    if x.space != cs.RGB:
        raise UsageError(f"attack input must be rgb, got {x.space}")
    if x.pixels.min() < 0.0 or x.pixels.max() > 1.0:
        raise UsageError("attack input must lie in [0, 1]")
    if not 0 <= target < model.num_classes:
        raise UsageError(f"target {target} outside [0, {model.num_classes})")

    rng = Rng(cfg.seed)
    flow = init_flow(x.height, x.width, rng, cfg.init_scale).displacements
    pipeline = SynthesisPipeline(x, cfg.mode, cfg.restricted)
    adam = AdamState.like(flow)

    best_loss = np.inf
    best = None  # (image, logits, loss)
    for it in range(cfg.max_iters):
        candidate = pipeline.forward(flow)
        logits = model_mod.forward(model, candidate)
        if not np.all(np.isfinite(logits)):
            raise NumericError(f"non-finite logits at iteration {it}; "
                               "model or flow state diverged")
        if is_success(logits, target, cfg.kappa):
            loss, _ = cw_loss(logits, target, cfg.kappa)
            return _finish(x, candidate, logits, loss, True, it, with_metrics)
        loss, grad_logits = cw_loss(logits, target, cfg.kappa)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite attack loss at iteration {it}")
        if loss < best_loss:
            best_loss = loss
            best = (candidate, logits, loss)
        grad_img = model_mod.backward_input(model, grad_logits)
        grad_flow = pipeline.backward(grad_img)
        flow = adam_step(adam, flow, grad_flow, cfg.lr)

    candidate, logits, loss = best
    return _finish(x, candidate, logits, loss, False, cfg.max_iters, with_metrics)


def _finish(benign, adversarial, logits, loss, success, iterations, with_metrics):
    report = metrics_mod.measure(benign, adversarial).to_dict() if with_metrics else {}
    return AttackResult(success=success, iterations_used=iterations,
                        adversarial=adversarial, final_logits=np.asarray(logits),
                        final_loss=float(loss), metrics=report)
