"""Adversarial image generation by spatially warping chrominance channels,
with the measurement tooling (SSIM, MS-SSIM, colorfulness, Lp norms) and a
chroma-subsampling defense needed to evaluate it."""

from .core import DiffOp, FormatError, NumericError, Rng, UsageError, derive_seed, grad_check
from .colorspace import (
    LAB, RGB, YCBCR, Image,
    clip_to_gamut, concat_luma_chroma, lab_to_rgb, rgb_to_lab, rgb_to_ycbcr,
    split_luma_chroma, ycbcr_to_rgb,
)
from .warp import FlowField, apply_flow, init_flow, restrict_flow
from .metrics import MetricReport, colorfulness, lp_norms, measure, ms_ssim, ssim
from .io_media import chroma_subsample_420, read_image, write_image
from .model import (
    REFERENCE_ARCH, ClassifierModel, accuracy, backward_input, forward,
    init_model, load_weights, predict, save_weights, train_toy,
)
from .attack import (
    MODE_LAB_CHROMA, MODE_RGB_ALL, MODE_YCBCR_CHROMA, MODES,
    AdamState, AttackConfig, AttackResult, SynthesisPipeline,
    adam_step, cw_loss, is_success, run_attack, synthesize,
)
from .datasets import grayscale_images, load_ppm_directory, synthetic_dataset

__version__ = "0.1.0"
