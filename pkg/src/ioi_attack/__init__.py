"""High-frequency adversarial attacks on differentiable no-reference quality metrics."""
from .attacks import (ATTACKS, AttackConfig, AttackError, AttackRecord, attack_video, averaged_rg,
                      fgsm, i_fgsm, ioi_attack, run_attack, verify_theorem1, weighted_fgsm)
from .harness import (AlignResult, ConfigError, InvariantViolation, align_gain, defend_random_crop,
                      defend_resize, emit_report, frame_budget_sweep, search_lr)
from .image_core import Image, VideoSequence, clamp_unit, load_frames, load_png, save_frames, save_png
from .kernels import BACKEND
from .metrics import LaplaceSharpness, MetricScore, ToyCNN, make_oracle, psnr, relative_gain, ssim
from .spectral import fft2, ifft2, mae_star, select_topf
from .weighting import WeightMap, ioi_weights, nvw_weights, sobel_weights

__version__ = "0.1.0"
