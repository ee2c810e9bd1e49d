"""Gradient-sign attacks and the one-iteration IOI composition.

IOI perturbs with FGSM, keeps the original image's strongest Fourier
coefficients untouched, and lets the perturbation through only in the
remaining (high-frequency) coefficients, scaled per pixel by the
relative-variance weight map::

    I_a = L(I) + w * H(I_p) + (1 - w) * H(I)

where L/H split coefficients by the top-f mask of the ORIGINAL image.
"""
import concurrent.futures
import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.fft

from . import spectral
from .image_core import Image, VideoSequence, as_image, clamp_unit
from .metrics import admit, relative_gain
from .weighting import WeightMap, ioi_weights, nvw_weights, sobel_weights

DIRECTIONS = {"increase": 1.0, "decrease": -1.0}
BOUND_ATOL = 1e-9


class AttackError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    """Attack strength and IOI parameters.

    ``epsilon`` is the FGSM step (the strength ``lr`` swept by gain
    aligning); 0 is allowed and yields the identity attack.
    """

    epsilon: float = 0.1
    f: float = 0.07
    iterations: int = 1
    direction: str = "increase"
    clamp_steps: bool = False

    def __post_init__(self):
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not 0.0 < self.f < 1.0:
            raise ValueError(f"f must lie in (0, 1), got {self.f}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be a positive integer, got {self.iterations}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {sorted(DIRECTIONS)}")


@dataclass(frozen=True, eq=False)
class AttackRecord:
    """Outcome of one attack on one image.

    ``linf`` is measured before the final clamp. ``bound_ok`` is None for
    attacks other than IOI. ``wall_time`` covers generating the adversarial
    image (gradients, frequency and weighting modules), not the scoring used
    for ``rg``.
    """

    adversarial: Image
    rg: float
    linf: float
    mae_star_pert: float
    bound_ok: Optional[bool]
    wall_time: float
    score_orig: float
    score_adv: float
    attack: str = "ioi"
    f: Optional[float] = None
    attacked: bool = True


def _direction(direction):
    try:
        return DIRECTIONS[direction]
    except KeyError:
        raise ValueError(f"direction must be one of {sorted(DIRECTIONS)}") from None


def _signed_gradient(x, oracle, sign):
    """sign(grad M(x)) times the direction, plus the score at ``x``."""
    score, g = oracle.score_and_gradient(x)
    # a finite sum is a cheap proof that every entry is finite
    if not np.isfinite(np.sum(g)):
        bad = ~np.isfinite(g)
        if bad.any():
            y, xx, c = np.argwhere(bad)[0]
            raise AttackError(
                f"{oracle.name}: non-finite gradient at pixel (row={y}, col={xx}, channel={c})")
    s = np.sign(g)
    if sign != 1.0:
        s *= sign
    return s, score


def _admitted(img, oracle):
    img = as_image(img)
    admit(getattr(oracle, "inner", oracle), img.channels)
    return img


def _fgsm_steps(img, oracle, step, n, direction, clamp_steps=False):
    """``n`` signed-gradient steps from ``img``; returns the raw array and
    the score of ``img``."""
    sign = _direction(direction)
    cur = img
    first_score = None
    for _ in range(n):
        s, score = _signed_gradient(cur, oracle, sign)
        if first_score is None:
            first_score = score
        s *= step
        s += cur.data
        if clamp_steps:
            np.clip(s, 0.0, 1.0, out=s)
        cur = Image.adopt(s)
    return cur.data, first_score


def fgsm(img, oracle, epsilon, direction="increase"):
    """One signed-gradient step of size ``epsilon`` (not clamped)."""
    img = _admitted(img, oracle)
    x, _ = _fgsm_steps(img, oracle, epsilon, 1, direction)
    return Image.adopt(x)


def i_fgsm(img, oracle, epsilon, n, direction="increase", step=None, clamp_steps=False):
    """``n`` signed-gradient steps of ``epsilon / n`` (or ``step``)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    img = _admitted(img, oracle)
    step = epsilon / n if step is None else step
    x, _ = _fgsm_steps(img, oracle, step, n, direction, clamp_steps)
    return Image.adopt(x)


def weighted_fgsm(img, oracle, epsilon, weights, direction="increase"):
    """FGSM with the step scaled per pixel by a weight map."""
    img = _admitted(img, oracle)
    w = weights.weights if isinstance(weights, WeightMap) else np.asarray(weights, dtype=np.float64)
    if w.shape != img.shape:
        raise ValueError(f"weight map shape {w.shape} does not match image {img.shape}")
    s, _ = _signed_gradient(img, oracle, _direction(direction))
    return Image.adopt(img.data + epsilon * w * s)


# -- IOI composition -------------------------------------------------------

def compose_adversarial(img, perturbed, idx, weights):
    """Literal three-term composition on full spectra (reference route).

    Returns the unclamped adversarial image.
    """
    img, perturbed = as_image(img), as_image(perturbed)
    lf_i, hf_i = spectral.split_lf_hf(spectral.fft2(img), idx)
    _, hf_p = spectral.split_lf_hf(spectral.fft2(perturbed), idx)
    w = weights.weights if isinstance(weights, WeightMap) else np.asarray(weights)
    out = (spectral.ifft2(lf_i).data + w * spectral.ifft2(hf_p).data
           + (1.0 - w) * spectral.ifft2(hf_i).data)
    return Image(out)


def hf_perturbation(img, perturbed, f):
    """High-frequency part of ``perturbed - img`` under the original's top-f mask.

    Uses real-input transforms: since the composition is linear,
    ``I_a - I = w * ifft2(H(I_p - I))``, and the real part of that inverse
    transform only needs the mask averaged with its point reflection.
    Returns ``(hf, mae_star_per_channel)``.
    """
    x = as_image(img).data
    h, w, nc = x.shape
    # channel-first copies keep every transform on a contiguous plane
    xc = np.ascontiguousarray(np.moveaxis(x, 2, 0))
    dc = np.moveaxis(as_image(perturbed).data, 2, 0) - xc
    k = spectral.retained_count(f, h, w)
    orig_half = scipy.fft.rfft2(xc)
    d_half = scipy.fft.rfft2(dc)
    mae = (np.abs(d_half) @ spectral.half_weights(w)).sum(axis=1) / (h * w)
    for c in range(nc):
        keep = spectral.topk_mask(spectral.full_magnitude_from_half(orig_half[c], w), k)
        d_half[c] *= 1.0 - spectral.symmetric_half_mask(keep)
    hf = np.moveaxis(scipy.fft.irfft2(d_half, s=(h, w)), 0, 2)
    return hf, mae


def ioi_attack(img, oracle, cfg=AttackConfig()):
    """Run the IOI attack and score it.

    With ``cfg.iterations > 1`` the perturbation comes from I-FGSM with step
    ``2 * epsilon / iterations``; the frequency and weighting modules always
    run once, on the final perturbed image.
    """
    img = _admitted(img, oracle)
    if img.height < 8 or img.width < 8:
        raise ValueError(f"IOI needs at least 8x8 pixels, got {img.height}x{img.width}")
    t0 = time.perf_counter()
    n = int(cfg.iterations)
    step = cfg.epsilon if n == 1 else 2.0 * cfg.epsilon / n
    xp, score_orig = _fgsm_steps(img, oracle, step, n, cfg.direction, cfg.clamp_steps)
    hf, mae = hf_perturbation(img, xp, cfg.f)
    w = ioi_weights(img).weights
    raw = img.data + w * hf
    linf = float(np.max(np.abs(raw - img.data)))
    adversarial = clamp_unit(raw)
    wall = time.perf_counter() - t0
    score_adv = oracle.score(adversarial)
    mae_star_pert = float(mae.mean())
    rec = AttackRecord(
        adversarial=adversarial,
        rg=relative_gain(score_adv, score_orig),
        linf=linf,
        mae_star_pert=mae_star_pert,
        bound_ok=None,
        wall_time=wall,
        score_orig=score_orig.value,
        score_adv=score_adv.value,
        attack="ioi",
        f=cfg.f,
    )
    return dataclasses.replace(rec, bound_ok=verify_theorem1(rec, cfg.f))


def verify_theorem1(record, f):
    """Check ||I_a - I||_inf <= (1 - f) * MAE*(I_p, I) on a pre-clamp record."""
    return bool(record.linf <= (1.0 - f) * record.mae_star_pert + BOUND_ATOL)


# -- attack registry -------------------------------------------------------

def _baseline(name, img, oracle, cfg):
    img = _admitted(img, oracle)
    t0 = time.perf_counter()
    sign = _direction(cfg.direction)
    if name == "fgsm":
        xp, score_orig = _fgsm_steps(img, oracle, cfg.epsilon, 1, cfg.direction)
    elif name == "ifgsm":
        n = int(cfg.iterations)
        xp, score_orig = _fgsm_steps(img, oracle, cfg.epsilon / n, n, cfg.direction,
                                     cfg.clamp_steps)
    elif name in ("nvw", "korhonen"):
        wmap = nvw_weights(img) if name == "nvw" else sobel_weights(img)
        s, score_orig = _signed_gradient(img, oracle, sign)
        xp = img.data + cfg.epsilon * wmap.weights * s
    else:
        raise ValueError(f"unknown attack {name!r}")
    adversarial = clamp_unit(xp)
    wall = time.perf_counter() - t0
    score_adv = oracle.score(adversarial)
    return AttackRecord(
        adversarial=adversarial,
        rg=relative_gain(score_adv, score_orig),
        linf=float(np.max(np.abs(xp - img.data))),
        mae_star_pert=spectral.mae_star(Image(xp), img),
        bound_ok=None,
        wall_time=wall,
        score_orig=score_orig.value,
        score_adv=score_adv.value,
        attack=name,
    )


ATTACKS = ("ioi", "fgsm", "ifgsm", "nvw", "korhonen")


def run_attack(name, img, oracle, cfg=AttackConfig()):
    """Run any registered attack and return its :class:`AttackRecord`.

    ``nvw`` and ``korhonen`` are FGSM weighted by the local-variance and
    Sobel maps respectively.
    """
    if name == "ioi":
        return ioi_attack(img, oracle, cfg)
    if name not in ATTACKS:
        raise ValueError(f"unknown attack {name!r}; choose from {ATTACKS}")
    return _baseline(name, img, oracle, cfg)


def _untouched(frame):
    return AttackRecord(adversarial=frame, rg=0.0, linf=0.0, mae_star_pert=0.0,
                        bound_ok=None, wall_time=0.0, score_orig=math.nan,
                        score_adv=math.nan, attack="none", attacked=False)


def attack_video(video, oracle, cfg=AttackConfig(), frame_stride=1, attack="ioi", workers=1):
    """Attack every ``frame_stride``-th frame (starting at 0) with
    ``frame_stride`` iterations each; other frames pass through unchanged.

    Returns the new :class:`VideoSequence` and one record per frame.
    Untouched frames get ``rg = 0``; :func:`averaged_rg` averages over all
    frames.
    """
    if frame_stride < 1:
        raise ValueError("frame_stride must be >= 1")
    frame_cfg = dataclasses.replace(cfg, iterations=int(frame_stride))
    targets = [i for i in range(len(video)) if i % frame_stride == 0]
    # admit once up front so worker threads do not race on the probe
    _admitted(video[0], oracle)

    def work(i):
        return run_attack(attack, video[i], oracle, frame_cfg)

    if workers > 1 and oracle.thread_safe and len(targets) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(work, targets))
    else:
        done = [work(i) for i in targets]
    by_index = dict(zip(targets, done))
    records = [by_index.get(i) or _untouched(video[i]) for i in range(len(video))]
    frames = tuple(r.adversarial for r in records)
    return VideoSequence(frames, video.frame_rate), records


def averaged_rg(records):
    """Mean relative gain over all frames, attacked or not."""
    return float(np.mean([r.rg for r in records]))
