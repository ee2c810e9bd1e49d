"""Experiment orchestration: gain aligning, frame-budget sweeps, purification
defences, configuration and report files.
"""
import csv
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attacks import ATTACKS, AttackConfig, attack_video, averaged_rg, run_attack
from .image_core import Image, VideoSequence, as_image
from .metrics import CountingOracle, make_oracle, psnr, relative_gain, ssim, SSIM_WIN


class ConfigError(ValueError):
    """Bad or inconsistent configuration."""


class InvariantViolation(RuntimeError):
    """An IOI run broke the L-inf bound on the high-frequency perturbation."""


class AlignError(RuntimeError):
    """Gain aligning hit its probe limit without stopping."""


# -- relative gain aligning -------------------------------------------------

TARGET_REACHED = "target_reached"
STAGNATION = "stagnation"


@dataclass(frozen=True, eq=False)
class AlignResult:
    lr_found: float
    rg_achieved: float
    probes: int
    converged_by: str
    record: object = None  # whatever the last probe returned besides its RG


def search_lr(rg_fn, rg_target, d=0.005, n_stop=5, max_probes=10000):
    """Sweep the strength ``lr = 0, d, 2d, ...`` until the gain reaches
    ``rg_target`` or failed to improve on ``n_stop`` probes.

    ``rg_fn(lr)`` returns the relative gain, or a pair ``(rg, payload)``.
    The improvement counter is never reset, exactly as in the published
    listing, so the ``n_stop`` non-improving probes need not be consecutive.
    ``lr_found`` is the strength the final probe used.
    """
    if not d > 0:
        raise ValueError(f"search step d must be > 0, got {d}")
    if n_stop < 1:
        raise ValueError(f"n_stop must be >= 1, got {n_stop}")
    counter = 0
    rg_prev = 0.0
    for probe in range(max_probes):
        # k * d rather than repeated addition keeps the grid exact
        lr = probe * d
        out = rg_fn(lr)
        rg, payload = out if isinstance(out, tuple) else (out, None)
        rg = float(rg)
        reached = rg >= rg_target
        if rg <= rg_prev:
            counter += 1
        if reached or counter == n_stop:
            how = TARGET_REACHED if reached else STAGNATION
            return AlignResult(lr, rg, probe + 1, how, payload)
        rg_prev = rg
    raise AlignError(f"no stop after {max_probes} probes (last RG {rg:.4g})")


def align_gain(item, oracle, attack="ioi", rg_target=0.05, d=0.005, n_stop=5,
               cfg=AttackConfig(), workers=1):
    """Find the attack strength that reaches ``rg_target`` on an image or video.

    For a video every frame is attacked and RG is averaged over frames.
    The payload of the result is the last AttackRecord (image) or the
    ``(video, records)`` pair.
    """
    if attack not in ATTACKS:
        raise ValueError(f"unknown attack {attack!r}; choose from {ATTACKS}")

    if isinstance(item, VideoSequence):
        def rg_fn(lr):
            out = attack_video(item, oracle, dataclasses.replace(cfg, epsilon=lr),
                               frame_stride=1, attack=attack, workers=workers)
            return averaged_rg(out[1]), out
    else:
        img = as_image(item)

        def rg_fn(lr):
            rec = run_attack(attack, img, oracle, dataclasses.replace(cfg, epsilon=lr))
            return rec.rg, rec

    return search_lr(rg_fn, rg_target, d, n_stop)


# -- Figure-4 style budget sweep --------------------------------------------

@dataclass(frozen=True)
class BudgetRow:
    stride: int
    rg: float
    wall_time: float
    gradient_calls: int


def frame_budget_sweep(video, oracle, epsilon, strides, attack="ifgsm", f=0.05, workers=1):
    """Attack every ``s``-th frame with ``s`` iterations, for each stride ``s``.

    Every row spends the same number of gradient evaluations when the
    frame count is a multiple of each stride. ``wall_time`` sums the
    per-frame attack times (scoring excluded).
    """
    strides = [int(s) for s in strides]
    if not strides:
        raise ValueError("strides must not be empty")
    if any(s < 1 for s in strides):
        raise ValueError("strides must be >= 1")
    rows = []
    for s in strides:
        counted = CountingOracle(oracle)
        cfg = AttackConfig(epsilon=epsilon, f=f)
        _, records = attack_video(video, counted, cfg, frame_stride=s, attack=attack,
                                  workers=workers)
        rows.append(BudgetRow(s, averaged_rg(records),
                              float(sum(r.wall_time for r in records)),
                              counted.gradient_calls))
    return rows


# -- purification defences --------------------------------------------------

def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _defended_size(n, fraction):
    return max(1, _round_half_up(fraction * n))


def defend_random_crop(video, fraction=0.8, seed=0, min_size=1):
    """Crop every frame to ``round(fraction * H) x round(fraction * W)``.

    One offset is drawn per video from ``seed`` and shared by all frames.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    h, w, _ = video.shape
    ch, cw = _defended_size(h, fraction), _defended_size(w, fraction)
    if ch < min_size or cw < min_size:
        raise ValueError(f"crop {ch}x{cw} is below the oracle minimum {min_size}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    frames = tuple(Image(fr.data[top:top + ch, left:left + cw]) for fr in video)
    return VideoSequence(frames, video.frame_rate)


def _bilinear_taps(n_in, n_out):
    # half-pixel centres, edge samples clamped
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    return i0, i1, frac


def resize_bilinear(img, height, width):
    """Bilinear resize with half-pixel centres and no anti-aliasing."""
    x = as_image(img).data
    r0, r1, fy = _bilinear_taps(x.shape[0], height)
    c0, c1, fx = _bilinear_taps(x.shape[1], width)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    rows = x[r0] * (1.0 - fy) + x[r1] * fy
    return Image(rows[:, c0] * (1.0 - fx) + rows[:, c1] * fx)


def defend_resize(video, fraction=0.8, min_size=1):
    """Bilinearly resize every frame to ``round(fraction * H) x round(fraction * W)``."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    h, w, _ = video.shape
    oh, ow = _defended_size(h, fraction), _defended_size(w, fraction)
    if oh < min_size or ow < min_size:
        raise ValueError(f"resized frame {oh}x{ow} is below the oracle minimum {min_size}")
    return VideoSequence(tuple(resize_bilinear(fr, oh, ow) for fr in video), video.frame_rate)


DEFENCES = {
    "none": lambda video, fraction, seed, min_size: video,
    "crop": lambda video, fraction, seed, min_size: defend_random_crop(video, fraction, seed, min_size),
    "resize": lambda video, fraction, seed, min_size: defend_resize(video, fraction, min_size),
}


def defended_rg(original, adversarial, oracle, defence="crop", fraction=0.8, seed=0):
    """Mean per-frame RG between the defended original and defended adversarial.

    Both sequences go through the same transform (same crop offset).
    """
    if defence not in DEFENCES:
        raise ValueError(f"unknown defence {defence!r}; choose from {sorted(DEFENCES)}")
    if len(original) != len(adversarial) or original.shape != adversarial.shape:
        raise ValueError("original and adversarial videos differ in length or frame shape")
    apply = DEFENCES[defence]
    d_orig = apply(original, fraction, seed, oracle.min_size)
    d_adv = apply(adversarial, fraction, seed, oracle.min_size)
    gains = [relative_gain(oracle.score(a), oracle.score(o)) for o, a in zip(d_orig, d_adv)]
    return float(np.mean(gains))


# -- synthetic data -----------------------------------------------------------

def item_seed(master_seed, index):
    """Seed for item ``index`` of a run, derived from the master seed."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def toy_image(seed, height=32, width=32, channels=3):
    """Smooth random shading plus fine texture, values inside [0.1, 0.9]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    out = np.empty((height, width, channels))
    for c in range(channels):
        base = 0.5 + 0.15 * np.sin(2 * np.pi * (rng.uniform(0.5, 2) * xx + rng.uniform(0.5, 2) * yy)
                                   + rng.uniform(0, 2 * np.pi))
        out[:, :, c] = base + 0.1 * rng.standard_normal((height, width))
    return Image(np.clip(out, 0.1, 0.9))


def toy_video(seed, n_frames=16, height=32, width=32, channels=3):
    """A textured scene panning one pixel right per frame."""
    canvas = toy_image(seed, height, width + n_frames, channels).data
    frames = tuple(Image(canvas[:, t:t + width]) for t in range(n_frames))
    return VideoSequence(frames)


# -- configuration -----------------------------------------------------------

IMAGE_F = 0.07
VIDEO_F = 0.05

DEFAULTS = {
    "metric": {"name": "cnn", "seed": 0, "range": None},
    "attack": {"name": "ioi", "epsilon": 0.1, "f": None, "iterations": 1,
               "direction": "increase"},
    "align": {"rg_target": 0.05, "d": 0.005, "n_stop": 5},
    "io": {"input": None, "output": None, "frame_pattern": "%03d.png"},
    "seed": 0,
}


def load_config(path):
    """Read a JSON config file; raise :class:`ConfigError` on any problem."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def resolve_config(file_cfg=None, overrides=None, video=False):
    """Merge defaults < config file < command-line overrides.

    ``overrides`` uses dotted keys (``"attack.epsilon"``); ``None`` values
    are ignored. The IOI fraction ``f`` defaults to 0.07 for images and
    0.05 for videos.
    """
    cfg = json.loads(json.dumps(DEFAULTS))
    for section, values in (file_cfg or {}).items():
        if section not in cfg:
            raise ConfigError(f"unknown config section {section!r}")
        if section == "seed":
            cfg["seed"] = values
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, v in values.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            cfg[section][key] = v
    for dotted, v in (overrides or {}).items():
        if v is None:
            continue
        if dotted == "seed":
            cfg["seed"] = v
            continue
        section, key = dotted.split(".")
        cfg[section][key] = v
    if cfg["attack"]["f"] is None:
        cfg["attack"]["f"] = VIDEO_F if video else IMAGE_F
    _validate(cfg)
    return cfg


def _validate(cfg):
    a = cfg["attack"]
    if a["name"] not in ATTACKS:
        raise ConfigError(f"unknown attack {a['name']!r}; choose from {ATTACKS}")
    try:
        attack_config(cfg)
        make_oracle(cfg["metric"]["name"], cfg["metric"]["seed"], cfg["metric"]["range"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    al = cfg["align"]
    if not (isinstance(al["d"], (int, float)) and al["d"] > 0):
        raise ConfigError(f"align.d must be > 0, got {al['d']}")
    if not (isinstance(al["n_stop"], int) and al["n_stop"] >= 1):
        raise ConfigError(f"align.n_stop must be an integer >= 1, got {al['n_stop']}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError(f"seed must be an integer, got {cfg['seed']!r}")


def attack_config(cfg):
    a = cfg["attack"]
    return AttackConfig(epsilon=float(a["epsilon"]), f=float(a["f"]),
                        iterations=int(a["iterations"]), direction=a["direction"])


def oracle_from_config(cfg):
    m = cfg["metric"]
    return make_oracle(m["name"], m["seed"], m["range"])


# -- reports --------------------------------------------------------------------

CSV_HEADER = ("item", "attack", "rg", "psnr", "ssim", "linf", "mae_star", "bound_ok",
              "wall_time_s")
AGGREGATED = ("rg", "psnr", "ssim", "linf", "mae_star", "wall_time_s")
Z95 = 1.96


@dataclass(frozen=True)
class ReportRow:
    item: str
    attack: str
    rg: float
    psnr: float
    ssim: float
    linf: float
    mae_star: float
    bound_ok: Optional[bool]
    wall_time_s: float


@dataclass(frozen=True, eq=False)
class RunReport:
    config: dict
    rows: tuple
    aggregates: dict


def row_from_record(item, original, record):
    """Build a report row from an AttackRecord and its source image."""
    original = as_image(original)
    adv = record.adversarial
    small = original.height < SSIM_WIN or original.width < SSIM_WIN
    return ReportRow(
        item=str(item),
        attack=record.attack,
        rg=record.rg,
        psnr=psnr(original, adv),
        ssim=math.nan if small else ssim(original, adv),
        linf=record.linf,
        mae_star=record.mae_star_pert,
        bound_ok=record.bound_ok,
        wall_time_s=record.wall_time,
    )


def fmt_float(v):
    """9 significant digits; non-finite values as ``inf``, ``-inf``, ``nan``."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".9g")


def _fmt_bool(v):
    return "" if v is None else ("true" if v else "false")


def _json_float(v):
    s = fmt_float(v)
    return float(s) if math.isfinite(float(v)) else s


def confidence_half_width(values):
    """1.96 * sample std / sqrt(n); 0 for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(Z95 * v.std(ddof=1) / math.sqrt(v.size))


def aggregate(rows):
    """Mean and 95% half-width per numeric column, over finite values only."""
    out = {}
    for col in AGGREGATED:
        vals = [getattr(r, col) for r in rows]
        finite = [v for v in vals if math.isfinite(v)]
        out[col] = {
            "mean": float(np.mean(finite)) if finite else math.nan,
            "half_width": confidence_half_width(finite) if finite else math.nan,
            "count": len(finite),
        }
    return out


def check_rows(rows):
    for r in rows:
        if r.attack == "ioi" and r.bound_ok is False:
            raise InvariantViolation(
                f"item {r.item}: IOI perturbation exceeds the high-frequency bound "
                f"(linf {r.linf:.9g}, MAE* {r.mae_star:.9g})")


def report_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.item, r.attack, fmt_float(r.rg), fmt_float(r.psnr),
                         fmt_float(r.ssim), fmt_float(r.linf), fmt_float(r.mae_star),
                         _fmt_bool(r.bound_ok), fmt_float(r.wall_time_s)])
    return buf.getvalue()


def report_json(report):
    doc = {
        "config": report.config,
        "rows": [{k: (_json_float(v) if isinstance(v, float) else v)
                  for k, v in dataclasses.asdict(r).items()} for r in report.rows],
        "aggregates": {col: {k: (_json_float(v) if isinstance(v, float) else v)
                             for k, v in agg.items()}
                       for col, agg in report.aggregates.items()},
        "confidence": "normal approximation: 1.96 * std(ddof=1) / sqrt(count)",
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_report(rows, out_dir=None, config=None):
    """Build a :class:`RunReport`; with ``out_dir`` also write report.csv and
    report.json there.

    Raises :class:`InvariantViolation` if an IOI row failed its bound check.
    """
    rows = tuple(rows)
    if not rows:
        raise ValueError("a report needs at least one row")
    check_rows(rows)
    report = RunReport(dict(config or {}), rows, aggregate(rows))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(report_csv(rows))
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(report_json(report))
    return report


def read_report_csv(path):
    """Load rows written by :func:`emit_report`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            item, attack, rg, ps, ss, linf, mae, ok, wt = rec
            rows.append(ReportRow(item, attack, float(rg), float(ps), float(ss), float(linf),
                                  float(mae), None if ok == "" else ok == "true", float(wt)))
    return rows
