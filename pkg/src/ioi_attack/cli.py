"""Command-line entry point (``ioi-attack``).

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 invariant
violation (an IOI run broke its L-inf bound).
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import harness
from .attacks import ATTACKS, attack_video, ioi_attack, run_attack
from .harness import ConfigError, InvariantViolation
from .image_core import DecodeError, FrameSequenceError, load_frames, load_png, save_frames, save_png
from .metrics import OracleError
from .weighting import WEIGHT_MAPS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4


def _add_common(p, video=False):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--input", help="input PNG" + (" frame directory" if video else ""))
    p.add_argument("--output", help="output location")
    p.add_argument("--metric", help="toy oracle: cnn or laplace")
    p.add_argument("--metric-seed", type=int)
    p.add_argument("--attack", choices=ATTACKS)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--f", type=float, help="fraction of retained Fourier coefficients")
    p.add_argument("--iterations", type=int)
    p.add_argument("--direction", choices=("increase", "decrease"))
    p.add_argument("--seed", type=int)
    if video:
        p.add_argument("--frame-pattern")


def _parser():
    parser = argparse.ArgumentParser(prog="ioi-attack",
                                     description="High-frequency adversarial attacks on quality metrics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack one image")
    _add_common(p)
    p.add_argument("--report", help="directory for report.csv / report.json")

    p = sub.add_parser("attack-video", help="attack a frame sequence")
    _add_common(p, video=True)
    p.add_argument("--stride", type=int, default=1, help="attack every n-th frame with n iterations")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report", help="directory for report.csv / report.json")

    p = sub.add_parser("align", help="search the strength that reaches a target gain")
    _add_common(p, video=True)
    p.add_argument("--rg-target", type=float)
    p.add_argument("--d", type=float, help="search step")
    p.add_argument("--n-stop", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("framebudget", help="RG versus frame stride at equal gradient budget")
    _add_common(p, video=True)
    p.add_argument("--strides", default="1,2,4,8")

    p = sub.add_parser("defend", help="RG after crop and resize purification")
    _add_common(p, video=True)
    p.add_argument("--adversarial", required=True, help="adversarial frame directory")
    p.add_argument("--defence", choices=("none", "crop", "resize", "all"), default="all")
    p.add_argument("--fraction", type=float, default=0.8)

    p = sub.add_parser("weights-dump", help="write a weight map as .npy or PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kind", choices=sorted(WEIGHT_MAPS), default="ioi")

    p = sub.add_parser("verify-bound", help="check the IOI L-inf bound on random or given images")
    _add_common(p)
    p.add_argument("--count", type=int, default=50, help="random images when --input is absent")
    p.add_argument("--size", type=int, default=32)

    p = sub.add_parser("report", help="recompute aggregates from a report CSV")
    p.add_argument("--input", required=True, help="report.csv")
    p.add_argument("--output", help="directory for the rebuilt report")
    return parser


def _resolve(args, video=False):
    file_cfg = harness.load_config(args.config) if getattr(args, "config", None) else None
    overrides = {
        "metric.name": getattr(args, "metric", None),
        "metric.seed": getattr(args, "metric_seed", None),
        "attack.name": getattr(args, "attack", None),
        "attack.epsilon": getattr(args, "epsilon", None),
        "attack.f": getattr(args, "f", None),
        "attack.iterations": getattr(args, "iterations", None),
        "attack.direction": getattr(args, "direction", None),
        "align.rg_target": getattr(args, "rg_target", None),
        "align.d": getattr(args, "d", None),
        "align.n_stop": getattr(args, "n_stop", None),
        "io.input": getattr(args, "input", None),
        "io.output": getattr(args, "output", None),
        "io.frame_pattern": getattr(args, "frame_pattern", None),
        "seed": getattr(args, "seed", None),
    }
    return harness.resolve_config(file_cfg, overrides, video=video)


def _need(cfg, key):
    v = cfg["io"][key]
    if not v:
        raise ConfigError(f"missing --{key} (or io.{key} in the config)")
    return v


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_attack(args):
    cfg = _resolve(args)
    oracle = harness.oracle_from_config(cfg)
    src = _need(cfg, "input")
    img = load_png(src)
    rec = run_attack(cfg["attack"]["name"], img, oracle, harness.attack_config(cfg))
    row = harness.row_from_record(os.path.basename(src), img, rec)
    if cfg["io"]["output"]:
        save_png(rec.adversarial, cfg["io"]["output"])
    report = harness.emit_report([row], args.report, cfg)
    _print_json({"rg": rec.rg, "score_orig": rec.score_orig, "score_adv": rec.score_adv,
                 "linf": rec.linf, "bound_ok": rec.bound_ok,
                 "psnr": harness.fmt_float(row.psnr), "ssim": harness.fmt_float(row.ssim)})
    return report


def cmd_attack_video(args):
    cfg = _resolve(args, video=True)
    oracle = harness.oracle_from_config(cfg)
    video = load_frames(_need(cfg, "input"), cfg["io"]["frame_pattern"])
    adv, records = attack_video(video, oracle, harness.attack_config(cfg), args.stride,
                                cfg["attack"]["name"], args.workers)
    rows = [harness.row_from_record(f"frame{i:03d}", fr, rec)
            for i, (fr, rec) in enumerate(zip(video, records)) if rec.attacked]
    if cfg["io"]["output"]:
        save_frames(adv, cfg["io"]["output"], cfg["io"]["frame_pattern"])
    harness.emit_report(rows, args.report, cfg)
    _print_json({"averaged_rg": float(np.mean([r.rg for r in records])),
                 "attacked_frames": len(rows), "frames": len(records)})


def _load_item(path, pattern):
    return load_frames(path, pattern) if os.path.isdir(path) else load_png(path)


def cmd_align(args):
    cfg = _resolve(args, video=bool(args.input and os.path.isdir(args.input)))
    oracle = harness.oracle_from_config(cfg)
    item = _load_item(_need(cfg, "input"), cfg["io"]["frame_pattern"])
    al = cfg["align"]
    res = harness.align_gain(item, oracle, cfg["attack"]["name"], al["rg_target"], al["d"],
                             al["n_stop"], harness.attack_config(cfg), args.workers)
    _print_json({"lr_found": res.lr_found, "rg_achieved": res.rg_achieved,
                 "probes": res.probes, "converged_by": res.converged_by})


def cmd_framebudget(args):
    cfg = _resolve(args, video=True)
    oracle = harness.oracle_from_config(cfg)
    video = load_frames(_need(cfg, "input"), cfg["io"]["frame_pattern"])
    try:
        strides = [int(s) for s in args.strides.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--strides must be comma-separated integers, got {args.strides!r}") from None
    # the budget sweep defaults to I-FGSM; --attack picks another attack
    attack = args.attack or "ifgsm"
    rows = harness.frame_budget_sweep(video, oracle, cfg["attack"]["epsilon"], strides,
                                      attack, cfg["attack"]["f"])
    out = [{"stride": r.stride, "rg": r.rg, "wall_time_s": r.wall_time,
            "gradient_calls": r.gradient_calls} for r in rows]
    if cfg["io"]["output"]:
        os.makedirs(cfg["io"]["output"], exist_ok=True)
        with open(os.path.join(cfg["io"]["output"], "framebudget.csv"), "w", encoding="utf-8") as fh:
            fh.write("stride,rg,wall_time_s,gradient_calls\n")
            for r in rows:
                fh.write(f"{r.stride},{harness.fmt_float(r.rg)},"
                         f"{harness.fmt_float(r.wall_time)},{r.gradient_calls}\n")
    _print_json(out)


def cmd_defend(args):
    cfg = _resolve(args, video=True)
    oracle = harness.oracle_from_config(cfg)
    pattern = cfg["io"]["frame_pattern"]
    original = load_frames(_need(cfg, "input"), pattern)
    adversarial = load_frames(args.adversarial, pattern)
    names = ("none", "crop", "resize") if args.defence == "all" else (args.defence,)
    out = {name: harness.defended_rg(original, adversarial, oracle, name, args.fraction, cfg["seed"])
           for name in names}
    _print_json(out)


def cmd_weights_dump(args):
    img = load_png(args.input)
    w = WEIGHT_MAPS[args.kind](img).weights
    if args.output.endswith(".npy"):
        np.save(args.output, w)
    else:
        save_png(w, args.output)
    _print_json({"kind": args.kind, "min": float(w.min()), "max": float(w.max()),
                 "mean": float(w.mean())})


def cmd_verify_bound(args):
    cfg = _resolve(args)
    oracle = harness.oracle_from_config(cfg)
    acfg = harness.attack_config(cfg)
    if cfg["io"]["input"]:
        items = [(os.path.basename(cfg["io"]["input"]), load_png(cfg["io"]["input"]))]
    else:
        items = [(f"random{i:04d}", harness.toy_image(harness.item_seed(cfg["seed"], i),
                                                      args.size, args.size))
                 for i in range(args.count)]
    worst = 0.0
    failures = []
    for name, img in items:
        rec = ioi_attack(img, oracle, acfg)
        bound = (1.0 - acfg.f) * rec.mae_star_pert
        if bound > 0:
            worst = max(worst, rec.linf / bound)
        if not rec.bound_ok:
            failures.append(name)
    _print_json({"checked": len(items), "failures": failures, "max_linf_over_bound": worst})
    if failures:
        raise InvariantViolation(f"bound violated on {len(failures)} of {len(items)} images")


def cmd_report(args):
    rows = harness.read_report_csv(args.input)
    report = harness.emit_report(rows, args.output)
    _print_json({col: agg for col, agg in report.aggregates.items()})


COMMANDS = {
    "attack": cmd_attack,
    "attack-video": cmd_attack_video,
    "align": cmd_align,
    "framebudget": cmd_framebudget,
    "defend": cmd_defend,
    "weights-dump": cmd_weights_dump,
    "verify-bound": cmd_verify_bound,
    "report": cmd_report,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, OracleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DecodeError, FrameSequenceError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
