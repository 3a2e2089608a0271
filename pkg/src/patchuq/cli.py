"""Command-line front end: ``patchuq <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 every requested metric
was undefined.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import calibration, io, patch_eval, segmetrics, synth, uncertainty
from .tensors import ClassMap, InvariantError, ProbStack, argmax_prediction

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_UNDEFINED = 0, 1, 2, 3
MEASURE_FILES = {"entropy": "entropy.uet", "mi": "mi.uet"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patchuq", description="Evaluate segmentation uncertainty maps.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p, fmt_choices=("text", "json"), fmt_default="text"):
        p.add_argument("--out-dir", type=Path)
        p.add_argument("--format", choices=fmt_choices, default=fmt_default)

    def labels(p, gt=True):
        if gt:
            p.add_argument("--gt", nargs="+", required=True, help="ground-truth class maps")
        p.add_argument("--classes", type=int, help="class count (default: from stack or data)")
        p.add_argument("--ignore", type=int, help="ground-truth ignore id, e.g. 255")

    def sources(p):
        p.add_argument("--pred", nargs="+", help="predicted class maps")
        p.add_argument("--umap", nargs="+", help="uncertainty maps")
        p.add_argument("--stack", nargs="+", help="MC probability stacks (replace --pred/--umap)")
        p.add_argument("--measure", choices=("entropy", "mi"), default="entropy")

    def patches(p):
        p.add_argument("--window", type=int, default=4)
        p.add_argument("--stride", type=int)
        p.add_argument("--acc-th", type=float, default=0.5)
        p.add_argument("--edge", choices=("drop", "include"), default="drop")

    p = sub.add_parser("uncert", help="uncertainty maps from a probability stack")
    p.add_argument("stack")
    p.add_argument("--measure", choices=("entropy", "mi"), action="append")
    common(p)

    p = sub.add_parser("segscore", help="pixel accuracy, mean accuracy, mean IoU")
    p.add_argument("--pred", nargs="+")
    p.add_argument("--stack", nargs="+")
    labels(p)
    common(p)

    p = sub.add_parser("patch-eval", help="patch confusion and conditional metrics")
    sources(p)
    labels(p)
    patches(p)
    p.add_argument("--u-th", default="mean", help="mean | t=<frac> | abs=<value>")
    common(p)

    p = sub.add_parser("sweep", help="metrics over a grid of interpolated thresholds")
    sources(p)
    labels(p)
    patches(p)
    p.add_argument("--grid", type=int, default=11, help="number of evenly spaced t values")
    common(p, ("csv", "json", "text"), "csv")

    p = sub.add_parser("calib", help="ECE, MCE and temperature scaling")
    p.add_argument("--stack", nargs="+", required=True)
    labels(p)
    p.add_argument("--bins", type=int, default=calibration.DEFAULT_BINS)
    common(p)

    p = sub.add_parser("synth", help="generate a synthetic scene from a config file")
    p.add_argument("config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", type=Path, required=True)
    return parser


# -- helpers ------------------------------------------------------------------

def _pairs(a, b, what):
    if a is None or b is None or len(a) != len(b):
        raise UsageError(f"{what}: need the same number of files for each input")
    return list(zip(a, b))


def _load_stacks(paths):
    return [io.read_tensor(p, kind="prob") for p in paths]


def _load_gts(args, class_count):
    return [io.read_tensor(p, kind="class", class_count=class_count or args.classes,
                           ignore_id=args.ignore) for p in args.gt]


def _load_sources(args):
    """Predictions, uncertainty maps and ground truth for patch commands."""
    if args.stack:
        if args.pred or args.umap:
            raise UsageError("give either --stack or --pred/--umap, not both")
        stacks = _load_stacks(args.stack)
        c = stacks[0].class_count
        preds = [argmax_prediction(s) for s in stacks]
        umaps = [uncertainty.uncertainty_map(s, args.measure) for s in stacks]
    else:
        if not (args.pred and args.umap):
            raise UsageError("need --stack or both --pred and --umap")
        _pairs(args.pred, args.umap, "--pred/--umap")
        c = args.classes
        preds = [io.read_tensor(p, kind="class", class_count=c) for p in args.pred]
        c = c or max(p.class_count for p in preds)
        preds = [ClassMap(p.values, c) for p in preds]
        umaps = [io.read_tensor(p, kind="scalar") for p in args.umap]
    gts = _load_gts(args, c)
    _pairs(preds, gts, "--gt")
    return preds, umaps, gts


def _config(args) -> patch_eval.PatchConfig:
    return patch_eval.PatchConfig(
        window=args.window, stride=args.stride, accuracy_threshold=args.acc_th,
        edge_policy="include_partial" if args.edge == "include" else "drop_partial")


def _emit(text: str, args, name: str):
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / name).write_text(text)
    sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _table(rows) -> str:
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def _num(x, fmt="{:.6f}"):
    return "undefined" if x is None else fmt.format(x)


# -- commands -----------------------------------------------------------------

def cmd_uncert(args) -> int:
    stack = io.read_tensor(args.stack, kind="prob")
    summary = {}
    for m in args.measure or ["entropy", "mi"]:
        umap = uncertainty.uncertainty_map(stack, m)
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            io.write_tensor(umap, args.out_dir / MEASURE_FILES[m])
        v = umap.values
        summary[uncertainty._ALIASES[m]] = {
            "min": float(v.min()), "mean": float(v.mean()), "max": float(v.max())}
    if args.format == "json":
        _emit(_json(summary), args, "uncert.json")
    else:
        _emit(_table([(f"{k}.{s}", f"{v:.6f}") for k, d in summary.items()
                      for s, v in d.items()]), args, "uncert.txt")
    return EXIT_OK


def cmd_segscore(args) -> int:
    if bool(args.pred) == bool(args.stack):
        raise UsageError("give exactly one of --pred or --stack")
    if args.stack:
        preds = [argmax_prediction(s) for s in _load_stacks(args.stack)]
        c = preds[0].class_count
    else:
        preds = [io.read_tensor(p, kind="class", class_count=args.classes) for p in args.pred]
        c = args.classes
    gts = _load_gts(args, c)
    c = max([g.class_count for g in gts] + [p.class_count for p in preds])
    conf = segmetrics.SegConfusion.empty(c)
    for p, g in _pairs(preds, gts, "--pred/--gt"):
        conf = segmetrics.accumulate_confusion(ClassMap(p.values, c),
                                               ClassMap(g.values, c, g.ignore_id), conf)
    scores = {"pixel_accuracy": segmetrics.pixel_accuracy(conf),
              "mean_accuracy": segmetrics.mean_accuracy(conf),
              "mean_iou": segmetrics.mean_iou(conf),
              "pixels": conf.total}
    if args.format == "json":
        _emit(_json(scores), args, "segscore.json")
    else:
        _emit(_table([("pixel accuracy", f"{100 * scores['pixel_accuracy']:.2f}"),
                      ("mean accuracy", f"{100 * scores['mean_accuracy']:.2f}"),
                      ("mean IoU", f"{100 * scores['mean_iou']:.2f}"),
                      ("pixels", str(conf.total))]), args, "segscore.txt")
    return EXIT_OK


def _metrics_dict(metrics: patch_eval.PatchMetrics) -> dict:
    return dict(metrics._asdict())


def cmd_patch_eval(args) -> int:
    preds, umaps, gts = _load_sources(args)
    cfg = _config(args)
    threshold = patch_eval.ThresholdSpec.parse(args.u_th)
    result = patch_eval.evaluate(preds, gts, umaps, cfg, threshold)
    conf = result.confusion
    summary = {
        "config": {"window": cfg.window, "stride": cfg.stride,
                   "accuracy_threshold": cfg.accuracy_threshold,
                   "edge_policy": cfg.edge_policy,
                   "threshold": {"mode": threshold.mode, "value": threshold.value}},
        "conventions": dict(patch_eval.CONVENTIONS),
        "u_th": result.u_th,
        "counts": {"n_ac": conf.n_ac, "n_au": conf.n_au, "n_ic": conf.n_ic,
                   "n_iu": conf.n_iu, "skipped_patches": conf.skipped_patches},
        **_metrics_dict(result.metrics),
    }
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        for i, c in enumerate(result.per_image):
            io.write_grid_pgm(c.accuracy_grid, args.out_dir / f"accuracy_map_{i}.pgm")
            io.write_grid_pgm(c.uncertainty_grid, args.out_dir / f"uncertainty_map_{i}.pgm")
    if args.format == "json":
        _emit(_json(summary), args, "patch_eval.json")
    else:
        m = result.metrics
        _emit(_table([("u_th", f"{result.u_th:.6f}"),
                      ("n_ac", conf.n_ac), ("n_au", conf.n_au),
                      ("n_ic", conf.n_ic), ("n_iu", conf.n_iu),
                      ("skipped", conf.skipped_patches),
                      ("p(accurate|certain)", _num(m.p_accurate_given_certain)),
                      ("p(uncertain|inaccurate)", _num(m.p_uncertain_given_inaccurate)),
                      ("PAvPU", _num(m.pavpu))]), args, "patch_eval.txt")
    return EXIT_UNDEFINED if all(v is None for v in result.metrics) else EXIT_OK


def cmd_sweep(args) -> int:
    preds, umaps, gts = _load_sources(args)
    curve = patch_eval.threshold_sweep(preds, gts, umaps, _config(args),
                                       patch_eval.default_t_grid(args.grid))
    if args.format == "csv":
        _emit(io.sweep_to_csv(curve), args, "sweep.csv")
    elif args.format == "json":
        _emit(_json({"conventions": curve.conventions, "points": [
            {"t": p.t, "u_th": p.u_th,
             **dict(zip(("n_ac", "n_au", "n_ic", "n_iu"), p.confusion.counts)),
             **_metrics_dict(p.metrics)} for p in curve]}), args, "sweep.json")
    else:
        rows = [("t", "u_th p(acc|cert) p(unc|inacc) PAvPU")]
        rows += [(f"{p.t:.2f}", " ".join([f"{p.u_th:.6f}", *(_num(m) for m in p.metrics)]))
                 for p in curve]
        _emit(_table(rows), args, "sweep.txt")
    if all(v is None for p in curve for v in p.metrics):
        return EXIT_UNDEFINED
    return EXIT_OK


def cmd_calib(args) -> int:
    stacks = _load_stacks(args.stack)
    c = stacks[0].class_count
    gts = _load_gts(args, c)
    _pairs(stacks, gts, "--stack/--gt")
    # all pixels side by side in a single 1 x N image
    probs = np.concatenate([s.values.reshape(s.samples, c, 1, -1) for s in stacks], axis=3)
    gt_vals = np.concatenate([g.values.reshape(1, -1) for g in gts], axis=1)
    gt = ClassMap(gt_vals, c, args.ignore)
    stack = ProbStack(probs)
    raw = calibration.calibration_report(stack, gt, args.bins, scale=False)
    fitted = calibration.calibration_report(stack, gt, args.bins, scale=True)
    summary = {"bins": args.bins,
               "uncalibrated": asdict(raw),
               "temperature_scaled": asdict(fitted)}
    if args.format == "json":
        _emit(_json(summary), args, "calib.json")
    else:
        _emit(_table([("bins", args.bins),
                      ("ECE", f"{raw.ece:.4f}"), ("MCE", f"{raw.mce:.4f}"),
                      ("NLL", f"{raw.nll:.4f}"),
                      ("T*", f"{fitted.temperature:.3f}"),
                      ("ECE @ T*", f"{fitted.ece:.4f}"), ("MCE @ T*", f"{fitted.mce:.4f}"),
                      ("NLL @ T*", f"{fitted.nll:.4f}")]), args, "calib.txt")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = synth.load_spec(args.config, seed=args.seed)
    gt, stack = synth.generate(spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    io.write_tensor(gt, args.out_dir / "gt.uet")
    io.write_tensor(stack, args.out_dir / "stack.uet")
    sys.stdout.write(f"wrote {args.out_dir / 'gt.uet'} and {args.out_dir / 'stack.uet'}\n")
    return EXIT_OK


COMMANDS = {"uncert": cmd_uncert, "segscore": cmd_segscore, "patch-eval": cmd_patch_eval,
            "sweep": cmd_sweep, "calib": cmd_calib, "synth": cmd_synth}


def run_command(argv=None) -> int:
    """Run one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (io.TensorFormatError, InvariantError, segmetrics.UndefinedMetricError,
            ValueError, OSError) as exc:
        print(f"patchuq: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
