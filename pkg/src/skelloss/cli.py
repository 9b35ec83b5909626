"""Command-line entry point.

One binary, one subcommand per module.  Exit status is 0 on success, 1
on a validation problem (bad flags or bad input values), 2 on a runtime
failure.  ``--json`` turns stdout into a single JSON document; schemas
live in docs/schemas/.  All randomness is controlled by explicit --seed
flags; nothing is seeded from the clock.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .classifier import TrainConfig, evaluate, predict, train
from .experiment import (ExperimentConfig, config_from_dict, run_experiment,
                         write_outputs)
from .gradcheck import (analytic_grad, category_audit, compare_grads,
                        finite_diff_grad, loss_evaluator, random_label_mask,
                        random_prob_map)
from .io import read_pgm, read_prob_map, write_pgm, write_weights
from .losses import LossConfig, combined_loss, srl_loss
from .metrics import METRIC_NAMES, evaluate_masks
from .raster import (StructuringElement, binarize, skeletonize,
                     skeletonize_no_ts, tubed_skeletonize)
from .stats import t_test_one_sided
from .synth import KINDS, SynthConfig, foreground_fraction, generate, load_dataset, save_dataset


class UsageError(Exception):
    """Malformed command line; maps to exit status 1 with usage text."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(x: float) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------- helpers


def _se(args) -> StructuringElement:
    return StructuringElement.parse(args.se)


def _load_mask(path) -> np.ndarray:
    labels, _ = read_pgm(path)
    return labels


def _breakdown_lines(payload) -> list[str]:
    return [f"{key:>6}  {_fmt(payload[key])}" for key in ("dice", "cce", "srl", "total")]


# ------------------------------------------------------------ subcommands


def cmd_skeletonize(args):
    labels, maxval = read_pgm(args.infile)
    se = _se(args)
    if args.no_ts:
        out, mode = skeletonize_no_ts(labels, se), "no-ts"
    elif args.tubed:
        out, mode = tubed_skeletonize(labels, se), "tubed"
    else:
        out, mode = skeletonize(binarize(labels)).astype(np.int64), "skeleton"
    write_pgm(args.outfile, out, maxval=1 if mode == "skeleton" else max(1, maxval))
    payload = {
        "command": "skeletonize",
        "mode": mode,
        "in": str(args.infile),
        "out": str(args.outfile),
        "se": se.spec(),
        "foreground_in": int(np.count_nonzero(labels)),
        "foreground_out": int(np.count_nonzero(out)),
    }
    return payload, [f"{mode}: {payload['foreground_in']} -> {payload['foreground_out']} "
                     f"foreground pixels, wrote {args.outfile}"]


def cmd_transform(args):
    args.tubed = not args.no_ts
    payload, lines = cmd_skeletonize(args)
    payload["command"] = "transform"
    return payload, lines


def cmd_loss(args):
    pred = read_prob_map(args.pred)
    gt = _load_mask(args.gt)
    cfg = LossConfig(alpha=args.alpha, epsilon=args.epsilon,
                     include_background=args.include_background)
    if args.tubed is not None:
        tubed = _load_mask(args.tubed)
    else:
        tubed = tubed_skeletonize(gt, _se(args))
    breakdown, _ = combined_loss(pred, gt, tubed, cfg)
    _, _, active = srl_loss(pred, tubed, cfg)
    payload = {
        "command": "loss",
        "alpha": args.alpha,
        "dice": breakdown.dice,
        "cce": breakdown.cce,
        "srl": breakdown.srl,
        "total": breakdown.total,
        "active_classes": list(active),
    }
    return payload, _breakdown_lines(payload)


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    gt = random_label_mask(args.size, num_classes=args.classes, rng=rng)
    pred = random_prob_map(args.size, num_classes=args.classes, rng=rng)
    tubed = tubed_skeletonize(gt, _se(args))
    cfg = LossConfig(alpha=args.alpha, epsilon=args.epsilon)
    analytic = analytic_grad(args.loss, pred, gt, tubed, cfg)
    fd = finite_diff_grad(loss_evaluator(args.loss, gt, tubed, cfg), pred, h=args.h)
    comp = compare_grads(analytic, fd, tol=args.tol)
    payload = {
        "command": "gradcheck",
        "loss": args.loss,
        "size": args.size,
        "seed": args.seed,
        "num_classes": args.classes,
        "h": args.h,
        "tol": comp.tol,
        "max_abs_err": comp.max_abs_err,
        "max_rel_err": comp.max_rel_err,
        "worst_entry": list(comp.worst_entry),
        "passed": comp.passed,
    }
    verdict = "PASS" if comp.passed else "FAIL"
    return payload, [f"{args.loss}: max_rel_err {_fmt(comp.max_rel_err)} "
                     f"(tol {_fmt(comp.tol)}) {verdict}"]


def cmd_audit(args):
    pred = read_prob_map(args.pred)
    gt = _load_mask(args.gt)
    if args.tubed is not None:
        tubed = _load_mask(args.tubed)
    else:
        tubed = tubed_skeletonize(gt, _se(args))
    cfg = LossConfig(include_background=args.include_background)
    report = category_audit(pred, gt, tubed, threshold=args.threshold, cfg=cfg)
    payload = {"command": "audit", **report.to_json()}
    lines = [f"zero_off_skeleton={report.zero_off_skeleton} "
             f"constant_on_skeleton={report.constant_on_skeleton}"]
    for b in report.buckets:
        where = "on " if b.on_skeleton else "off"
        lines.append(f"class {b.class_id} {b.category} {where} target: "
                     f"n={b.count} mean={_fmt(b.grad_mean)}")
    return payload, lines


def cmd_eval(args):
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    names = sorted(p.name for p in pred_dir.glob("*.pgm"))
    if not names:
        raise ValueError(f"{pred_dir}: no .pgm files")
    pairs = []
    for name in names:
        if not (gt_dir / name).exists():
            raise ValueError(f"{gt_dir / name}: no ground truth for prediction {name}")
        pairs.append((_load_mask(pred_dir / name), _load_mask(gt_dir / name)))
    num_classes = args.classes
    if num_classes is None:
        num_classes = max(1, max(max(int(p.max()), int(g.max())) for p, g in pairs))

    rows = []
    macro_sums = {name: [] for name in METRIC_NAMES}
    for name, (pred, gt) in zip(names, pairs):
        report = evaluate_masks(pred, gt, num_classes=num_classes)
        for k in sorted(report.per_class):
            rows.append([name, k] + [_fmt(report.per_class[k][m]) for m in METRIC_NAMES])
        rows.append([name, "macro"] + [_fmt(report.macro[m]) for m in METRIC_NAMES])
        for m in METRIC_NAMES:
            macro_sums[m].append(report.macro[m])
    with open(args.csv, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "class"] + list(METRIC_NAMES))
        writer.writerows(rows)
    mean_macro = {m: math.fsum(vals) / len(vals) for m, vals in macro_sums.items()}
    payload = {
        "command": "eval",
        "pred_dir": str(pred_dir),
        "gt_dir": str(gt_dir),
        "csv": str(args.csv),
        "images": len(names),
        "num_classes": num_classes,
        "mean_macro": mean_macro,
    }
    lines = [f"{len(names)} images -> {args.csv}"]
    lines += [f"{m:>6}  {mean_macro[m]:.2f}" for m in METRIC_NAMES]
    return payload, lines


def _metric_column(path, metric: str) -> list[float]:
    """Values of one named column; restricted to macro rows when present."""
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or metric not in reader.fieldnames:
            raise ValueError(f"{path}: no column named {metric!r}")
        rows = list(reader)
    if rows and "class" in rows[0]:
        rows = [r for r in rows if r["class"] == "macro"]
    return [float(r[metric]) for r in rows]


def cmd_ttest(args):
    a = _metric_column(args.a, args.metric)
    b = _metric_column(args.b, args.metric)
    res = t_test_one_sided(a, b, args.direction)
    payload = {
        "command": "ttest",
        "metric": args.metric,
        "direction": args.direction,
        "n_a": len(a),
        "n_b": len(b),
        "mean_a": math.fsum(a) / len(a),
        "mean_b": math.fsum(b) / len(b),
        "t": res.t_value,
        "df": res.df,
        "p": res.p_value,
        "significant": bool(res.p_value < 0.05),
    }
    star = " *" if payload["significant"] else ""
    return payload, [f"{args.metric}: t={_fmt(res.t_value)} df={_fmt(res.df)} "
                     f"p={_fmt(res.p_value)}{star}"]


def cmd_synth(args):
    cfg = SynthConfig(kind=args.kind, count=args.count, size=args.size,
                      shapes_per_image=args.shapes,
                      width_range=(args.width_min, args.width_max),
                      noise_sigma=args.noise, contrast=args.contrast,
                      seed=args.seed, num_classes=args.classes)
    samples = generate(cfg)
    save_dataset(samples, args.out, cfg)
    mean_fg = math.fsum(foreground_fraction(s.gt) for s in samples) / len(samples)
    payload = {
        "command": "synth",
        "out": str(args.out),
        "kind": cfg.kind,
        "count": cfg.count,
        "size": cfg.size,
        "seed": cfg.seed,
        "mean_foreground_fraction": mean_fg,
    }
    return payload, [f"wrote {cfg.count} {cfg.kind} samples to {args.out} "
                     f"(mean foreground {100 * mean_fg:.1f}%)"]


def cmd_train(args):
    samples = load_dataset(args.data)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, alpha=args.alpha,
                      use_ts=not args.no_ts, use_dice=not args.no_dice,
                      use_cce=not args.no_cce, epsilon=args.epsilon,
                      include_background=args.include_background,
                      se_shape=_se(args).shape, se_radius=_se(args).radius,
                      threshold=args.threshold, seed=args.seed)
    result = train([s.image for s in samples], [s.gt for s in samples], cfg)
    write_weights(args.out, result.weights)
    payload = {
        "command": "train",
        "data": str(args.data),
        "params": str(args.out),
        "epochs": cfg.epochs,
        "num_classes": result.num_classes,
        "final": None,
        "eval": None,
    }
    lines = [f"trained {cfg.epochs} epochs on {len(samples)} images -> {args.out}"]
    if result.history:
        last = result.history[-1]
        payload["final"] = {"dice": last.dice, "cce": last.cce,
                            "srl": last.srl, "total": last.total}
        lines += _breakdown_lines(payload["final"])
    if args.history is not None:
        with open(args.history, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "dice", "cce", "srl", "total"])
            writer.writerows([epoch, _fmt(b.dice), _fmt(b.cce), _fmt(b.srl), _fmt(b.total)]
                             for epoch, b in enumerate(result.history))
        lines.append(f"history -> {args.history}")
    if args.eval_data is not None:
        held = load_dataset(args.eval_data)
        ev = evaluate(result.weights, [s.image for s in held], [s.gt for s in held],
                      cfg.threshold, result.num_classes)
        payload["eval"] = dict(ev.mean)
        lines += [f"{m:>6}  {ev.mean[m]:.2f}" for m in METRIC_NAMES]
        if args.pred_dir is not None:
            pred_dir = Path(args.pred_dir)
            pred_dir.mkdir(parents=True, exist_ok=True)
            for s in held:
                mask = predict(result.weights, s.image, cfg.threshold)
                write_pgm(pred_dir / f"gt_{s.index:03d}.pgm", mask,
                          maxval=max(1, result.num_classes))
            lines.append(f"predictions -> {pred_dir}")
    elif args.pred_dir is not None:
        raise ValueError("--pred-dir requires --eval-data")
    return payload, lines


def _summary_payload(summary) -> dict:
    return {arm: {metric: {"mean": mean, "std": std}
                  for metric, (mean, std) in metrics.items()}
            for arm, metrics in summary.items()}


def _render_summary(arms, summary) -> list[str]:
    header = f"{'arm':<12}" + "".join(f"{m:>18}" for m in METRIC_NAMES)
    lines = [header]
    for arm in arms:
        cells = [f"{summary[arm][m]['mean']:.2f} +- {summary[arm][m]['std']:.2f}"
                 for m in METRIC_NAMES]
        lines.append(f"{arm:<12}" + "".join(f"{c:>18}" for c in cells))
    return lines


def _render_ttests(rows) -> list[str]:
    if not rows:
        return []
    lines = ["", f"one-sided Welch t-tests vs {rows[0]['baseline']} "
                 "(p < 0.05: significant improvement, p > 0.95: significant worsening)"]
    for r in rows:
        mark = ""
        if r["p"] < 0.05:
            mark = "  [improved]"
        elif r["p"] > 0.95:
            mark = "  [worsened]"
        lines.append(f"{r['arm']:<12}{r['metric']:>8}  t={r['t']:+.3f}  "
                     f"df={r['df']:.2f}  p={r['p']:.4f}{mark}")
    return lines


def cmd_experiment(args):
    if args.config is not None:
        data = json.loads(Path(args.config).read_text(encoding="ascii"))
        config = config_from_dict(data)
    else:
        config = ExperimentConfig()
    result = run_experiment(config, jobs=args.jobs)
    files = write_outputs(result, args.out)
    ttest_rows = [{"arm": r.arm, "baseline": r.baseline, "metric": r.metric,
                   "alternative": r.alternative, "t": r.t_value, "df": r.df,
                   "p": r.p_value} for r in result.ttests]
    payload = {
        "command": "experiment",
        "out": str(args.out),
        "jobs": args.jobs,
        "arms": list(config.arms),
        "seeds": list(config.seeds),
        "files": files,
        "summary": _summary_payload(result.summary),
        "ttests": ttest_rows,
    }
    lines = [f"{len(result.runs)} runs -> {args.out}"]
    lines += _render_summary(config.arms, payload["summary"])
    lines += _render_ttests(ttest_rows)
    return payload, lines


def cmd_report(args):
    directory = Path(args.dir)
    summary: dict[str, dict[str, tuple[float, float]]] = {}
    arms: list[str] = []
    with open(directory / "report.csv", newline="", encoding="ascii") as fh:
        for row in csv.DictReader(fh):
            arm = row["arm"]
            if arm not in summary:
                summary[arm] = {}
                arms.append(arm)
            summary[arm][row["metric"]] = (float(row["mean"]), float(row["std"]))
    ttest_rows = []
    ttests_path = directory / "ttests.csv"
    if ttests_path.exists():
        with open(ttests_path, newline="", encoding="ascii") as fh:
            for row in csv.DictReader(fh):
                ttest_rows.append({"arm": row["arm"], "baseline": row["baseline"],
                                   "metric": row["metric"],
                                   "alternative": row["alternative"],
                                   "t": float(row["t"]), "df": float(row["df"]),
                                   "p": float(row["p"])})
    payload = {
        "command": "report",
        "dir": str(directory),
        "arms": arms,
        "summary": _summary_payload(summary),
        "ttests": ttest_rows,
    }
    lines = _render_summary(arms, payload["summary"])
    lines += _render_ttests(ttest_rows)
    return payload, lines


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true",
                        help="emit a single JSON document on stdout")
    common.add_argument("--quiet", action="store_true",
                        help="suppress plain-text output")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for commands that draw random numbers")

    parser = _Parser(prog="skelloss",
                     description="skeleton-recall loss laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    def add(name, func, help, se=False):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        if se:
            p.add_argument("--se", default="square:1",
                           help="structuring element, e.g. square:1 or disk:2")
        return p

    p = add("skeletonize", cmd_skeletonize, "thin a mask; optionally dilate and re-mask",
            se=True)
    p.add_argument("--in", dest="infile", required=True, help="input mask (PGM)")
    p.add_argument("--out", dest="outfile", required=True, help="output mask (PGM)")
    p.add_argument("--tubed", action="store_true",
                   help="dilate the skeleton and re-mask by the input labels")
    p.add_argument("--no-ts", dest="no_ts", action="store_true",
                   help="dilate without re-masking (escapes the input support)")

    p = add("transform", cmd_transform, "tubed skeletonization of a label mask", se=True)
    p.add_argument("--in", dest="infile", required=True, help="input mask (PGM)")
    p.add_argument("--out", dest="outfile", required=True, help="output mask (PGM)")
    p.add_argument("--no-ts", dest="no_ts", action="store_true",
                   help="skip the final re-masking step")

    p = add("loss", cmd_loss, "combined loss of a prediction against a mask", se=True)
    p.add_argument("--pred", required=True, help="probability field (SLPM)")
    p.add_argument("--gt", required=True, help="ground-truth mask (PGM)")
    p.add_argument("--tubed", default=None,
                   help="skeleton target mask (PGM); derived from --gt when omitted")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--include-background", action="store_true")

    p = add("gradcheck", cmd_gradcheck, "analytic vs finite-difference gradient", se=True)
    p.add_argument("--loss", required=True, choices=("srl", "dice", "cce", "combined"))
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--classes", type=int, default=1)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1e-6)

    p = add("audit", cmd_audit, "bucket the recall gradient by pixel category", se=True)
    p.add_argument("--pred", required=True, help="probability field (SLPM)")
    p.add_argument("--gt", required=True, help="ground-truth mask (PGM)")
    p.add_argument("--tubed", default=None,
                   help="skeleton target mask (PGM); derived from --gt when omitted")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--include-background", action="store_true")

    p = add("eval", cmd_eval, "score predicted masks against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--csv", required=True, help="output CSV path")
    p.add_argument("--classes", type=int, default=None)

    p = add("ttest", cmd_ttest, "one-sided Welch t-test between two CSV columns")
    p.add_argument("--a", required=True, help="CSV with the first sample")
    p.add_argument("--b", required=True, help="CSV with the second sample")
    p.add_argument("--metric", required=True, help="column to compare")
    p.add_argument("--direction", default="greater", choices=("greater", "less"),
                   help="alternative hypothesis for mean(a) vs mean(b)")

    p = add("synth", cmd_synth, "generate a synthetic dataset")
    p.add_argument("--kind", default="tubular", choices=KINDS)
    p.add_argument("--count", type=int, default=80)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--shapes", type=int, default=3, help="shapes per image")
    p.add_argument("--width-min", type=int, default=1)
    p.add_argument("--width-max", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.12)
    p.add_argument("--contrast", type=float, default=0.6)
    p.add_argument("--classes", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")

    p = add("train", cmd_train, "train the pixel classifier on a dataset directory", se=True)
    p.add_argument("--data", required=True, help="dataset directory (see synth)")
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--history", default=None, help="per-epoch loss CSV")
    p.add_argument("--eval-data", default=None, help="held-out dataset directory")
    p.add_argument("--pred-dir", default=None,
                   help="dump hard predictions for --eval-data here")
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--no-ts", dest="no_ts", action="store_true")
    p.add_argument("--no-dice", action="store_true")
    p.add_argument("--no-cce", action="store_true")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--include-background", action="store_true")
    p.add_argument("--threshold", type=float, default=0.5)

    p = add("experiment", cmd_experiment, "train and compare arms across seeds")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers; output bytes do not depend on it")

    p = add("report", cmd_report, "render an experiment output directory")
    p.add_argument("--dir", required=True, help="experiment output directory")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        payload, lines = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures: I/O, divergence, ...
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.json:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    elif not args.quiet:
        for line in lines:
            print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
