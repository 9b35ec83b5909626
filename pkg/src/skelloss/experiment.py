"""Training-arm comparison harness.

An experiment trains one classifier per (arm, seed) pair on freshly
generated synthetic data and compares test metrics across arms with
one-sided Welch t-tests against the first arm.  Every run is a pure
function of (config, arm, seed), so results are reproducible byte for
byte and independent of worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .classifier import TrainConfig, evaluate, train
from .io import write_weights
from .metrics import METRIC_HIGHER_IS_BETTER, METRIC_NAMES
from .stats import TTestResult, summarize, t_test_one_sided
from .synth import SynthConfig, generate, split

ARM_NAMES = ("vanilla", "srl", "srl-no-ts")


def arm_config(base: TrainConfig, arm: str) -> TrainConfig:
    """Training configuration of one arm.

    vanilla drops the skeleton-recall term (alpha=0); srl keeps the base
    alpha; srl-no-ts keeps alpha but skips re-masking the dilated
    skeleton by the ground truth.
    """
    if arm == "vanilla":
        return dataclasses.replace(base, alpha=0.0, use_ts=True)
    if arm == "srl":
        return dataclasses.replace(base, use_ts=True)
    if arm == "srl-no-ts":
        return dataclasses.replace(base, use_ts=False)
    raise ValueError(f"arm must be one of {ARM_NAMES}, got {arm!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Dataset, base training setup, arms and seeds of one experiment."""

    dataset: SynthConfig = SynthConfig()
    train: TrainConfig = TrainConfig()
    arms: tuple[str, ...] = ("vanilla", "srl")
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    train_fraction: float = 0.8

    def __post_init__(self):
        if len(self.arms) < 1:
            raise ValueError("need at least one arm")
        if len(set(self.arms)) != len(self.arms):
            raise ValueError(f"duplicate arms in {self.arms}")
        for arm in self.arms:
            if arm not in ARM_NAMES:
                raise ValueError(f"arm must be one of {ARM_NAMES}, got {arm!r}")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"duplicate seeds in {self.seeds}")
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def config_to_dict(config: ExperimentConfig) -> dict:
    return dataclasses.asdict(config)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Inverse of :func:`config_to_dict`; unknown keys are rejected."""
    data = dict(data)
    kwargs = {}
    if "dataset" in data:
        ds = dict(data.pop("dataset"))
        if "width_range" in ds:
            ds["width_range"] = tuple(ds["width_range"])
        kwargs["dataset"] = SynthConfig(**ds)
    if "train" in data:
        kwargs["train"] = TrainConfig(**data.pop("train"))
    for key in ("arms", "seeds"):
        if key in data:
            kwargs[key] = tuple(data.pop(key))
    if "train_fraction" in data:
        kwargs["train_fraction"] = data.pop("train_fraction")
    if data:
        raise ValueError(f"unknown experiment config keys: {sorted(data)}")
    return ExperimentConfig(**kwargs)


@dataclass(frozen=True)
class RunResult:
    """Outcome of training one arm on one seed."""

    arm: str
    seed: int
    metrics: dict  # metric name -> mean macro value over test images
    history: tuple  # LossBreakdown per epoch
    weights: object  # (num_classes + 1, num_features) float64


def run_single(config: ExperimentConfig, arm: str, seed: int) -> RunResult:
    """Generate data for ``seed``, train the ``arm``, evaluate on the test cut."""
    data_cfg = dataclasses.replace(config.dataset, seed=seed)
    samples = generate(data_cfg)
    train_set, test_set = split(samples, config.train_fraction, seed)
    tc = dataclasses.replace(arm_config(config.train, arm), seed=seed)
    fitted = train([s.image for s in train_set], [s.gt for s in train_set], tc,
                   num_classes=config.dataset.num_classes)
    ev = evaluate(fitted.weights, [s.image for s in test_set], [s.gt for s in test_set],
                  tc.threshold, fitted.num_classes)
    return RunResult(arm=arm, seed=seed, metrics=dict(ev.mean),
                     history=fitted.history, weights=fitted.weights)


def _run_job(args) -> RunResult:
    return run_single(*args)


@dataclass(frozen=True)
class TTestRow:
    """One arm-vs-baseline comparison on one metric.

    ``p_value`` is oriented toward improvement: the alternative is
    "arm beats baseline" in the metric's better direction, so p < 0.05
    flags a significant gain and p > 0.95 a significant loss.
    """

    arm: str
    baseline: str
    metric: str
    alternative: str
    t_value: float
    df: float
    p_value: float


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    runs: tuple  # RunResult, ordered by (arm, seed) as configured
    summary: dict  # arm -> metric -> (mean, std)
    ttests: tuple  # TTestRow vs the first arm


def seed_values(runs, arm: str, metric: str) -> list[float]:
    return [r.metrics[metric] for r in runs if r.arm == arm]


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Run every (arm, seed) pair and compare arms against the first one.

    ``jobs > 1`` fans the independent runs out to worker processes;
    results are assembled in the canonical (arm, seed) order either way.
    """
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    specs = [(config, arm, seed) for arm in config.arms for seed in config.seeds]
    if jobs == 1 or len(specs) == 1:
        runs = [_run_job(spec) for spec in specs]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(specs))) as pool:
            runs = list(pool.map(_run_job, specs))

    summary = {}
    for arm in config.arms:
        summary[arm] = {}
        for metric in METRIC_NAMES:
            values = seed_values(runs, arm, metric)
            if len(values) >= 2:
                summary[arm][metric] = summarize(values)
            else:
                summary[arm][metric] = (values[0], 0.0)

    ttests = []
    baseline = config.arms[0]
    if len(config.seeds) >= 2:
        for arm in config.arms[1:]:
            for metric in METRIC_NAMES:
                alternative = "greater" if METRIC_HIGHER_IS_BETTER[metric] else "less"
                res: TTestResult = t_test_one_sided(
                    seed_values(runs, arm, metric),
                    seed_values(runs, baseline, metric),
                    alternative,
                )
                ttests.append(TTestRow(arm=arm, baseline=baseline, metric=metric,
                                       alternative=alternative, t_value=res.t_value,
                                       df=res.df, p_value=res.p_value))
    return ExperimentResult(config=config, runs=tuple(runs),
                            summary=summary, ttests=tuple(ttests))


def _fmt(x: float) -> str:
    return "%.17g" % x


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_outputs(result: ExperimentResult, directory) -> list[str]:
    """Write CSV reports and per-run weights; returns the file names written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    _write_csv(directory / "report.csv", ["arm", "metric", "mean", "std"],
               [[arm, metric, _fmt(mean), _fmt(std)]
                for arm in result.config.arms
                for metric, (mean, std) in result.summary[arm].items()])
    written.append("report.csv")

    _write_csv(directory / "seed_metrics.csv", ["arm", "seed", "metric", "value"],
               [[r.arm, r.seed, metric, _fmt(r.metrics[metric])]
                for r in result.runs for metric in METRIC_NAMES])
    written.append("seed_metrics.csv")

    _write_csv(directory / "ttests.csv",
               ["arm", "baseline", "metric", "alternative", "t", "df", "p"],
               [[row.arm, row.baseline, row.metric, row.alternative,
                 _fmt(row.t_value), _fmt(row.df), _fmt(row.p_value)]
                for row in result.ttests])
    written.append("ttests.csv")

    _write_csv(directory / "history.csv",
               ["arm", "seed", "epoch", "dice", "cce", "srl", "total"],
               [[r.arm, r.seed, epoch, _fmt(b.dice), _fmt(b.cce), _fmt(b.srl), _fmt(b.total)]
                for r in result.runs for epoch, b in enumerate(r.history)])
    written.append("history.csv")

    for r in result.runs:
        name = f"params_{r.arm}_{r.seed}.bin"
        write_weights(directory / name, r.weights)
        written.append(name)

    (directory / "config.json").write_text(
        json.dumps(config_to_dict(result.config), indent=2, sort_keys=True) + "\n",
        encoding="ascii")
    written.append("config.json")
    return written
