"""Experiment specs, run drivers, ablation grids and the overhead benchmark."""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, checks
from .augment import AugKind, UPPGConfig
from .encoder import EncoderConfig
from .evaluation import EvalReport, fingerprint, oracle_positive_experiment, train_and_evaluate
from .graph import GraphDataset, load_tudataset, synthesize_degree_features
from .selector import DistanceKind, SelectionMode
from .trainer import PHASES, PairMode, TrainConfig, train

logger = logging.getLogger(__name__)

DATA_ENV = "SRGCL_DATA"
AXES = ("distance", "temperature_s", "augmentations", "candidate_c")


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one run; ``out`` and ``verbosity`` do not enter the id."""

    dataset: str = "MUTAG"
    dataset_dir: Optional[str] = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    folds: int = 10
    repeats: int = 5
    degree_cap: Optional[int] = 10
    out: str = "runs"
    verbosity: int = 0

    def validate(self, dataset: Optional[GraphDataset] = None) -> None:
        self.encoder.validate()
        self.train.validate()
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.degree_cap is not None and self.degree_cap < 1:
            raise ValueError(f"degree_cap must be >= 1, got {self.degree_cap}")
        if dataset is not None and dataset.d_feat == 0 and self.degree_cap is None:
            raise ValueError(f"dataset {dataset.name!r} has no node features: set degree_cap")

    def resolved(self) -> dict:
        """The fields that determine every numeric output."""
        return {
            "dataset": self.dataset,
            "encoder": asdict(self.encoder),
            "train": self.train.to_dict(),
            "folds": self.folds,
            "repeats": self.repeats,
            "degree_cap": self.degree_cap,
        }

    @property
    def experiment_id(self) -> str:
        return fingerprint(self.resolved())

    def to_dict(self) -> dict:
        return {**self.resolved(), "dataset_dir": self.dataset_dir, "out": self.out, "verbosity": self.verbosity}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        if "encoder" in d:
            d["encoder"] = EncoderConfig.from_dict(d["encoder"])
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        return cls(**d)

    def copy(self) -> "ExperimentSpec":
        return copy.deepcopy(self)


def dataset_root(spec: ExperimentSpec) -> Path:
    root = spec.dataset_dir or os.environ.get(DATA_ENV)
    if not root:
        raise FileNotFoundError(f"no dataset directory: pass --dataset-dir or set {DATA_ENV}")
    root = Path(root)
    nested = root / spec.dataset
    return nested if (nested / f"{spec.dataset}_A.txt").exists() else root


def load_dataset(spec: ExperimentSpec) -> GraphDataset:
    ds = load_tudataset(dataset_root(spec), spec.dataset)
    spec.validate(ds)
    if ds.d_feat == 0:
        ds = synthesize_degree_features(ds, spec.degree_cap)
    return ds


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_experiment(spec: ExperimentSpec, dataset: Optional[GraphDataset] = None, oracle: bool = False) -> tuple[EvalReport, Path]:
    """Train and evaluate per ``spec``; write spec, trace, report and checkpoints.

    Output lands in ``<out>/<experiment id>/``.
    """
    spec.validate()
    ds = dataset if dataset is not None else load_dataset(spec)
    run_dir = Path(spec.out) / (spec.experiment_id + ("-oracle" if oracle else ""))
    ckpt = run_dir / "checkpoint"
    ckpt.mkdir(parents=True, exist_ok=True)
    header = {"version": __version__, "spec": spec.resolved(), "oracle": oracle}
    _write_json(run_dir / "spec.json", header)

    def save(r, epoch, params):
        params.save(ckpt / f"repeat{r}_epoch{epoch}.npz")

    report, traces = train_and_evaluate(ds, spec.encoder, spec.train, spec.folds, spec.repeats,
                                        oracle=oracle, checkpoint_hook=save)
    _write_json(run_dir / "trace.json", {**header, "repeats": [t.to_dict() for t in traces]})
    _write_json(run_dir / "report.json", {**header, "report": report.to_dict()})
    (run_dir / "report.csv").write_text(report.to_csv())
    logger.info("%s: %s", run_dir.name, report.summary())
    return report, run_dir


def run_oracle(spec: ExperimentSpec, dataset: Optional[GraphDataset] = None) -> tuple[EvalReport, EvalReport]:
    """Both arms of the oracle-positive comparison, written next to each other."""
    spec.validate()
    ds = dataset if dataset is not None else load_dataset(spec)
    base = spec.copy()
    base.train.selector.mode = SelectionMode.RANDOM
    arm_a, _ = run_experiment(base, ds)
    arm_b, _ = run_experiment(base, ds, oracle=True)
    return arm_a, arm_b


def apply_axis(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    """Copy of ``spec`` with one ablation axis set to ``value``."""
    out = spec.copy()
    if axis == "distance":
        out.train.selector.distance = DistanceKind.parse(str(value))
    elif axis == "temperature_s":
        out.train.selector.s = float(value)
    elif axis == "augmentations":
        kinds = [AugKind.parse(k) for k in str(value).replace("+", ",").split(",") if k.strip()]
        out.train.uppg = UPPGConfig.uniform(kinds, out.train.uppg.ratio, out.train.uppg.c)
    elif axis == "candidate_c":
        out.train.uppg.c = int(value)
    else:
        raise ValueError(f"unknown ablation axis {axis!r}; choose from {AXES}")
    out.validate()
    return out


@dataclass
class AblationGrid:
    axis: str
    values: Sequence
    base: ExperimentSpec

    def validate(self) -> None:
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not len(self.values):
            raise ValueError("ablation values must be non-empty")
        for v in self.values:
            apply_axis(self.base, self.axis, v)


def _ablation_job(args):
    spec, dataset = args
    try:
        report, run_dir = run_experiment(spec, dataset)
        return report.to_dict(), str(run_dir), None
    except (ValueError, FloatingPointError, RuntimeError) as exc:
        return None, None, f"{type(exc).__name__}: {exc}"


def run_ablation(grid: AblationGrid, workers: int = 1, normalize_to=None,
                 dataset: Optional[GraphDataset] = None) -> tuple[list, str]:
    """One run per axis value with shared seeds; failures are recorded and the grid continues.

    Returns ``(rows, csv_text)``. The ``normalized`` column divides each mean
    by the mean at ``normalize_to`` (default: the first value).
    """
    grid.validate()
    ds = dataset if dataset is not None else load_dataset(grid.base)
    jobs = [(apply_axis(grid.base, grid.axis, v), ds) for v in grid.values]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_ablation_job, jobs))
    else:
        results = [_ablation_job(j) for j in jobs]

    rows = []
    for v, (spec, _), (rep, run_dir, err) in zip(grid.values, jobs, results):
        row = {"axis": grid.axis, "value": str(v), "experiment_id": spec.experiment_id, "error": err or ""}
        if rep is not None:
            row.update(mean=rep["mean"], std=rep["std"], last_mean=rep["extra"]["last_mean"],
                       best_mean=rep["extra"]["best_mean"], run_dir=run_dir,
                       finite_losses=_finite_trace(Path(run_dir)))
        rows.append(row)
    base_value = str(grid.values[0] if normalize_to is None else normalize_to)
    base_mean = next((r.get("mean") for r in rows if r["value"] == base_value), None)
    for r in rows:
        r["normalized"] = r["mean"] / base_mean if base_mean and "mean" in r else ""

    buf = io.StringIO()
    cols = ["axis", "value", "experiment_id", "mean", "std", "last_mean", "best_mean", "normalized",
            "finite_losses", "error"]
    writer = csv.DictWriter(buf, cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    out = Path(grid.base.out)
    out.mkdir(parents=True, exist_ok=True)
    tag = fingerprint({"axis": grid.axis, "values": [str(v) for v in grid.values], "base": grid.base.resolved()})
    (out / f"ablation-{grid.axis}-{tag}.csv").write_text(text)
    return rows, text


def _finite_trace(run_dir: Path) -> bool:
    trace = json.loads((run_dir / "trace.json").read_text())
    return all(np.all(np.isfinite(t["epoch_loss"])) for t in trace["repeats"])


def bench_overhead(spec: ExperimentSpec, c_values: Sequence[int], epochs: int = 2,
                   dataset: Optional[GraphDataset] = None) -> list[dict]:
    """Per-epoch wall clock for each candidate count against an unselected reference.

    The reference generates exactly ``k`` views and keeps them all, which is
    the plain two-view pipeline; every other row is normalized to it.
    """
    if not len(c_values):
        raise ValueError("c_values must be non-empty")
    k = spec.train.selector.k
    for c in c_values:
        if c < k:
            raise ValueError(f"every c must be >= selector.k ({k}), got {c}")
    ds = dataset if dataset is not None else load_dataset(spec)

    def timed(c, mode):
        cfg = TrainConfig.from_dict({**spec.train.to_dict(), "epochs": epochs, "eval_every": epochs})
        cfg.uppg.c = c
        cfg.selector.mode = mode
        _, trace = train(ds, spec.encoder, cfg)
        total = float(np.mean(trace.epoch_seconds))
        phases = {p: float(np.mean([ph[p] for ph in trace.phase_seconds])) for p in PHASES}
        return total, phases

    ref_total, ref_phases = timed(k, SelectionMode.RANDOM)
    rows = [{"c": k, "label": "reference", "seconds_per_epoch": ref_total, "normalized": 1.0, **ref_phases}]
    mode = SelectionMode(spec.train.selector.mode)
    for c in c_values:
        total, phases = timed(int(c), mode)
        rows.append({"c": int(c), "label": mode.value, "seconds_per_epoch": total,
                     "normalized": total / ref_total, **phases})
    for r in rows:
        covered = sum(r[p] for p in PHASES)
        r["phase_sum"] = covered
        r["phase_gap"] = abs(covered - r["seconds_per_epoch"]) / r["seconds_per_epoch"]
        r["generate_select_share"] = (r["generate"] + r["select"]) / covered
    return rows


def overhead_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["label", "c", "seconds_per_epoch", "normalized", *PHASES, "phase_sum", "phase_gap", "generate_select_share"]
    writer = csv.DictWriter(buf, cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def selftest(seed: int = 0) -> dict:
    """Run the property, gradient, sampling and precision checks twice and byte-compare."""
    start = time.perf_counter()
    first = checks.run_all(seed)
    second = checks.run_all(seed)
    blob_a = json.dumps(checks.strip_timing(first), sort_keys=True).encode()
    blob_b = json.dumps(checks.strip_timing(second), sort_keys=True).encode()
    return {
        "version": __version__,
        "seed": seed,
        "results": first,
        "identical": blob_a == blob_b,
        "all_passed": all(r["passed"] for r in first.values()),
        "seconds": time.perf_counter() - start,
    }
