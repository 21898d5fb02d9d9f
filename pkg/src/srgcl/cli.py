"""Command-line entry point.

Exit codes: 0 on success, 1 on invalid input or configuration, 2 on
runtime or numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .augment import UPPGConfig
from .experiments import (
    AXES,
    DATA_ENV,
    AblationGrid,
    ExperimentSpec,
    bench_overhead,
    overhead_csv,
    run_ablation,
    run_experiment,
    run_oracle,
    selftest,
)
from .graph import DatasetFormatError
from .selector import DistanceKind, SelectionMode
from .trainer import PairMode, TrainingDiverged
from . import checks

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--config", help="JSON experiment file; flags override its values")
    g.add_argument("--dataset-dir", help=f"dataset root (default: ${DATA_ENV})")
    g.add_argument("--dataset", help="dataset name, e.g. MUTAG")
    g.add_argument("--candidates", type=int, help="views generated per anchor (c)")
    g.add_argument("--top-k", type=int, help="positives kept per anchor (k)")
    g.add_argument("--selector", choices=[m.value for m in SelectionMode])
    g.add_argument("--distance", choices=[d.value for d in DistanceKind])
    g.add_argument("--t0", type=float, help="initial temperature")
    g.add_argument("--decay-s", type=float, help="temperature decay constant s")
    g.add_argument("--augs", help="comma list of N,E,A,S")
    g.add_argument("--ratio", type=float, help="augmentation strength")
    g.add_argument("--epochs", type=int)
    g.add_argument("--eval-every", type=int)
    g.add_argument("--folds", type=int)
    g.add_argument("--repeats", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--pair-mode", choices=[m.value for m in PairMode])
    g.add_argument("--selection-space", choices=["projection", "graph"],
                   help="embedding used for selection distances")
    g.add_argument("--tau", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--hidden-dim", type=int)
    g.add_argument("--layers", type=int)
    g.add_argument("--embed-dim", type=int)
    g.add_argument("--degree-cap", type=int, help="degree one-hot cap for featureless datasets")
    g.add_argument("--out", help="output directory (default: runs)")


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    """Defaults, then the config file, then explicit flags."""
    spec = ExperimentSpec()
    if args.config:
        spec = ExperimentSpec.from_dict(json.loads(Path(args.config).read_text()))
    tr, sel, uppg = spec.train, spec.train.selector, spec.train.uppg

    def given(name):
        return getattr(args, name, None) is not None

    for flag, target, attr in [
        ("dataset", spec, "dataset"), ("dataset_dir", spec, "dataset_dir"), ("folds", spec, "folds"),
        ("repeats", spec, "repeats"), ("degree_cap", spec, "degree_cap"), ("out", spec, "out"),
        ("candidates", uppg, "c"), ("ratio", uppg, "ratio"),
        ("top_k", sel, "k"), ("t0", sel, "t0"), ("decay_s", sel, "s"),
        ("epochs", tr, "epochs"), ("eval_every", tr, "eval_every"), ("seed", tr, "seed"),
        ("lr", tr, "learning_rate"), ("batch_size", tr, "batch_size"), ("selection_space", tr, "selection_space"), ("tau", tr.loss, "tau"),
        ("hidden_dim", spec.encoder, "hidden_dim"), ("layers", spec.encoder, "layers"),
        ("embed_dim", spec.encoder, "embed_dim"),
    ]:
        if given(flag):
            setattr(target, attr, getattr(args, flag))
    if given("selector"):
        sel.mode = SelectionMode.parse(args.selector)
    if given("distance"):
        sel.distance = DistanceKind.parse(args.distance)
    if given("pair_mode"):
        tr.pair_mode = PairMode.parse(args.pair_mode)
    if given("augs"):
        tr.uppg = UPPGConfig.uniform([k for k in args.augs.split(",") if k.strip()], uppg.ratio, uppg.c)
    if given("epochs") and not given("eval_every") and tr.eval_every > tr.epochs:
        tr.eval_every = tr.epochs
    spec.verbosity = getattr(args, "verbose", 0)
    spec.validate()
    return spec


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_train(args) -> int:
    spec = build_spec(args)
    report, run_dir = run_experiment(spec)
    _print({"run_dir": str(run_dir), "mean": report.mean, "std": report.std, **report.extra})
    return EXIT_OK


def cmd_oracle(args) -> int:
    spec = build_spec(args)
    a, b = run_oracle(spec)
    wins = int(sum(x >= y for x, y in zip(b.repeat_means, a.repeat_means)))
    _print({"augmented": {"mean": a.mean, "std": a.std, "repeat_means": a.repeat_means.tolist()},
            "oracle": {"mean": b.mean, "std": b.std, "repeat_means": b.repeat_means.tolist()},
            "oracle_wins": wins})
    return EXIT_OK


def cmd_ablate(args) -> int:
    spec = build_spec(args)
    values = [v for v in args.values.split(";" if ";" in args.values else ",") if v.strip()]
    rows, text = run_ablation(AblationGrid(args.axis, values, spec), args.workers, args.normalize_to)
    sys.stdout.write(text)
    return EXIT_RUNTIME if any(r["error"] for r in rows) else EXIT_OK


def cmd_bench(args) -> int:
    spec = build_spec(args)
    c_values = [int(c) for c in args.c_values.split(",")]
    rows = bench_overhead(spec, c_values, args.bench_epochs)
    text = overhead_csv(rows)
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"overhead-{spec.experiment_id}.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    result = checks.gradient_suite(args.seed, args.trials)
    _print(result)
    return EXIT_OK if result["passed"] else EXIT_RUNTIME


def cmd_selftest(args) -> int:
    result = selftest(args.seed)
    _print(result)
    return EXIT_OK if result["identical"] and result["all_passed"] else EXIT_RUNTIME


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srgcl", description="Self-reinforced graph contrastive learning")
    parser.add_argument("--version", action="version", version=f"srgcl {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train, evaluate and write a report")
    _add_spec_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("oracle", help="augmented versus same-label positives")
    _add_spec_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("ablate", help="one run per value of an ablation axis")
    _add_spec_flags(p)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True,
                   help="comma list, e.g. l2,cos or N,N+E,N+E+A")
    p.add_argument("--normalize-to", help="axis value whose mean is the normalization base")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench-overhead", help="per-epoch cost against candidate count")
    _add_spec_flags(p)
    p.add_argument("--c-values", default="10,50")
    p.add_argument("--bench-epochs", type=int, default=2)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="backprop against finite differences")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("selftest", help="run the numeric checks twice and compare")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, DatasetFormatError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
