"""Command-line interface.

Subcommands::

    csptl gen  --subjects N --channels C --samples T --epochs-per-class K
               --sigma-hi V --sigma-lo V --divergence THETA --noise V
               --seed S --out DIR
    csptl run  --data DIR [--strategies LIST] [--pool 40] [--m-step 2]
               [--m-max 40] [--reps 30] [--filters F] [--cm1-lambda 0.5]
               [--seed S] --out results.csv [--summary summary.csv]
               [--workers N]
    csptl eval --data DIR --target ID --strategy ID --m M [--seed S]
               [--filters F] [--pool 40] [--cm1-lambda 0.5]

Exit codes: 0 success, 2 configuration error, 3 data-format error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import (
    ALL_STRATEGIES,
    BenchConfig,
    StrategyId,
    _draw_pool,
    emit_csv,
    run_benchmark,
    run_strategy,
    summarize,
)
from .data import SynthConfig, generate_synthetic, load_subject, save_subject
from .errors import ConfigError, CsptlError, FormatError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csptl",
        description="CSP filtering with transfer-learning enhancements: "
        "synthetic data generation and the incremental-calibration benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate synthetic subject files")
    gen.add_argument("--subjects", type=int, required=True)
    gen.add_argument("--channels", type=int, required=True)
    gen.add_argument("--samples", type=int, required=True)
    gen.add_argument("--epochs-per-class", type=int, required=True)
    gen.add_argument("--sigma-hi", type=float, required=True,
                     help="variance of the discriminative latent under its strong class")
    gen.add_argument("--sigma-lo", type=float, required=True,
                     help="variance of the discriminative latent under its weak class")
    gen.add_argument("--divergence", type=float, default=0.0,
                     help="subject-to-subject rotation scale in radians")
    gen.add_argument("--noise", type=float, default=0.1,
                     help="variance of the non-discriminative latents")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")

    run = sub.add_parser("run", help="run the benchmark over a data directory")
    _add_protocol_args(run)
    run.add_argument("--reps", type=int, default=30)
    run.add_argument("--strategies", default=",".join(s.value for s in ALL_STRATEGIES),
                     help="comma-separated subset of BL1,BL2,BL3,CM1,CM2,MA,IA")
    run.add_argument("--m-step", type=int, default=2)
    run.add_argument("--m-max", type=int, default=40)
    run.add_argument("--out", required=True, help="results CSV path")
    run.add_argument("--summary", help="optional summary CSV path")
    run.add_argument("--workers", type=int, default=1)

    ev = sub.add_parser("eval", help="score one strategy on one target subject")
    _add_protocol_args(ev)
    ev.add_argument("--target", required=True, help="target subject id")
    ev.add_argument("--strategy", required=True,
                    choices=[s.value for s in ALL_STRATEGIES])
    ev.add_argument("--m", type=int, required=True,
                    help="number of labeled calibration epochs")
    return parser


def _add_protocol_args(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="directory of .eegx subject files")
    p.add_argument("--pool", type=int, default=40)
    p.add_argument("--filters", type=int, default=3)
    p.add_argument("--cm1-lambda", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)


def _load_datasets(data_dir: str):
    root = Path(data_dir)
    if not root.is_dir():
        raise ConfigError(f"data directory not found: {data_dir}")
    paths = sorted(root.glob("*.eegx"))
    if not paths:
        raise ConfigError(f"no .eegx files in {data_dir}")
    return [load_subject(p) for p in paths]


def _cmd_gen(args) -> int:
    config = SynthConfig(
        num_subjects=args.subjects,
        channels=args.channels,
        samples=args.samples,
        epochs_per_class=args.epochs_per_class,
        sigma_hi_sq=args.sigma_hi,
        sigma_lo_sq=args.sigma_lo,
        divergence=args.divergence,
        noise_floor=args.noise,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for dataset in generate_synthetic(config):
        save_subject(dataset, out / f"{dataset.subject_id}.eegx")
    print(f"wrote {config.num_subjects} subject files to {out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    datasets = _load_datasets(args.data)
    try:
        strategies = tuple(
            StrategyId(s.strip()) for s in args.strategies.split(",") if s.strip()
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = BenchConfig(
        pool_size=args.pool,
        m_step=args.m_step,
        m_max=args.m_max,
        repetitions=args.reps,
        filters_per_class=args.filters,
        base_seed=args.seed,
        strategies=strategies,
        cm1_lambda=args.cm1_lambda,
    )
    table = run_benchmark(datasets, cfg, workers=args.workers)
    emit_csv(table, args.out)
    print(f"wrote {len(table)} records to {args.out}")
    if args.summary:
        emit_csv(summarize(table), args.summary)
        print(f"wrote summary to {args.summary}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    datasets = _load_datasets(args.data)
    ids = [d.subject_id for d in datasets]
    if args.target not in ids:
        raise ConfigError(f"unknown target {args.target!r}; have {ids}")
    target_index = ids.index(args.target)
    target = datasets[target_index]
    sources = [d for i, d in enumerate(datasets) if i != target_index]
    cfg = BenchConfig(
        pool_size=args.pool,
        m_max=args.pool,
        filters_per_class=args.filters,
        base_seed=args.seed,
        cm1_lambda=args.cm1_lambda,
    )
    if args.m < 0 or args.m > cfg.pool_size or args.m % 2:
        raise ConfigError(f"m must be even and within [0, {cfg.pool_size}]")
    # Repetition 0 of the protocol: same pool draw as `run`.
    pool, test_idx = _draw_pool(target.labels, cfg, target_index, 0)
    labeled = [target.epochs[i] for i in pool[: args.m]]
    test = [target.epochs[i] for i in test_idx]
    acc = run_strategy(StrategyId(args.strategy), labeled, test, sources, cfg)
    print(f"{acc:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval":
            return _cmd_eval(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, CsptlError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
