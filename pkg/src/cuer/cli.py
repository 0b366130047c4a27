"""Command line entry point (``cuer``)."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .envs import describe_env
from .errors import ConfigError, InvalidArgument, LogParseError, NumericError

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _train(args) -> int:
    from .harness.config import load_config
    from .harness.runner import run_experiment

    cfg = load_config(args.config)
    if args.replay_log:
        cfg.replay_log = True
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    for seed in seeds:
        path = run_experiment(cfg, seed, out_dir=args.out or cfg.out_dir,
                              checkpoint_in=args.load_checkpoint, checkpoint_out=args.save_checkpoint)
        print(path)
    return EXIT_OK


def _compare(args) -> int:
    from .harness.compare import compare
    from .harness.config import load_grid

    configs = load_grid(args.grid)
    out = args.out or configs[0].out_dir
    curves, files = compare(configs, out, jobs=args.jobs)
    for c in curves:
        scores = ", ".join(f"{seed}:{c.aulc(seed):.4g}" for seed in c.per_seed)
        print(f"{c.label}: final mean {c.mean[-1]:.4g} +- {c.std[-1]:.3g}; AULC by seed {scores}")
    for key in ("aggregate", "aulc", "svg"):
        print(files[key])
    return EXIT_OK


def _analyze(args) -> int:
    from .harness.analysis import analyze_replay, write_report

    report = analyze_replay(args.log, age_window=args.window)
    out = args.out or str(Path(args.log).with_suffix("")) + "_report"
    for p in write_report(report, out):
        print(p)
    print(f"lifetime replay count: mean {report.lifetime_mean:.6g} var {report.lifetime_var:.6g} "
          f"over {report.n_evicted} evicted transitions")
    for flag in report.flags:
        print(f"note: {flag}")
    return EXIT_OK


def _simulate(args) -> int:
    from .harness.simulate import simulate_replay

    log_path = args.log
    Path(log_path).parent.mkdir(parents=True, exist_ok=True)
    r = simulate_replay(args.sampler, args.steps, args.capacity, args.batch_size, args.seed,
                        eps_min=args.eps_min, warmup=args.warmup, log_path=log_path)
    lc = r.lifetime_counts
    if lc.size:
        print(f"{args.sampler}: {lc.size} evicted, lifetime mean {lc.mean():.6g} var {lc.var():.6g}")
    print(log_path)
    return EXIT_OK


def _describe(args) -> int:
    print(describe_env(args.name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cuer", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one config (all its seeds unless --seed)")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--replay-log", action="store_true", help="write a binary replay event log")
    p.add_argument("--load-checkpoint")
    p.add_argument("--save-checkpoint")
    p.set_defaults(func=_train)

    p = sub.add_parser("compare", help="run a strategy grid and aggregate curves")
    p.add_argument("grid")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_compare)

    p = sub.add_parser("analyze", help="fairness / age report from a replay log")
    p.add_argument("log")
    p.add_argument("--out")
    p.add_argument("--window", type=int, default=1000)
    p.set_defaults(func=_analyze)

    p = sub.add_parser("simulate", help="no-learning replay simulation writing a replay log")
    p.add_argument("--sampler", default="cuer")
    p.add_argument("--steps", type=int, default=50_000)
    p.add_argument("--capacity", type=int, default=10_000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--eps-min", type=float, default=0.0)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", required=True)
    p.set_defaults(func=_simulate)

    p = sub.add_parser("describe-env", help="print an environment's constants")
    p.add_argument("name")
    p.set_defaults(func=_describe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidArgument, LogParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
