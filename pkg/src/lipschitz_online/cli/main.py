"""Command-line entry point: ``lipschitz-online <subcommand> [options]``.

Exit codes: 0 success, 1 I/O failure, 2 configuration or validation error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..blocking import (
    beta_or_one,
    block_partition,
    concentration_bound,
    default_block_counts,
    erm_deviation_check,
    resample_independent_blocks,
    uniform_deviation,
    witness_family,
)
from ..errors import ConfigError, LipschitzOnlineError, NumericError, ValidationError
from ..harness import (
    ConstantStrategy,
    HistogramExpertStrategy,
    OracleStrategy,
    RetrainPolicy,
    lipschitz_erm_strategy,
    run_online,
)
from ..lipschitz_fit import Schedule
from ..oracle import optimal_risk
from ..processes import MarkovProcess, sample, sample_trajectory, write_trajectory
from . import config as cfgmod
from .report import (
    METRICS_HEADER,
    SUMMARY_HEADER,
    fmt,
    metrics_rows,
    read_optimal,
    write_csv,
    write_optimal,
    write_report,
)

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _load(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg["run.seeds"] = [args.seed]
    if getattr(args, "out", None) is not None:
        cfg["run.out"] = args.out
    cfgmod.validate(cfg)
    return cfg


def _optimal(cfg, process, loss):
    if isinstance(process, MarkovProcess) and cfg["strategy.d"] >= process.order:
        return optimal_risk(process, loss, cfg["strategy.d"]).value
    return None


def build_strategies(cfg, process, loss) -> list:
    d = cfg["strategy.d"]
    out = []
    if cfg["strategy.erm"]:
        mlp = {}
        if cfg["strategy.fitter"] == "mlp":
            mlp = {k: cfg[f"strategy.mlp.{k}"] for k in ("layers", "width", "epochs")}
        schedule = Schedule(cfg["strategy.L0"], process.n * d, cfg["strategy.frozen"])
        out.append(
            lipschitz_erm_strategy(
                cfg["strategy.fitter"], schedule, RetrainPolicy.parse(cfg["strategy.retrain"]), loss, d, **mlp
            )
        )
    for b in cfg["strategy.baselines"]:
        if b == "oracle":
            if not isinstance(process, MarkovProcess):
                raise cfg.error("the oracle baseline needs a Markov process", "strategy.baselines")
            out.append(OracleStrategy(process, loss, d))
        elif b == "histogram":
            out.append(
                HistogramExpertStrategy(
                    cfg["strategy.histogram.resolutions"], cfg["strategy.histogram.eta"], loss, d
                )
            )
        else:
            out.append(ConstantStrategy(0.5))
    return out


def simulate(cfg) -> list[Path]:
    process = cfgmod.build_process(cfg)
    out = Path(cfg["run.out"])
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for seed in sorted(cfg["run.seeds"]):
        p = out / f"traj_{seed}.csv"
        write_trajectory(p, sample(process, cfg["run.T"], seed))
        paths.append(p)
    return paths


def _run_seed(cfg_text: str, seed: int, out: str, per_step: bool) -> list[tuple]:
    cfg = cfgmod.parse(cfg_text)
    process = cfgmod.build_process(cfg)
    loss = cfgmod.build_loss(cfg)
    optimal = _optimal(cfg, process, loss)
    traj = sample(process, cfg["run.T"], seed)
    results = []
    for strategy in build_strategies(cfg, process, loss):
        m = run_online(traj, strategy, loss, cfg["strategy.d"], optimal)
        write_csv(Path(out) / f"metrics_{strategy.name}_{seed}.csv", METRICS_HEADER, metrics_rows(m, optimal))
        if per_step:
            steps = [[str(t), fmt(v)] for t, v in enumerate(m.losses, start=m.d + 1)]
            write_csv(Path(out) / f"steps_{strategy.name}_{seed}.csv", ["t", "loss"], steps)
        results.append((strategy.name, seed, m.final_average))
    return results


def run(cfg, per_step: bool = False, jobs: int = 1):
    """Run every strategy on every seed, then write the summary and chart."""
    process = cfgmod.build_process(cfg)
    loss = cfgmod.build_loss(cfg)
    build_strategies(cfg, process, loss)  # surface configuration errors before fanning out
    optimal = _optimal(cfg, process, loss)
    out = Path(cfg["run.out"])
    out.mkdir(parents=True, exist_ok=True)
    text = cfgmod.emit(cfg)
    (out / "config.txt").write_text(text)
    write_optimal(out, optimal)
    seeds = sorted(cfg["run.seeds"])
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_run_seed, [text] * len(seeds), seeds, [str(out)] * len(seeds), [per_step] * len(seeds)))
    else:
        for s in seeds:
            _run_seed(text, s, str(out), per_step)
    return write_report(out, optimal)


def oracle_table(cfg, d=None, method="closed") -> list[list[str]]:
    process = cfgmod.build_process(cfg)
    if not isinstance(process, MarkovProcess):
        raise cfg.error("the oracle needs a Markov process", "process.kind")
    res = optimal_risk(process, cfgmod.build_loss(cfg), cfg["strategy.d"] if d is None else d, method=method)
    rows = []
    for ctx in sorted(res.per_context):
        action, risk = res.per_context[ctx]
        label = "-".join(str(s) for s in ctx) if ctx else "-"
        rows.append([label, " ".join(fmt(float(a)) for a in np.atleast_1d(action)), fmt(risk)])
    rows.append(["L*", "", fmt(res.value)])
    return rows


BOUNDS_HEADER = ["T", "mu", "a", "beta_a", "beta_a_minus_d", "D", "tail"]


def bounds_table(Ts, epsilon, L, m, C1=1.0, C2=1.0, process=None, d=1) -> list[list[str]]:
    rows = []
    for T in Ts:
        mu, a = default_block_counts(T)
        rep = concentration_bound(T, epsilon, L, m, C1, C2)
        ba = bad = None
        if process is not None:
            ba, bad = beta_or_one(process, a), beta_or_one(process, a - d)
        rows.append([fmt(T), fmt(mu), fmt(a), fmt(ba), fmt(bad), fmt(rep.D), fmt(rep.tail)])
    return rows


BLOCKS_HEADER = ["block", "first", "last"]
DEVIATION_HEADER = ["seed", "T", "mu", "a", "deviation", "block_deviation", "erm_excess", "twice_deviation"]


def blocks_tables(T, cfg=None, count=50, L=1.0):
    mu, a = default_block_counts(T)
    part = block_partition(T, mu, a)
    table = [[name, str(first), str(last)] for name, first, last in part.table()]
    if part.remainder.size:
        table.append(["R", str(int(part.remainder[0])), str(int(part.remainder[-1]))])
    if cfg is None:
        return table, None
    process = cfgmod.build_process(cfg)
    if not isinstance(process, MarkovProcess):
        raise cfg.error("deviation tables need a Markov process", "process.kind")
    loss = cfgmod.build_loss(cfg)
    d = cfg["strategy.d"]
    family = witness_family(0, count, L, process.n * d, process.n)
    devs = []
    for seed in sorted(cfg["run.seeds"]):
        traj = sample_trajectory(process, T, seed)
        dev = uniform_deviation(traj, family, loss, d, process)
        bdev = None
        if d <= process.order:
            blocks = resample_independent_blocks(process, part, np.random.SeedSequence(seed, spawn_key=(1,)))
            bdev = uniform_deviation(blocks, family, loss, d, process)
        lhs, rhs, _ = erm_deviation_check(traj, family, loss, process, d)
        devs.append([str(seed), str(T), str(mu), str(a), fmt(dev), fmt(bdev), fmt(lhs), fmt(rhs)])
    return table, devs


def _print_csv(header, rows, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(",".join(header) + "\n")
    for r in rows:
        stream.write(",".join(r) + "\n")


def _cmd_simulate(args):
    for p in simulate(_load(args)):
        print(p)


def _cmd_run(args):
    summary, _ = run(_load(args), per_step=args.per_step, jobs=args.jobs)
    _print_csv(SUMMARY_HEADER, summary)


def _cmd_oracle(args):
    _print_csv(["context", "action", "risk"], oracle_table(_load(args), args.d, args.method))


def _cmd_bounds(args):
    process, d = None, args.d
    if args.config:
        cfg = _load(args)
        process = cfgmod.build_process(cfg)
        if not isinstance(process, MarkovProcess):
            raise cfg.error("beta coefficients need a Markov process", "process.kind")
        d = cfg["strategy.d"] if d is None else d
    rows = bounds_table(args.T, args.epsilon, args.L, args.m, args.C1, args.C2, process, 1 if d is None else d)
    _print_csv(BOUNDS_HEADER, rows)


def _cmd_blocks(args):
    cfg = _load(args) if args.config else None
    T = args.T if args.T is not None else (cfg["run.T"] if cfg is not None else None)
    if T is None:
        raise ConfigError("blocks needs --T or --config")
    table, devs = blocks_tables(T, cfg, args.count, args.L)
    _print_csv(BLOCKS_HEADER, table)
    if devs is not None:
        sys.stdout.write("\n")
        _print_csv(DEVIATION_HEADER, devs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "partition.csv", BLOCKS_HEADER, table)
        if devs is not None:
            write_csv(out / "deviations.csv", DEVIATION_HEADER, devs)


def _cmd_report(args):
    out = args.out
    if out is None and args.config:
        out = _load(args)["run.out"]
    if out is None:
        raise ConfigError("report needs --out or --config")
    summary, _ = write_report(out, read_optimal(out))
    _print_csv(SUMMARY_HEADER, summary)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text}")
        return v

    return conv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lipschitz-online", description="Online prediction experiments on mixing chains.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="experiment config (key=value lines)")
        sp.add_argument("--seed", type=_u64, help="run a single seed instead of run.seeds")
        sp.add_argument("--out", help="output directory (overrides run.out)")

    sp = sub.add_parser("simulate", help="write traj_<seed>.csv per seed")
    common(sp)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("run", help="run strategies, write metrics, summary and chart")
    common(sp)
    sp.add_argument("--per-step", action="store_true", help="also write the full per-round loss log")
    sp.add_argument("--jobs", type=_positive(int), default=1, help="seeds run in parallel")
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("oracle", help="print the optimal action and risk per context, then L*")
    common(sp)
    sp.add_argument("--d", type=int, help="memory (default strategy.d)")
    sp.add_argument("--method", choices=("closed", "golden"), default="closed")
    sp.set_defaults(func=_cmd_oracle)

    sp = sub.add_parser("bounds", help="print block counts, beta coefficients and the concentration bound")
    common(sp, config_required=False)
    sp.add_argument("--T", type=int, nargs="+", default=[100])
    sp.add_argument("--epsilon", type=_positive(float), required=True)
    sp.add_argument("--L", type=_positive(float), default=1.0)
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--C1", type=_positive(float), default=1.0)
    sp.add_argument("--C2", type=_positive(float), default=1.0)
    sp.add_argument("--d", type=int, help="memory used for beta_{a-d} (default strategy.d, else 1)")
    sp.set_defaults(func=_cmd_bounds)

    sp = sub.add_parser("blocks", help="print the H/T partition and, with a config, per-seed deviations")
    common(sp, config_required=False)
    sp.add_argument("--T", type=int)
    sp.add_argument("--count", type=_positive(int), default=50, help="witness family size")
    sp.add_argument("--L", type=_positive(float), default=1.0, help="witness Lipschitz budget")
    sp.set_defaults(func=_cmd_blocks)

    sp = sub.add_parser("report", help="rebuild summary.csv, curve.csv and report.svg from metrics files")
    common(sp, config_required=False)
    sp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LipschitzOnlineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
