"""Command-line entry point.

Usage errors (bad flags, missing files, invalid configs) exit with status 2.
Computation errors exit with status 1 and print a JSON error record on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .algorithms import OptimalAlgorithm
from .assignment import check_certificate, check_envy_free, solve_welfare_lp
from .errors import BicforgeError
from .experiment import (
    ALGORITHMS,
    MODES,
    ConfigError,
    ExperimentConfig,
    build_mechanism,
    prepare,
    replication_seeds,
    run,
    run_ca,
    streams,
)
from .interim import expected_welfare
from .model import lower_bound_instance
from .reduction_rr import MetaMechanism, meta_precompute
from .verify import certify, optimal_welfare, performance


def _emit(data: dict) -> None:
    json.dump(io.encode(data), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _rounded(x):
    if isinstance(x, (list, tuple)):
        return [_rounded(v) for v in x]
    if isinstance(x, dict):
        return {k: _rounded(v) for k, v in x.items()}
    if isinstance(x, (bool, int)):
        return x
    if isinstance(x, (int, float)) or hasattr(x, "denominator"):
        return float(io.fmt(x))
    return x


def _existing_file(value: str) -> str:
    if not Path(value).is_file():
        raise argparse.ArgumentTypeError(f"file not found: {value}")
    return value


def _epsilon(value: str) -> float:
    eps = float(value)
    if not 0 < eps < 1:
        raise argparse.ArgumentTypeError("epsilon must lie in (0, 1)")
    return eps


def cmd_solve_assignment(args) -> int:
    problem = io.load_assignment(args.instance)
    sol = solve_welfare_lp(problem, prices=args.prices)
    cert = check_certificate(problem, sol)
    ef = check_envy_free(problem, sol)
    _emit({"x": sol.x, "u": sol.u, "p": sol.p, "objective": sol.objective,
           "certificate": {"primal_ok": cert.primal_ok, "dual_ok": cert.dual_ok,
                           "cs_ok": cert.cs_ok, "market_clearing": cert.market_clearing},
           "envy_free": ef.ok})
    return 0


def _config(args, reduction: str) -> ExperimentConfig:
    cfg = ExperimentConfig(
        instance=args.instance, algorithm=args.algorithm, reduction=reduction,
        mode=args.mode, epsilon=args.epsilon, resolver=args.resolver, seed=args.seed,
        replications=args.replications, out=args.out, c=args.c, samples=args.samples,
        cache=not args.no_cache,
    )
    cfg.validate()
    return cfg


def _write_tables(cfg: ExperimentConfig) -> dict:
    """Tables of the first replication, for inspection."""
    setup = prepare(cfg)
    table_rng, _, entropy = streams(replication_seeds(cfg.seed, 1)[0])
    _, tables = build_mechanism(setup, table_rng, entropy)
    out = {"tables": io.tables_to_dict(tables)}
    if tables.meta:
        out["ladders"] = [
            {"level": lad.level, "levels": lad.levels, "u_max": lad.u_max,
             "reserves": lad.reserves, "values": lad.values}
            for lad in tables.meta["ladders"]
        ]
    if cfg.out:
        io.write_json(Path(cfg.out) / "tables.json", out)
    return out


def cmd_reduce(args, reduction: str) -> int:
    cfg = _config(args, reduction)
    result = run(cfg)
    tables = _write_tables(cfg)
    report = {"summary": result["summary"]}
    if "ladders" in tables:
        report["ladders"] = _rounded(tables["ladders"])
    _emit(report)
    return 0


def cmd_reduce_sw(args) -> int:
    return cmd_reduce(args, "sw")


def cmd_reduce_rr(args) -> int:
    return cmd_reduce(args, args.objective)


def cmd_verify(args) -> int:
    cfg = _config(args, args.reduction)
    result = run(cfg)
    _emit({"summary": result["summary"], "rows": _rounded(result["rows"])})
    return 0


def cmd_ca_experiment(args) -> int:
    args.algorithm = "ca-lp-round"
    if args.mode == "exact":
        args.mode = "relative"
    if args.epsilon is None:
        args.epsilon = 0.1
    cfg = _config(args, args.reduction)
    result = run_ca(cfg)
    _emit(result["summary"])
    return 0


def cmd_lower_bound_demo(args) -> int:
    inst = lower_bound_instance(args.levels)
    alg = OptimalAlgorithm(inst)
    tables = meta_precompute(inst, alg, args.objective)
    mech = MetaMechanism(inst, alg, tables)
    perf = performance(inst, mech)
    rep = certify(inst, mech)
    sw_a = expected_welfare(inst, alg)
    target = perf.revenue if args.objective == "revenue" else perf.surplus
    bound = sw_a / (2 * args.levels)
    _emit(_rounded({"levels": args.levels, "OPT": optimal_welfare(inst), "SW_A": sw_a,
                    "SW": perf.welfare, "revenue": perf.revenue, "surplus": perf.surplus,
                    "objective": args.objective, "bound": bound,
                    "ratio": target / bound, "max_regret": rep.max_regret,
                    "ir_ok": rep.ir_ok}))
    return 0


def cmd_run(args) -> int:
    data = io.read_json(args.config)
    if args.out:
        data["out"] = args.out
    if args.no_cache:
        data["cache"] = False
    cfg = ExperimentConfig.from_dict(data, base=Path(args.config).resolve().parent)
    result = run(cfg)
    _emit(result["summary"])
    return 0


def _experiment_flags(p, default_algorithm="serial-dictator"):
    p.add_argument("--instance", required=True, type=_existing_file)
    p.add_argument("--algorithm", choices=ALGORITHMS, default=default_algorithm)
    p.add_argument("--mode", choices=MODES, default="exact")
    p.add_argument("--epsilon", type=_epsilon)
    p.add_argument("--resolver", choices=("xos", "greedy", "uniform"), default="xos")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--samples", type=int, default=2000,
                   help="Monte Carlo draws when exact enumeration is too large")
    p.add_argument("--c", type=float, help="std/mean bound for relative-error estimation")
    p.add_argument("--out", help="directory for CSV, summary and manifest")
    p.add_argument("--no-cache", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bicforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-assignment", help="solve a fractional assignment problem")
    p.add_argument("--instance", required=True, type=_existing_file)
    p.add_argument("--prices", choices=("min", "max"), default="min")
    p.set_defaults(func=cmd_solve_assignment)

    p = sub.add_parser("reduce-sw", help="welfare-preserving reduction")
    _experiment_flags(p)
    p.set_defaults(func=cmd_reduce_sw)

    p = sub.add_parser("reduce-rr", help="revenue or residual-surplus reduction")
    _experiment_flags(p)
    p.add_argument("--objective", choices=("revenue", "surplus"), default="revenue")
    p.set_defaults(func=cmd_reduce_rr)

    p = sub.add_parser("ca-experiment", help="combinatorial-auction LP, rounding and reduction")
    _experiment_flags(p, "ca-lp-round")
    p.add_argument("--reduction", choices=("sw", "revenue", "surplus"), default="sw")
    p.set_defaults(func=cmd_ca_experiment)

    p = sub.add_parser("verify", help="certify BIC and IR and measure performance")
    _experiment_flags(p)
    p.add_argument("--reduction", choices=("sw", "revenue", "surplus", "none"), default="none")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("lower-bound-demo", help="revenue reduction on the lower-bound instance")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--objective", choices=("revenue", "surplus"), default="revenue")
    p.set_defaults(func=cmd_lower_bound_demo)

    p = sub.add_parser("run", help="run an experiment config file")
    p.add_argument("--config", required=True, type=_existing_file)
    p.add_argument("--out")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.error(str(exc))
    except (BicforgeError, ValueError, KeyError, json.JSONDecodeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(record) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
