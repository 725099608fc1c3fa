"""Seeded experiment runs: build a mechanism, certify it, write artifacts."""

from __future__ import annotations

import csv
import io as _io
import logging
import math
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .algorithms import make_algorithm
from .ca import ca_algorithm, filter_solution, solve_ca_lp
from .errors import EnumerationTooLarge, NoRandomnessDomain
from .interim import InterimTable
from .mechanism import DirectMechanism
from .model import MechanismInstance, Partition
from .reduction_rr import MetaMechanism, meta_tables_from_interim
from .reduction_sw import ReducedMechanism, build_interim, tables_from_interim
from .verify import certify, estimate_regret, performance, sampled_ir

log = logging.getLogger(__name__)

CSV_SCHEMA = "bicforge.results/1"
CA_CSV_SCHEMA = "bicforge.ca/1"
MODES = ("exact", "relative", "absolute")
REDUCTIONS = ("sw", "revenue", "surplus", "none")
ALGORITHMS = ("ca-lp-round", "serial-dictator", "random-serial-dictator", "constant",
              "optimal-bruteforce")
DEFAULT_C = 10.0


class ConfigError(ValueError):
    """Invalid experiment configuration (a usage error)."""


@dataclass
class ExperimentConfig:
    instance: str
    algorithm: str = "serial-dictator"
    reduction: str = "sw"
    mode: str = "exact"
    epsilon: float | None = None
    resolver: str = "xos"
    seed: int = 0
    replications: int = 1
    out: str | None = None
    c: float | None = None
    samples: int = 2000  # Monte Carlo draws when exact enumeration is out of reach
    cache: bool = True

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if base is not None and not Path(cfg.instance).is_absolute():
            cfg.instance = str(base / cfg.instance)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not Path(self.instance).is_file():
            raise ConfigError(f"instance file not found: {self.instance}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.reduction not in REDUCTIONS:
            raise ConfigError(f"reduction must be one of {REDUCTIONS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mode != "exact" and (self.epsilon is None or not 0 < self.epsilon < 1):
            raise ConfigError("epsilon must lie in (0, 1) for estimated modes")
        if self.replications < 1:
            raise ConfigError("replications must be positive")

    def echo(self) -> dict:
        return asdict(self)


def worker_count(jobs: int) -> int:
    cap = os.environ.get("BICFORGE_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, jobs))


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


@dataclass
class Setup:
    """Everything shared by the replications of one config."""

    config: ExperimentConfig
    instance: MechanismInstance
    algorithm: object
    c: float
    instance_hash: str
    extras: dict = field(default_factory=dict)


def prepare(config: ExperimentConfig) -> Setup:
    instance = io.load_instance(config.instance)
    eps = config.epsilon if config.epsilon is not None else 0.1
    extras = {}
    if config.algorithm == "ca-lp-round":
        if not isinstance(instance.feasibility, Partition):
            raise ConfigError("ca-lp-round needs a partition (combinatorial auction) instance")
        lp = solve_ca_lp(instance)
        alg = ca_algorithm(instance, eps, config.resolver, lp)
        extras = {"lp": lp, "filtered": alg.solution}
        c = config.c if config.c is not None else alg.variance_bound
    else:
        alg = make_algorithm(config.algorithm, instance)
        c = config.c if config.c is not None else DEFAULT_C
        if config.mode == "relative" and config.c is None:
            log.warning("no std/mean bound given for %s; using c = %s", config.algorithm, DEFAULT_C)
    return Setup(config, instance, alg, c, io.file_hash(config.instance), extras)


def _interim(setup: Setup, rng, entropy: int) -> InterimTable:
    cfg = setup.config
    cache_path = None
    if cfg.out and cfg.cache:
        key = io.content_hash(setup.instance_hash, setup.algorithm.name, cfg.mode,
                              cfg.epsilon, setup.c, entropy if cfg.mode != "exact" else None)
        cache_path = Path(cfg.out) / "cache" / f"interim-{key}.json"
        if cache_path.is_file():
            return io.interim_from_dict(io.read_json(cache_path))
    table = build_interim(setup.instance, setup.algorithm, cfg.mode, cfg.epsilon, rng, setup.c)
    if cache_path is not None:
        io.write_json(cache_path, io.interim_to_dict(table))
    return table


def build_mechanism(setup: Setup, rng, entropy: int):
    cfg, inst = setup.config, setup.instance
    if cfg.reduction == "none":
        return DirectMechanism(inst, setup.algorithm), None
    table = _interim(setup, rng, entropy)
    if cfg.reduction == "sw":
        tables = tables_from_interim(table, inst)
        return ReducedMechanism(inst, setup.algorithm, tables), tables
    tables = meta_tables_from_interim(table, inst, cfg.reduction)
    return MetaMechanism(inst, setup.algorithm, tables), tables


def evaluate(setup: Setup, mechanism, rng) -> dict:
    """Welfare, revenue, surplus, regret and IR; exact when enumerable."""
    inst, cfg = setup.instance, setup.config
    try:
        rep = certify(inst, mechanism)
        perf = performance(inst, mechanism)
        return {"SW": perf.welfare, "R": perf.revenue, "RS": perf.surplus,
                "max_regret": rep.max_regret, "regret_se": 0, "IR": int(bool(rep.ir_ok)),
                "exact": 1}
    except (EnumerationTooLarge, NoRandomnessDomain):
        pass
    perf = performance(inst, mechanism, rng=rng, samples=cfg.samples)
    regret, se = estimate_regret(inst, mechanism, rng, max(1, cfg.samples // 10))
    ir = sampled_ir(inst, mechanism, rng, cfg.samples)
    return {"SW": perf.welfare, "R": perf.revenue, "RS": perf.surplus,
            "max_regret": regret, "regret_se": se, "IR": int(ir.ok), "exact": 0}


def replication_seeds(seed: int, count: int) -> list:
    return np.random.SeedSequence(seed).spawn(count)


def streams(seq: np.random.SeedSequence):
    """Independent generators for table estimation and for evaluation, so a
    cache hit leaves the evaluation stream untouched."""
    child = [np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key + (k,)) for k in range(2)]
    entropy = int(child[0].generate_state(1, np.uint64)[0])
    return np.random.default_rng(child[0]), np.random.default_rng(child[1]), entropy


def _one(setup: Setup, index: int, seq: np.random.SeedSequence) -> dict:
    table_rng, eval_rng, entropy = streams(seq)
    mechanism, _ = build_mechanism(setup, table_rng, entropy)
    row = {"replication": index}
    row.update(evaluate(setup, mechanism, eval_rng))
    return row


def run_replications(setup: Setup) -> list:
    seqs = replication_seeds(setup.config.seed, setup.config.replications)
    jobs = list(enumerate(seqs))
    workers = worker_count(len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: _one(setup, *job), jobs))
    return [_one(setup, *job) for job in jobs]


METRICS = ("SW", "R", "RS", "max_regret", "IR")


def summarize(rows: list, metrics=METRICS) -> dict:
    out = {}
    for key in metrics:
        vals = np.array([float(r[key]) for r in rows])
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out[key] = {"mean": float(io.fmt(vals.mean())), "se": float(io.fmt(se))}
    return out


INT_COLUMNS = ("replication", "IR", "exact")


def rows_to_csv(rows: list, columns, schema: str) -> str:
    buf = _io.StringIO()
    buf.write(f"# schema: {schema}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([int(r[c]) if c in INT_COLUMNS else io.fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_artifacts(out: str | None, config: dict, csv_text: str, summary: dict,
                    csv_name: str = "results.csv") -> None:
    if not out:
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / csv_name).write_text(csv_text, encoding="utf-8")
    io.write_json(path / "summary.json", summary)
    io.write_json(path / "manifest.json", {"config": config, "git": git_describe(),
                                           "seed": config.get("seed"),
                                           "artifacts": [csv_name, "summary.json"]})


RESULT_COLUMNS = ("replication", "SW", "R", "RS", "max_regret", "regret_se", "IR", "exact")


def run(config: ExperimentConfig) -> dict:
    setup = prepare(config)
    rows = run_replications(setup)
    csv_text = rows_to_csv(rows, RESULT_COLUMNS, CSV_SCHEMA)
    summary = {"instance": setup.instance.name or Path(config.instance).stem,
               "algorithm": setup.algorithm.name, "reduction": config.reduction,
               "mode": config.mode, "replications": config.replications,
               "metrics": summarize(rows)}
    write_artifacts(config.out, config.echo(), csv_text, summary)
    return {"rows": rows, "csv": csv_text, "summary": summary}


# --------------------------------------------------------------------------
# combinatorial-auction experiment


CA_COLUMNS = ("replication", "LP", "filtered", "SW_A", "SW_M", "R_M", "max_regret",
              "regret_se", "IR", "exact")


def run_ca(config: ExperimentConfig) -> dict:
    """LP value, filtered value, welfare of the rounding algorithm and of its
    reduced mechanism, plus a regret estimate, per replication."""
    cfg = ExperimentConfig(**{**config.echo(), "algorithm": "ca-lp-round"})
    if cfg.epsilon is None:
        cfg.epsilon = 0.1
    if cfg.mode == "exact":
        cfg.mode = "relative"
    setup = prepare(cfg)
    lp = setup.extras["lp"]
    filtered = filter_solution(setup.instance, lp, cfg.epsilon)
    seqs = replication_seeds(cfg.seed, cfg.replications)

    def one(job):
        index, seq = job
        table_rng, eval_rng, entropy = streams(seq)
        direct = DirectMechanism(setup.instance, setup.algorithm)
        sw_a = performance(setup.instance, direct, rng=eval_rng, samples=cfg.samples).welfare
        mechanism, _ = build_mechanism(setup, table_rng, entropy)
        metrics = evaluate(setup, mechanism, eval_rng)
        return {"replication": index, "LP": lp.objective, "filtered": filtered.objective,
                "SW_A": sw_a, "SW_M": metrics["SW"], "R_M": metrics["R"],
                "max_regret": metrics["max_regret"], "regret_se": metrics["regret_se"],
                "IR": metrics["IR"], "exact": metrics["exact"]}

    jobs = list(enumerate(seqs))
    workers = worker_count(len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]
    csv_text = rows_to_csv(rows, CA_COLUMNS, CA_CSV_SCHEMA)
    summary = {"instance": setup.instance.name or Path(cfg.instance).stem,
               "resolver": cfg.resolver, "epsilon": cfg.epsilon,
               "variance_bound": float(io.fmt(setup.c)),
               "metrics": summarize(rows, ("LP", "filtered", "SW_A", "SW_M", "R_M", "max_regret"))}
    write_artifacts(cfg.out, cfg.echo(), csv_text, summary, "ca_results.csv")
    return {"rows": rows, "csv": csv_text, "summary": summary}
