"""Acceptance suite: one recorded PASS/FAIL line per criterion."""

import functools
import math
import os
import subprocess
import sys
import time
from fractions import Fraction as F

import numpy as np
import pytest
from conftest import INSTANCES, ROOT, random_problem
from oracles import simplex_max, transportation_lp, vertex_enumeration_max
from scipy.stats import binomtest

from bicforge.algorithms import (
    OptimalAlgorithm,
    RandomSerialDictator,
    random_table_algorithm,
    serve_probability_algorithm,
)
from bicforge.assignment import check_certificate, check_envy_free, solve_welfare_lp
from bicforge.ca import CAAlgorithm, filter_solution, resolve_conflicts, solve_ca_lp
from bicforge.interim import (
    estimate_interim_absolute,
    estimate_interim_relative,
    exact_interim,
    expected_welfare,
    induced_problem,
    std_mean_ratios,
)
from bicforge.io import load_instance
from bicforge.model import (
    combinatorial_auction,
    granularity,
    lower_bound_instance,
    random_explicit_instance,
    random_prior,
    random_set_valuation,
    single_item_auction,
    v_max,
)
from bicforge.reduction_rr import MetaMechanism, ladder, meta_precompute
from bicforge.reduction_sw import ReducedMechanism, tables_from_interim
from bicforge.verify import (
    certify,
    myerson_monotone_check,
    optimal_welfare,
    performance,
)

pytestmark = pytest.mark.acceptance

BIC_TOL = 1e-9


@functools.lru_cache(maxsize=None)
def mechanism_suite():
    """100 exact instances (n <= 3, ell <= 4) with finite-randomness algorithms."""
    rng = np.random.default_rng(2024)
    suite = []
    for k in range(100):
        inst = random_explicit_instance(rng, int(rng.integers(1, 4)), int(rng.integers(1, 5)))
        alg = random_table_algorithm(inst, rng) if k % 2 else RandomSerialDictator(inst)
        suite.append((inst, alg, exact_interim(inst, alg), expected_welfare(inst, alg)))
    return suite


# 1 -------------------------------------------------------------------------


def test_1_duality_certificates(acceptance):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    failures, enumerated = [], 0
    for k in range(500):
        prob = random_problem(rng)
        c, A, b = transportation_lp(prob.demands, prob.supplies, prob.values)
        oracle = simplex_max(c, A, b)[0]
        if len(c) <= 6:
            enumerated += 1
            assert vertex_enumeration_max(c, A, b) == oracle
        for prices in ("min", "max"):
            sol = solve_welfare_lp(prob, prices)
            ok = (check_certificate(prob, sol, tol=0).optimal
                  and check_envy_free(prob, sol, tol=0).ok and sol.objective == oracle)
            if not ok:
                failures.append((k, prices))
    elapsed = time.perf_counter() - start
    passed = not failures and elapsed < 60
    acceptance(1, passed, f"500 problems, min and max prices, {len(failures)} failures, "
                          f"{enumerated} also checked by full vertex enumeration, {elapsed:.1f}s")
    assert passed, failures[:5]


# 2 -------------------------------------------------------------------------


def test_2_exact_bic_ir_welfare(acceptance):
    start = time.perf_counter()
    worst, bad = 0, []
    for k, (inst, alg, table, sw_a) in enumerate(mechanism_suite()):
        mech = ReducedMechanism(inst, alg, tables_from_interim(table, inst))
        rep = certify(inst, mech)
        sw = performance(inst, mech).welfare
        worst = max(worst, rep.max_regret)
        if not (rep.max_regret <= BIC_TOL and rep.ir_ok and sw >= sw_a - BIC_TOL):
            bad.append(k)
    elapsed = time.perf_counter() - start
    passed = not bad and elapsed < 300
    acceptance(2, passed, f"100 instances, max regret {float(worst):.3g}, "
                          f"{len(bad)} failing, {elapsed:.1f}s")
    assert passed, bad


# 3 -------------------------------------------------------------------------


def sign_patterns(ell, rng):
    fixed = [
        lambda s, t: 1,
        lambda s, t: -1,
        lambda s, t: -1 if s == t else 1,
        lambda s, t: 1 if s == t else -1,
        lambda s, t: 1 if (s + t) % 2 else -1,
    ]
    out = [[[f(s, t) for t in range(ell)] for s in range(ell)] for f in fixed]
    out += [rng.choice([-1, 1], size=(ell, ell)).tolist() for _ in range(3)]
    return out


def test_3_perturbation_bounds(acceptance):
    rng = np.random.default_rng(3)
    details, passed = [], True
    for mode in ("relative", "absolute"):
        for eps in (F(1, 100), F(1, 20), F(1, 10)):
            worst_ratio, sw_ok = 0.0, True
            for inst, alg, table, sw_a in mechanism_suite():
                n, ell = inst.n, inst.ell
                bound = 4 * eps * v_max(inst) if mode == "relative" else 4 * eps
                floor = (1 - 2 * eps) * sw_a if mode == "relative" else sw_a - 2 * n * eps
                for pattern in sign_patterns(ell, rng):
                    deltas = [[[pattern[s][t] * eps * (table.values[i][s][t] if mode == "relative"
                                                       else 1)
                                for t in range(ell)] for s in range(ell)] for i in range(n)]
                    tables = tables_from_interim(table.perturbed(deltas, mode, eps), inst)
                    mech = ReducedMechanism(inst, alg, tables)
                    rep = certify(inst, mech, epsilon=bound)
                    if bound > 0:
                        worst_ratio = max(worst_ratio, float(rep.max_regret / bound))
                    elif rep.max_regret > BIC_TOL:
                        worst_ratio = math.inf
                    sw_ok &= rep.ir_ok and performance(inst, mech).welfare >= floor - BIC_TOL
            ok = worst_ratio <= 1 + BIC_TOL and sw_ok
            passed &= ok
            details.append(f"{mode} eps={float(eps)}: regret/bound {worst_ratio:.3f}"
                           f"{'' if sw_ok else ' SW-or-IR-violation'}")
    acceptance(3, passed, "; ".join(details))
    assert passed


# 4 -------------------------------------------------------------------------


def _inside(est, exact, mode, eps, vmax):
    for w_est, w in zip(est.values, exact.values):
        for r_est, r in zip(w_est, w):
            for a, b in zip(r_est, r):
                b = float(b)
                if mode == "relative" and not (1 - eps) * b - 1e-12 <= a <= (1 + eps) * b + 1e-12:
                    return False
                if mode == "absolute" and abs(a - b) > eps * vmax + 1e-12:
                    return False
    return True


def test_4_sampling_lemmas(acceptance):
    inst = load_instance(INSTANCES / "demo_2x2.json")
    alg = RandomSerialDictator(inst)
    exact = exact_interim(inst, alg)
    c = max(r for a in std_mean_ratios(inst, alg) for b in a for r in b if r is not None)
    eps, runs = 0.1, 200
    vmax = float(v_max(inst))
    root = np.random.SeedSequence(4)
    start = time.perf_counter()
    details, passed = [], True
    for mode in ("relative", "absolute"):
        hits = 0
        for seq in root.spawn(runs):
            rng = np.random.default_rng(seq)
            if mode == "relative":
                est = estimate_interim_relative(inst, alg, eps, c, rng)
            else:
                est = estimate_interim_absolute(inst, alg, eps, rng)
            hits += _inside(est, exact, mode, eps, vmax)
        test = binomtest(hits, runs, 1 - eps, alternative="less")
        ok = test.pvalue >= 0.01
        passed &= ok
        details.append(f"{mode}: {hits}/{runs} inside band (p={test.pvalue:.3g})")
    elapsed = time.perf_counter() - start
    passed &= elapsed < 600
    acceptance(4, passed, f"c={c:.3f}, " + "; ".join(details) + f", {elapsed:.1f}s")
    assert passed


# 5 -------------------------------------------------------------------------


def test_5_revenue_meta_reduction(acceptance):
    details, passed = [], True
    for K in range(2, 7):
        inst = lower_bound_instance(K)
        alg = OptimalAlgorithm(inst)
        opt = optimal_welfare(inst)
        sw_a = expected_welfare(inst, alg)
        row = [f"K={K} OPT={opt}"]
        ok = opt == K
        for objective in ("revenue", "surplus"):
            mech = MetaMechanism(inst, alg, meta_precompute(inst, alg, objective))
            perf = performance(inst, mech)
            rep = certify(inst, mech)
            got = perf.revenue if objective == "revenue" else perf.surplus
            ok &= got >= sw_a / (2 * K) and rep.max_regret <= BIC_TOL and rep.ir_ok
            row.append(f"{objective[0].upper()}={got}")
        passed &= ok
        details.append(" ".join(row))
    acceptance(5, passed, "; ".join(details))
    assert passed


# 6 -------------------------------------------------------------------------


def induced_problems(count=200):
    rng = np.random.default_rng(6)
    out = []
    while len(out) < count:
        inst = random_explicit_instance(rng, int(rng.integers(1, 4)), int(rng.integers(2, 6)))
        alg = random_table_algorithm(inst, rng) if rng.random() < 0.5 else RandomSerialDictator(inst)
        table = exact_interim(inst, alg)
        for i in range(inst.n):
            prob = induced_problem(table, inst, i)
            if solve_welfare_lp(prob).objective > 0 and len(out) < count:
                out.append((prob, granularity(inst)))
    return out


@pytest.mark.xfail(strict=True, reason="the half-welfare tail bound is off by a factor of two; "
                                       "see the decisions ledger")
def test_6_ladder_pigeonhole(acceptance):
    worst, bad = math.inf, 0
    for prob, delta in induced_problems():
        total = sum(ladder(prob, delta, "revenue").values)
        welfare = solve_welfare_lp(prob).objective
        worst = min(worst, total / welfare)
        bad += 2 * total < welfare
    passed = bad == 0
    acceptance(6, passed, f"200 induced problems, {bad} below half the welfare, "
                          f"min ratio {float(worst):.4f}")
    assert passed


# 7 -------------------------------------------------------------------------


def ca_instances():
    rng = np.random.default_rng(7)
    shapes = [(2, 3, 2), (3, 4, 2), (4, 5, 2), (3, 6, 3), (4, 8, 3)]
    kinds = ["xos", "additive", "unit-demand", "xos", "xos"]
    out = []
    for (n, m, ell), kind in zip(shapes, kinds):
        sup = [[random_set_valuation(rng, kind, m, clauses=3) for _ in range(ell)] for _ in range(n)]
        out.append(combinatorial_auction(sup, [random_prior(rng, ell, exact=False) for _ in range(n)]))
    return out


def monte_carlo_rounding(inst, alg, draws, seed):
    """Per draw: agent types, v(S~), v(S) and every type's value for S."""
    rng = np.random.default_rng(seed)
    n, ell = inst.n, inst.ell
    types = np.stack([rng.choice(ell, size=draws, p=np.asarray(f, float)) for f in inst.priors], 1)
    tent_val = np.zeros((draws, n))
    final_val = np.zeros((draws, n))
    all_vals = np.zeros((draws, n, ell))
    cache = {}

    def value(i, s, mask):
        key = (i, s, mask)
        if key not in cache:
            cache[key] = float(inst.supports[i][s](mask))
        return cache[key]

    for k in range(draws):
        profile = tuple(int(t) for t in types[k])
        tent = alg.tentative(profile, rng)
        supports = [inst.supports[i][t] for i, t in enumerate(profile)]
        final = resolve_conflicts(tent, supports, inst.items, alg.resolver, rng, alg.q)
        for i, t in enumerate(profile):
            tent_val[k, i] = value(i, t, tent[i])
            final_val[k, i] = value(i, t, final[i])
            for s in range(ell):
                all_vals[k, i, s] = value(i, s, final[i])
    return types, tent_val, final_val, all_vals


def test_7_ca_pipeline(acceptance):
    eps, draws = 0.1, 100_000
    target = 1 - 1 / math.e
    passed, notes = True, []
    worst_fair, worst_uniform, worst_var = math.inf, math.inf, 0.0
    for idx, inst in enumerate(ca_instances()):
        n, m, ell = inst.n, inst.items, inst.ell
        lp = solve_ca_lp(inst)
        opt = float(optimal_welfare(inst))
        filtered = filter_solution(inst, lp, eps)
        ok = (lp.objective >= opt - 1e-7 and filtered.objective >= (1 - eps) * lp.objective - 1e-9
              and lp.nonzeros <= n * m * ell)
        alg = CAAlgorithm(inst, filtered, eps, "xos")
        types, tent, final, vals = monte_carlo_rounding(inst, alg, draws, seed=idx)
        for i in range(n):
            if tent[:, i].mean() <= 0:
                continue
            d = final[:, i] - target * tent[:, i]
            ok &= d.mean() >= -3 * d.std(ddof=1) / math.sqrt(draws)
            worst_fair = min(worst_fair, final[:, i].mean() / tent[:, i].mean())
            for t in range(ell):
                rows = vals[types[:, i] == t, i, :]
                for s in range(ell):
                    mean = rows[:, s].mean() if len(rows) else 0.0
                    if mean > 0:
                        worst_var = max(worst_var, rows[:, s].std() / mean / alg.variance_bound)
        ok &= worst_var <= 1
        uni = CAAlgorithm(inst, filtered, eps, "uniform")
        _, tent_u, final_u, _ = monte_carlo_rounding(inst, uni, draws // 10, seed=100 + idx)
        for i in range(n):
            if tent_u[:, i].mean() > 0:
                worst_uniform = min(worst_uniform, final_u[:, i].mean() / tent_u[:, i].mean())
        passed &= bool(ok)
        notes.append(f"n{n}m{m}l{ell}:{'ok' if ok else 'FAIL'}")
    acceptance(7, passed, f"{' '.join(notes)}; xos min E[v(S)]/E[v(S~)] {worst_fair:.3f} "
                          f"(target {target:.3f}); std/mean at most {worst_var:.3f} of the bound; "
                          f"uniform resolver ratio {worst_uniform:.3f} (reported only)")
    assert passed


# 8 -------------------------------------------------------------------------


def single_parameter_instances(count=500):
    rng = np.random.default_rng(8)
    for k in range(count):
        n = 1 if k % 2 else int(rng.integers(1, 4))
        ell = int(rng.integers(2, 5))
        values = [sorted(rng.choice(np.arange(1, 40), size=ell, replace=False).tolist(), reverse=True)
                  for _ in range(n)]
        values = [[F(int(v), 4) for v in row] for row in values]
        inst = single_item_auction(values, [random_prior(rng, ell) for _ in range(n)])
        if n == 1:
            serve = [F(int(rng.integers(0, 5)), 4) for _ in range(ell)]
            yield inst, serve_probability_algorithm(inst, serve)
        else:
            yield inst, random_table_algorithm(inst, rng, support=3)


def test_8_myerson_consistency(acceptance):
    consistent, monotone, total = 0, 0, 0
    for inst, alg in single_parameter_instances():
        rep = myerson_monotone_check(inst, alg)
        total += 1
        consistent += rep.consistent
        monotone += all(rep.monotone)
    passed = consistent == total
    acceptance(8, passed, f"{consistent}/{total} consistent "
                          f"({monotone} with all serve probabilities monotone)")
    assert passed


# 9 -------------------------------------------------------------------------


def _cli(args, tmp, threads):
    env = dict(os.environ, BICFORGE_THREADS=str(threads))
    subprocess.run([sys.executable, "-m", "bicforge", *args, "--out", str(tmp)], check=True,
                   env=env, cwd=ROOT, capture_output=True)


def test_9_cli_determinism(acceptance, tmp_path):
    runs = {
        "results.csv": ["run", "--config", str(INSTANCES / "demo_config.json")],
        "ca_results.csv": ["ca-experiment", "--instance", str(INSTANCES / "ca_small.json"),
                           "--mode", "absolute", "--epsilon", "0.2", "--seed", "5",
                           "--replications", "3"],
    }
    same = {}
    for name, args in runs.items():
        blobs = []
        for k, threads in enumerate((1, 4, 2)):
            out = tmp_path / f"{name}-{k}"
            _cli(args + (["--no-cache"] if k == 2 else []), out, threads)
            blobs.append((out / name).read_bytes())
        same[name] = len(set(blobs)) == 1
    passed = all(same.values())
    acceptance(9, passed, ", ".join(f"{k} identical over 3 runs: {v}" for k, v in same.items()))
    assert passed
