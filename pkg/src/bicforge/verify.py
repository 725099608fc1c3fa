"""Brute-force oracle for incentive and performance guarantees.

Everything here integrates exactly over type profiles and over the finite
outcome distributions that mechanisms expose, so in exact mode the numbers
are rationals and the checks use zero slack beyond the stated tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithms import OptimalAlgorithm
from .assignment import (
    AssignmentProblem,
    identity_allocation,
    solve_welfare_lp,
    welfare,
)
from .errors import EnumerationTooLarge, NotSingleParameter
from .interim import AllocationAlgorithm, profile_distributions
from .mechanism import Mechanism
from .model import ENUMERATION_LIMIT, MechanismInstance, sample_profile

BIC_TOL = 1e-9


def _support_profiles(instance: MechanismInstance):
    for profile in instance.profiles():
        if all(instance.priors[i][t] > 0 for i, t in enumerate(profile)):
            yield profile


def _distributions(instance, mechanism, limit):
    if instance.ell ** instance.n > limit:
        raise EnumerationTooLarge(f"{instance.ell}^{instance.n} type profiles exceed {limit}")
    evaluated = 0
    for profile in _support_profiles(instance):
        dist = mechanism.outcome_distribution(profile)
        evaluated += len(dist)
        if evaluated > limit:
            raise EnumerationTooLarge(f"more than {limit} mechanism outcomes to enumerate")
        yield profile, dist


def interim_utilities(instance: MechanismInstance, mechanism: Mechanism,
                      limit: int = ENUMERATION_LIMIT) -> list:
    """U[i][s][t]: expected utility of agent i with true type s reporting t.

    Opponents report truthfully. Entries for reports outside the prior's
    support are None since mechanisms need not define them.
    """
    n, ell = instance.n, instance.ell
    zero = instance.priors[0][0] * 0
    util = [[[zero if instance.priors[i][t] > 0 else None for t in range(ell)]
             for _ in range(ell)] for i in range(n)]
    for profile, dist in _distributions(instance, mechanism, limit):
        for i in range(n):
            weight = instance.profile_probability(profile, skip=i)
            t = profile[i]
            for s in range(ell):
                v = instance.supports[i][s]
                util[i][s][t] += weight * sum(q * (v(o.allocation[i]) - o.prices[i])
                                              for q, o in dist)
    return util


@dataclass(frozen=True)
class IncentiveReport:
    regret: tuple  # regret[i][s][t] = U(s->t) - U(s->s), None off-support
    max_regret: object
    epsilon: object = 0
    ir_ok: bool | None = None
    worst_ir_violation: object = None

    @property
    def bic_ok(self) -> bool:
        return self.max_regret <= self.epsilon + BIC_TOL

    @property
    def ok(self) -> bool:
        return self.bic_ok and self.ir_ok is not False


def check_bic(utilities, epsilon=0, priors=None) -> IncentiveReport:
    """Regret matrices and the worst gain from misreporting.

    Types with zero prior mass are ignored as true types when ``priors``
    is given.
    """
    regret, worst = [], 0
    for i, util in enumerate(utilities):
        rows = []
        for s, row in enumerate(util):
            if row[s] is None or (priors is not None and priors[i][s] == 0):
                rows.append(tuple(None for _ in row))
                continue
            r = tuple(None if u is None else u - row[s] for u in row)
            worst = max([worst] + [g for g in r if g is not None])
            rows.append(r)
        regret.append(tuple(rows))
    return IncentiveReport(tuple(regret), worst, epsilon)


@dataclass(frozen=True)
class IRReport:
    ok: bool
    worst_violation: object
    realizations: int


def check_ir(instance: MechanismInstance, mechanism: Mechanism, tol=None,
             limit: int = ENUMERATION_LIMIT) -> IRReport:
    """Truthful utility must be non-negative in every realized outcome."""
    tol = (0 if instance.exact else BIC_TOL) if tol is None else tol
    worst, count = 0, 0
    for profile, dist in _distributions(instance, mechanism, limit):
        for q, o in dist:
            if q == 0:
                continue
            count += 1
            for i, t in enumerate(profile):
                worst = max(worst, o.prices[i] - instance.value(i, t, o.allocation[i]))
    return IRReport(worst <= tol, worst, count)


def certify(instance: MechanismInstance, mechanism: Mechanism, epsilon=0) -> IncentiveReport:
    rep = check_bic(interim_utilities(instance, mechanism), epsilon, instance.priors)
    ir = check_ir(instance, mechanism)
    return IncentiveReport(rep.regret, rep.max_regret, epsilon, ir.ok, ir.worst_violation)


# --------------------------------------------------------------------------
# performance


@dataclass(frozen=True)
class Performance:
    welfare: object
    revenue: object
    surplus: object
    exact: bool = True
    std_errors: tuple | None = None  # (SW, R, RS) standard errors for estimates
    samples: int = 0


def performance(instance: MechanismInstance, mechanism: Mechanism, *, rng=None,
                samples: int = 10_000, limit: int = ENUMERATION_LIMIT) -> Performance:
    """Expected welfare, revenue and residual surplus under truthful reports.

    Exact when the mechanism exposes its outcome distribution and the
    enumeration fits under ``limit``; otherwise Monte Carlo with ``samples``
    draws from ``rng``.
    """
    if mechanism.has_distribution():
        try:
            return _exact_performance(instance, mechanism, limit)
        except EnumerationTooLarge:
            if rng is None:
                raise
    if rng is None:
        raise ValueError("Monte Carlo performance needs an rng")
    return _sampled_performance(instance, mechanism, rng, samples)


def _exact_performance(instance, mechanism, limit):
    sw = rev = instance.priors[0][0] * 0
    for profile, dist in _distributions(instance, mechanism, limit):
        weight = instance.profile_probability(profile)
        for q, o in dist:
            sw += weight * q * sum(instance.value(i, t, o.allocation[i]) for i, t in enumerate(profile))
            rev += weight * q * sum(o.prices)
    return Performance(sw, rev, sw - rev)


def _sampled_performance(instance, mechanism, rng, samples):
    data = np.empty((samples, 2))
    for k in range(samples):
        profile = sample_profile(instance, rng).types
        o = mechanism.run(profile, rng)
        data[k, 0] = float(sum(instance.value(i, t, o.allocation[i]) for i, t in enumerate(profile)))
        data[k, 1] = float(sum(o.prices))
    rs = data[:, 0] - data[:, 1]
    means = (data[:, 0].mean(), data[:, 1].mean(), rs.mean())
    scale = math.sqrt(samples)
    ses = (data[:, 0].std(ddof=1) / scale, data[:, 1].std(ddof=1) / scale, rs.std(ddof=1) / scale)
    return Performance(*means, exact=False, std_errors=ses, samples=samples)


def estimate_regret(instance: MechanismInstance, mechanism: Mechanism, rng, samples: int = 2000):
    """Monte Carlo regret estimate with common random numbers.

    For every (i, s, t) the same opponent draws and mechanism seeds are used
    for the truthful and the deviating report, so the difference has low
    variance. Returns (max regret, its standard error).
    """
    n, ell = instance.n, instance.ell
    seeds = rng.integers(2**63, size=samples)
    best, best_se = -math.inf, 0.0
    for i in range(n):
        for s in range(ell):
            if instance.priors[i][s] == 0:
                continue
            diffs = np.zeros((ell, samples))
            for k in range(samples):
                draw = np.random.default_rng(int(seeds[k]))
                others = sample_profile(instance, draw).types
                mech_seed = int(draw.integers(2**63))
                vals = []
                for t in range(ell):
                    if instance.priors[i][t] == 0:
                        vals.append(np.nan)
                        continue
                    profile = others[:i] + (t,) + others[i + 1:]
                    o = mechanism.run(profile, np.random.default_rng(mech_seed))
                    vals.append(float(instance.value(i, s, o.allocation[i]) - o.prices[i]))
                diffs[:, k] = np.array(vals) - vals[s]
            for t in range(ell):
                if t == s or np.isnan(diffs[t, 0]):
                    continue
                mean = diffs[t].mean()
                if mean > best:
                    best, best_se = mean, diffs[t].std(ddof=1) / math.sqrt(samples)
    return (0.0 if best == -math.inf else float(best)), float(best_se)


def optimal_welfare(instance: MechanismInstance, limit: int = ENUMERATION_LIMIT):
    """E over profiles of the best feasible welfare."""
    if instance.ell ** instance.n > limit:
        raise EnumerationTooLarge(f"{instance.ell}^{instance.n} type profiles exceed {limit}")
    opt = OptimalAlgorithm(instance)
    total = instance.priors[0][0] * 0
    for profile in instance.profiles():
        weight = instance.profile_probability(profile)
        if weight:
            total += weight * opt.best_value(profile)
    return total


# --------------------------------------------------------------------------
# single-parameter consistency


@dataclass(frozen=True)
class MyersonReport:
    consistent: bool
    identity_optimal: tuple  # per agent
    monotone: tuple  # per agent
    serve_probabilities: tuple  # per agent, over positive-mass types
    solver_identity: tuple  # per agent: whether the solver itself returned the identity


def single_parameter_form(instance: MechanismInstance, agent: int):
    """(scalar values, winning services, positive-mass types) for one agent.

    Every type must value each service at either 0 or its own scalar, with
    the same set of positively valued services across types of positive
    value; scalars must be strictly decreasing over positive-mass types.
    """
    types = [t for t in range(instance.ell) if instance.priors[agent][t] > 0]
    services = instance.services[agent]
    winning, scalars = None, []
    for t in types:
        vals = [instance.value(agent, t, a) for a in services]
        positive = frozenset(a for a, v in zip(services, vals) if v > 0)
        top = max(vals)
        if any(v not in (0, top) for v in vals):
            raise NotSingleParameter(f"agent {agent} type {t} values services unevenly")
        if positive:
            if winning is None:
                winning = positive
            elif positive != winning:
                raise NotSingleParameter(f"agent {agent} types disagree on the served set")
        scalars.append(top)
    if any(a <= b for a, b in zip(scalars, scalars[1:])):
        raise NotSingleParameter(f"agent {agent} values are not strictly decreasing")
    return scalars, winning or frozenset(), types


def myerson_monotone_check(instance: MechanismInstance, algorithm: AllocationAlgorithm,
                           limit: int = ENUMERATION_LIMIT) -> MyersonReport:
    forms = [single_parameter_form(instance, i) for i in range(instance.n)]
    zero = instance.priors[0][0] * 0
    serve = [[zero] * instance.ell for _ in range(instance.n)]
    for profile, dist in profile_distributions(instance, algorithm, limit):
        for i in range(instance.n):
            weight = instance.profile_probability(profile, skip=i)
            if weight:
                serve[i][profile[i]] += weight * sum(q for q, a in dist if a[i] in forms[i][1])

    optimal, monotone, ys, solver_id = [], [], [], []
    for i, (scalars, _, types) in enumerate(forms):
        y = [serve[i][t] for t in types]
        f = [instance.priors[i][t] for t in types]
        prob = AssignmentProblem(f, f, [[a * b for b in y] for a in scalars])
        ident = identity_allocation(prob)
        sol = solve_welfare_lp(prob)
        optimal.append(welfare(prob, ident) == sol.objective if prob.exact
                       else welfare(prob, ident) >= sol.objective - BIC_TOL)
        monotone.append(all(a >= b for a, b in zip(y, y[1:])))
        ys.append(tuple(y))
        solver_id.append(tuple(tuple(r) for r in sol.x) == ident)
    return MyersonReport(optimal == monotone, tuple(optimal), tuple(monotone),
                         tuple(ys), tuple(solver_id))


def sampled_ir(instance: MechanismInstance, mechanism: Mechanism, rng, samples: int = 2000,
               tol: float = BIC_TOL) -> IRReport:
    """IR sweep over sampled truthful realizations."""
    worst = 0.0
    for _ in range(samples):
        profile = sample_profile(instance, rng).types
        o = mechanism.run(profile, rng)
        for i, t in enumerate(profile):
            worst = max(worst, float(o.prices[i] - instance.value(i, t, o.allocation[i])))
    return IRReport(worst <= tol, worst, samples)
