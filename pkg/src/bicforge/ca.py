"""Bayesian combinatorial auctions: configuration LP, filtering, rounding.

Columns are enumerated explicitly (every subset per agent and type), which
limits the module to m <= 20 items. The rounding draws a tentative bundle
per agent from its LP row and resolves contested items with one of three
resolvers:

- ``xos``: fair contention resolution. An agent claiming item j keeps it
  with probability at least 1 - 1/e, given the others' claim marginals.
- ``greedy``: contested item to the claimant with the largest supporting
  weight, lowest index on ties.
- ``uniform``: contested item to a uniformly random claimant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from .errors import (
    EnumerationTooLarge,
    InvalidEpsilon,
    NotXOS,
    NumericFailure,
    TooManyItems,
)
from .interim import AllocationAlgorithm
from .mechanism import product_distribution
from .model import MechanismInstance, Partition, mask_items, xos_supporting

MAX_ITEMS = 20
MAX_COLUMNS = 2_000_000
ZERO = 1e-12
RESOLVERS = ("xos", "greedy", "uniform")
XOS_KINDS = ("additive", "unit-demand", "xos")


@dataclass(frozen=True)
class CAFractionalSolution:
    entries: dict  # (agent, type, mask) -> probability
    objective: float
    n: int
    m: int
    ell: int

    @property
    def nonzeros(self) -> int:
        return sum(1 for x in self.entries.values() if x > 0)

    def row(self, i: int, t: int) -> list:
        return sorted((mask, x) for (a, b, mask), x in self.entries.items() if a == i and b == t)

    def item_loads(self, priors) -> list:
        load = [0.0] * self.m
        for (i, t, mask), x in self.entries.items():
            for j in mask_items(mask):
                load[j] += float(priors[i][t]) * x
        return load

    def row_sums(self) -> dict:
        sums: dict = {}
        for (i, t, _), x in self.entries.items():
            sums[(i, t)] = sums.get((i, t), 0.0) + x
        return sums


def _require_ca(instance: MechanismInstance) -> int:
    if not isinstance(instance.feasibility, Partition) or instance.items is None:
        raise ValueError("combinatorial-auction routines need a partition instance")
    if instance.items > MAX_ITEMS:
        raise TooManyItems(f"{instance.items} items exceed the column-enumeration limit of {MAX_ITEMS}")
    return instance.items


def _columns(instance: MechanismInstance, m: int):
    n, ell = instance.n, instance.ell
    if n * ell * ((1 << m) - 1) > MAX_COLUMNS:
        raise EnumerationTooLarge(f"more than {MAX_COLUMNS} LP columns")
    cols, coef = [], []
    for i in range(n):
        for t in range(ell):
            f = float(instance.priors[i][t])
            if f == 0:
                continue
            v = instance.supports[i][t]
            for mask in range(1, 1 << m):
                val = float(v(mask))
                if val > 0:
                    cols.append((i, t, mask))
                    coef.append(f * val)
    return cols, np.array(coef)


def _constraints(instance, cols, m):
    """Item rows first, then one row per (agent, type)."""
    ell = instance.ell
    rows, cidx, data = [], [], []
    for k, (i, t, mask) in enumerate(cols):
        f = float(instance.priors[i][t])
        for j in mask_items(mask):
            rows.append(j)
            cidx.append(k)
            data.append(f)
        rows.append(m + i * ell + t)
        cidx.append(k)
        data.append(1.0)
    shape = (m + instance.n * ell, len(cols))
    return csr_matrix((data, (rows, cidx)), shape=shape), np.ones(shape[0])


def _to_vertex(A: np.ndarray, b: np.ndarray, c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Move an optimal point to a vertex of {Ax <= b, x >= 0} without
    lowering c.x: while the support columns restricted to tight rows are
    dependent, step along a null direction until a coordinate vanishes."""
    x = x.copy()
    for _ in range(len(x) + 1):
        support = np.flatnonzero(x > ZERO)
        tight = np.flatnonzero(A @ x >= b - 1e-9)
        sub = A[np.ix_(tight, support)]
        if len(support) == 0:
            return x
        _, sv, vt = np.linalg.svd(sub) if sub.size else (None, np.array([]), np.eye(len(support)))
        rank = int(np.sum(sv > 1e-10))
        if rank == len(support):
            return x
        d = np.zeros_like(x)
        d[support] = vt[rank]
        if c @ d < 0:
            d = -d
        # largest step keeping x >= 0 and slack rows feasible
        steps = [-x[k] / d[k] for k in support if d[k] < -ZERO]
        Ad = A @ d
        slack = b - A @ x
        steps += [slack[r] / Ad[r] for r in range(len(b)) if Ad[r] > ZERO and r not in set(tight)]
        if not steps:
            d = -d
            steps = [-x[k] / d[k] for k in support if d[k] < -ZERO]
        theta = min(steps)
        x = x + theta * d
        x[np.abs(x) <= ZERO] = 0.0
    raise NumericFailure("crossover did not reach a vertex")


def solve_ca_lp(instance: MechanismInstance) -> CAFractionalSolution:
    """Optimal basic solution of the configuration LP."""
    m = _require_ca(instance)
    n, ell = instance.n, instance.ell
    cols, coef = _columns(instance, m)
    if not cols:
        return CAFractionalSolution({}, 0.0, n, m, ell)
    A, b = _constraints(instance, cols, m)
    res = linprog(-coef, A_ub=A, b_ub=b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise NumericFailure(f"LP solver failed: {res.message}")
    x = np.where(res.x > ZERO, res.x, 0.0)
    if np.count_nonzero(x) > A.shape[0]:
        x = _to_vertex(A.toarray(), b, coef, x)
    entries = {col: float(v) for col, v in zip(cols, x) if v > 0}
    return CAFractionalSolution(entries, float(coef @ x), n, m, ell)


def lp_objective(instance: MechanismInstance, entries: dict) -> float:
    return sum(float(instance.priors[i][t]) * float(instance.supports[i][t](mask)) * x
               for (i, t, mask), x in entries.items())


def filter_threshold(n: int, m: int, ell: int, epsilon: float) -> float:
    return epsilon / (n * m * ell)


def filter_solution(instance: MechanismInstance, solution: CAFractionalSolution,
                    epsilon: float) -> CAFractionalSolution:
    """Zero out entries strictly below epsilon / (n m ell)."""
    if not 0 < epsilon < 1:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")
    cut = filter_threshold(solution.n, solution.m, solution.ell, epsilon)
    kept = {k: x for k, x in solution.entries.items() if x >= cut}
    return CAFractionalSolution(kept, lp_objective(instance, kept),
                                solution.n, solution.m, solution.ell)


# --------------------------------------------------------------------------
# rounding


def tentative_distribution(solution: CAFractionalSolution, i: int, t: int) -> list:
    """[(probability, mask)] for agent i with type t; the empty set takes the rest."""
    row = [(x, mask) for mask, x in solution.row(i, t)]
    rest = 1.0 - sum(x for x, _ in row)
    if rest > ZERO:
        row.append((rest, 0))
    return row


def round_tentative(solution: CAFractionalSolution, reported_types, rng) -> tuple:
    return tuple(_pick(tentative_distribution(solution, i, t), rng)
                 for i, t in enumerate(reported_types))


def claim_marginals(instance: MechanismInstance, solution: CAFractionalSolution) -> list:
    """q[i][j]: probability agent i claims item j when its type follows the prior."""
    q = [[0.0] * solution.m for _ in range(solution.n)]
    for (i, t, mask), x in solution.entries.items():
        for j in mask_items(mask):
            q[i][j] += float(instance.priors[i][t]) * x
    return q


def _claimants(tentative, m):
    return [[i for i, mask in enumerate(tentative) if mask >> j & 1] for j in range(m)]


def fair_shares(claimants: list, q_item: list) -> list:
    """Win probabilities of each claimant under fair contention resolution."""
    if len(claimants) == 1:
        return [1.0]
    total = sum(q_item)
    if total <= 0:
        return [1.0 / len(claimants)] * len(claimants)
    inside = set(claimants)
    outside = sum(q for k, q in enumerate(q_item) if k not in inside)
    size = len(claimants)
    shares = []
    for i in claimants:
        others = sum(q_item[k] for k in claimants if k != i)
        shares.append((others / (size - 1) + outside / size) / total)
    norm = sum(shares)
    return [s / norm for s in shares]


def _item_winner_distributions(tentative, supports, m, resolver, q):
    """Per contested item: [(probability, winner)]."""
    out = {}
    weights = {}
    if resolver == "greedy":
        weights = {i: xos_supporting(v, tentative[i]) for i, v in enumerate(supports)
                   if tentative[i]}
    for j, who in enumerate(_claimants(tentative, m)):
        if len(who) < 2:
            continue
        if resolver == "uniform":
            out[j] = [(1.0 / len(who), i) for i in who]
        elif resolver == "xos":
            out[j] = list(zip(fair_shares(who, [q[k][j] for k in range(len(q))]), who))
        else:
            best = max(who, key=lambda i: (weights[i][j], -i))
            out[j] = [(1.0, best)]
    return out


def _apply(tentative, winners: dict) -> tuple:
    alloc = list(tentative)
    for j, w in winners.items():
        for i in range(len(alloc)):
            if i != w:
                alloc[i] &= ~(1 << j)
    return tuple(alloc)


def _check_xos(supports, tentative):
    for v, mask in zip(supports, tentative):
        if mask and getattr(v, "kind", None) not in XOS_KINDS:
            raise NotXOS(f"{getattr(v, 'kind', type(v).__name__)} valuations have no supporting clauses")


def _contested(tentative) -> bool:
    seen = 0
    for mask in tentative:
        if seen & mask:
            return True
        seen |= mask
    return False


def _pick(dist, rng):
    """Draw from [(probability, value)] with one uniform variate."""
    u = rng.random() * sum(p for p, _ in dist)
    acc = 0.0
    for p, v in dist:
        acc += p
        if u < acc:
            return v
    return dist[-1][1]


def resolve_distribution(tentative, supports, m, resolver="xos", q=None) -> list:
    """Exact [(probability, allocation)] of a resolver on fixed tentative sets."""
    if resolver in ("xos", "greedy"):
        _check_xos(supports, tentative)
    if not _contested(tentative):
        return [(1.0, tuple(tentative))]
    items = _item_winner_distributions(tentative, supports, m, resolver, q)
    if not items:
        return [(1.0, tuple(tentative))]
    keys = sorted(items)
    out = []
    for prob, combo in product_distribution([[(p, w) for p, w in items[j]] for j in keys]):
        out.append((prob, _apply(tentative, dict(zip(keys, combo)))))
    return out


def resolve_conflicts(tentative, supports, m, resolver, rng, q=None) -> tuple:
    if resolver in ("xos", "greedy"):
        _check_xos(supports, tentative)
    if not _contested(tentative):
        return tuple(tentative)
    items = _item_winner_distributions(tentative, supports, m, resolver, q)
    winners = {j: items[j][0][1] if len(items[j]) == 1 else _pick(items[j], rng)
               for j in sorted(items)}
    return _apply(tentative, winners)


def resolve_conflicts_xos(tentative, supports, m, rng, q) -> tuple:
    return resolve_conflicts(tentative, supports, m, "xos", rng, q)


def resolve_conflicts_greedy(tentative, supports, m) -> tuple:
    return resolve_conflicts(tentative, supports, m, "greedy", None)


def resolve_conflicts_uniform(tentative, m, rng) -> tuple:
    return resolve_conflicts(tentative, [None] * len(tentative), m, "uniform", rng)


class CAAlgorithm(AllocationAlgorithm):
    """Rounding of a filtered LP solution followed by conflict resolution."""

    deterministic = False

    def __init__(self, instance: MechanismInstance, solution: CAFractionalSolution,
                 epsilon: float, resolver: str = "xos"):
        if resolver not in RESOLVERS:
            raise ValueError(f"resolver must be one of {RESOLVERS}")
        self.instance = instance
        self.solution = solution
        self.epsilon = epsilon
        self.resolver = resolver
        self.name = f"ca-lp-round[{resolver}]"
        self.q = claim_marginals(instance, solution)
        self._rows = {(i, t): tentative_distribution(solution, i, t)
                      for i in range(instance.n) for t in range(instance.ell)}
        single = all(len(r) == 1 for r in self._rows.values())
        self.deterministic = single and (resolver == "greedy" or self._no_contention())

    def _no_contention(self):
        return all(sum(1 for qi in self.q if qi[j] > 0) < 2 for j in range(self.solution.m))

    @property
    def variance_bound(self) -> float:
        s = self.solution
        return math.sqrt(4 * s.n * s.m * s.ell / self.epsilon)

    def _supports(self, profile):
        return [self.instance.supports[i][t] for i, t in enumerate(profile)]

    def tentative(self, profile, rng):
        out = []
        for i, t in enumerate(profile):
            dist = self._rows[(i, t)]
            out.append(dist[0][1] if len(dist) == 1 else _pick(dist, rng))
        return tuple(out)

    def allocate(self, profile, rng=None):
        tent = self.tentative(profile, rng)
        return resolve_conflicts(tent, self._supports(profile), self.solution.m,
                                 self.resolver, rng, self.q)

    def tentative_distributions(self, profile):
        return product_distribution([[(q, mask) for q, mask in self._rows[(i, t)]]
                                     for i, t in enumerate(profile)])

    def distribution(self, profile):
        profile = tuple(profile)
        supports = self._supports(profile)
        merged: dict = {}
        for q, tent in self.tentative_distributions(profile):
            for r, alloc in resolve_distribution(tent, supports, self.solution.m,
                                                 self.resolver, self.q):
                merged[alloc] = merged.get(alloc, 0.0) + q * r
        return [(q, a) for a, q in merged.items()]

    def has_distribution(self):
        return True


def ca_algorithm(instance: MechanismInstance, epsilon: float, resolver: str = "xos",
                 solution: CAFractionalSolution | None = None) -> CAAlgorithm:
    if solution is None:
        solution = solve_ca_lp(instance)
    return CAAlgorithm(instance, filter_solution(instance, solution, epsilon), epsilon, resolver)

