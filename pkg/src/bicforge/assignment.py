"""Fractional assignment (transportation) problems with envy-free prices.

The primal is solved as a min-cost max-flow by successive shortest paths
(Bellman-Ford on the residual graph, so exact rationals work unchanged).
Prices come from node potentials of the complementary-slackness system for
the returned allocation: shortest distances from a ground node give the
buyer-optimal (minimal) price vector, distances into it give the
seller-optimal (maximal) one.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import NumericFailure
from .model import is_exact_number

FLOAT_TOL = 1e-9
_FLOW_TOL = 1e-12


@dataclass(frozen=True)
class AssignmentProblem:
    demands: tuple
    supplies: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "demands", tuple(self.demands))
        object.__setattr__(self, "supplies", tuple(self.supplies))
        object.__setattr__(self, "values", tuple(tuple(r) for r in self.values))
        if len(self.values) != len(self.demands):
            raise ValueError("values must have one row per buyer")
        if any(len(r) != len(self.supplies) for r in self.values):
            raise ValueError("values must have one column per product")
        entries = list(self.demands) + list(self.supplies) + [w for r in self.values for w in r]
        if any(e < 0 for e in entries):
            raise ValueError("demands, supplies and values must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.demands), len(self.supplies)

    @property
    def exact(self) -> bool:
        return all(
            is_exact_number(e)
            for e in (*self.demands, *self.supplies, *(w for r in self.values for w in r))
        )

    @property
    def balanced(self) -> bool:
        return sum(self.demands) == sum(self.supplies) if self.exact else \
            abs(sum(self.demands) - sum(self.supplies)) <= FLOAT_TOL

    def as_fractions(self) -> "AssignmentProblem":
        return AssignmentProblem(
            [Fraction(a) for a in self.demands],
            [Fraction(b) for b in self.supplies],
            [[Fraction(w) for w in r] for r in self.values],
        )

    def scaled(self, factor) -> "AssignmentProblem":
        return AssignmentProblem(self.demands, self.supplies,
                                 [[w * factor for w in r] for r in self.values])


@dataclass(frozen=True)
class AssignmentSolution:
    x: tuple
    u: tuple
    p: tuple
    objective: object

    def revenue(self):
        return sum(self.x[s][t] * self.p[t] for s in range(len(self.x)) for t in range(len(self.p)))

    def surplus(self, problem: AssignmentProblem):
        return sum(
            self.x[s][t] * (problem.values[s][t] - self.p[t])
            for s in range(len(self.x)) for t in range(len(self.p))
        )


@dataclass(frozen=True)
class EnvyFreeReport:
    ok: bool
    worst_violation: object


@dataclass(frozen=True)
class CertificateReport:
    primal_ok: bool
    dual_ok: bool
    cs_ok: bool
    market_clearing: bool

    @property
    def optimal(self) -> bool:
        return self.primal_ok and self.dual_ok and self.cs_ok


def _tol(problem: AssignmentProblem, tol):
    if tol is not None:
        return tol
    return 0 if problem.exact else FLOAT_TOL


def welfare(problem: AssignmentProblem, x) -> object:
    return sum(x[s][t] * problem.values[s][t]
               for s in range(len(problem.demands)) for t in range(len(problem.supplies)))


def identity_allocation(problem: AssignmentProblem) -> tuple:
    """Diagonal allocation x[s][s] = demand[s]; needs a square problem."""
    ell, m = problem.shape
    if ell != m:
        raise ValueError("identity allocation needs a square problem")
    zero = problem.demands[0] * 0
    return tuple(tuple(problem.demands[s] if s == t else zero for t in range(m)) for s in range(ell))


# --------------------------------------------------------------------------
# primal


def _min_cost_max_flow(alpha, beta, w, tol):
    ell, m = len(alpha), len(beta)
    src, sink = 0, ell + m + 1
    zero = alpha[0] * 0 if alpha else 0
    # edge: (tail, head, capacity or None for unbounded, cost)
    edges = [(src, 1 + s, alpha[s], zero) for s in range(ell)]
    pair_edge = {}
    for s in range(ell):
        for t in range(m):
            pair_edge[s, t] = len(edges)
            edges.append((1 + s, 1 + ell + t, None, -w[s][t]))
    edges += [(1 + ell + t, sink, beta[t], zero) for t in range(m)]
    flow = [zero] * len(edges)
    nodes = ell + m + 2

    while True:
        dist = [None] * nodes
        pred = [None] * nodes
        dist[src] = zero
        for _ in range(nodes):
            changed = False
            for e, (a, b, cap, cost) in enumerate(edges):
                if dist[a] is not None and (cap is None or cap - flow[e] > tol):
                    nd = dist[a] + cost
                    if dist[b] is None or nd < dist[b] - tol:
                        dist[b], pred[b], changed = nd, (e, 1), True
                if dist[b] is not None and flow[e] > tol:
                    nd = dist[b] - cost
                    if dist[a] is None or nd < dist[a] - tol:
                        dist[a], pred[a], changed = nd, (e, -1), True
            if not changed:
                break
        else:
            raise NumericFailure("negative cycle in residual graph")
        if dist[sink] is None:
            break

        path, node = [], sink
        while node != src:
            e, d = pred[node]
            path.append((e, d))
            node = edges[e][0] if d == 1 else edges[e][1]
        bottleneck = None
        for e, d in path:
            if d == 1 and edges[e][2] is None:
                continue
            room = (edges[e][2] - flow[e]) if d == 1 else flow[e]
            bottleneck = room if bottleneck is None else min(bottleneck, room)
        for e, d in path:
            flow[e] = flow[e] + bottleneck if d == 1 else flow[e] - bottleneck

    return [[flow[pair_edge[s, t]] for t in range(m)] for s in range(ell)]


# --------------------------------------------------------------------------
# dual


def _shortest(nodes, arcs, source, tol):
    dist = [None] * nodes
    dist[source] = 0
    for _ in range(nodes):
        changed = False
        for a, b, c in arcs:
            if dist[a] is not None:
                nd = dist[a] + c
                if dist[b] is None or nd < dist[b] - tol:
                    dist[b], changed = nd, True
        if not changed:
            return dist
    raise NumericFailure("complementary-slackness system is infeasible")


def _prices(alpha, beta, w, x, mode, tol):
    """Dual (u, p) satisfying complementary slackness with ``x``.

    Potentials: ground node 0, buyer s -> 1+s (value u[s]), product t ->
    1+ell+t (value -p[t]). Arc (i, j, c) encodes pot[j] - pot[i] <= c.
    """
    ell, m = len(alpha), len(beta)
    U = lambda s: 1 + s  # noqa: E731
    Q = lambda t: 1 + ell + t  # noqa: E731
    arcs = []
    for s in range(ell):
        row_tight = abs(sum(x[s]) - alpha[s]) <= tol
        arcs.append((U(s), 0, 0))
        if not row_tight:
            arcs.append((0, U(s), 0))
        for t in range(m):
            arcs.append((U(s), Q(t), -w[s][t]))
            if x[s][t] > tol:
                arcs.append((Q(t), U(s), w[s][t]))
    for t in range(m):
        col_tight = abs(sum(x[s][t] for s in range(ell)) - beta[t]) <= tol
        arcs.append((0, Q(t), 0))
        if not col_tight:
            arcs.append((Q(t), 0, 0))

    nodes = 1 + ell + m
    if mode == "min":
        pot = _shortest(nodes, arcs, 0, tol)
    elif mode == "max":
        back = _shortest(nodes, [(b, a, c) for a, b, c in arcs], 0, tol)
        pot = [None if d is None else -d for d in back]
    else:
        raise ValueError(f"price mode must be 'min' or 'max', not {mode!r}")

    zero = alpha[0] * 0
    p = [None if pot[Q(t)] is None else -pot[Q(t)] for t in range(m)]
    u = [pot[U(s)] for s in range(ell)]
    # unconstrained potentials belong to zero-mass buyers/products
    if any(v is None for v in p):
        known = [ui if ui is not None else zero for ui in u]
        p = [pt if pt is not None else max([zero] + [w[s][t] - known[s] for s in range(ell)])
             for t, pt in enumerate(p)]
    u = [us if us is not None else max([zero] + [w[s][t] - p[t] for t in range(m)])
         for s, us in enumerate(u)]
    return [zero + v for v in u], [zero + v for v in p]


# --------------------------------------------------------------------------
# public API


def _solve(problem: AssignmentProblem, prices: str, tol) -> AssignmentSolution:
    alpha, beta, w = problem.demands, problem.supplies, problem.values
    x = _min_cost_max_flow(alpha, beta, w, tol)
    u, p = _prices(alpha, beta, w, x, prices, tol)
    return AssignmentSolution(
        tuple(tuple(r) for r in x), tuple(u), tuple(p), welfare(problem, x)
    )


def solve_welfare_lp(problem: AssignmentProblem, prices: str = "min") -> AssignmentSolution:
    """Welfare-maximizing allocation with envy-free prices.

    Among optimal allocations the returned one also maximizes the traded
    amount, so it is market-clearing whenever total demand equals total
    supply. ``prices`` picks the buyer-optimal ("min") or seller-optimal
    ("max") dual among those compatible with the allocation.
    """
    if not problem.demands or not problem.supplies:
        return AssignmentSolution(tuple(tuple() for _ in problem.demands),
                                  tuple(0 for _ in problem.demands),
                                  tuple(0 for _ in problem.supplies), 0)
    if problem.exact:
        sol = _solve(problem.as_fractions(), prices, 0)
        if not check_certificate(problem, sol).optimal:
            raise NumericFailure("exact solve produced an invalid certificate")
        return sol
    try:
        sol = _solve(problem, prices, _FLOW_TOL)
        if check_certificate(problem, sol).optimal and check_envy_free(problem, sol).ok:
            return sol
    except NumericFailure:
        pass
    exact = _solve(problem.as_fractions(), prices, 0)
    sol = AssignmentSolution(
        tuple(tuple(float(v) for v in r) for r in exact.x),
        tuple(float(v) for v in exact.u),
        tuple(float(v) for v in exact.p),
        float(exact.objective),
    )
    if not check_certificate(problem, sol).optimal:
        raise NumericFailure("certificate fails even after exact-rational retry")
    return sol


def check_envy_free(problem: AssignmentProblem, solution: AssignmentSolution, tol=None) -> EnvyFreeReport:
    """Every positively assigned pair is a utility-maximizing, non-negative choice."""
    tol = _tol(problem, tol)
    w, x, p = problem.values, solution.x, solution.p
    worst = 0
    for s in range(len(w)):
        best = max(w[s][k] - p[k] for k in range(len(p))) if p else 0
        for t in range(len(p)):
            if x[s][t] > tol:
                util = w[s][t] - p[t]
                worst = max(worst, best - util, -util)
    return EnvyFreeReport(worst <= tol, worst)


def check_certificate(problem: AssignmentProblem, solution: AssignmentSolution, tol=None) -> CertificateReport:
    tol = _tol(problem, tol)
    alpha, beta, w = problem.demands, problem.supplies, problem.values
    x, u, p = solution.x, solution.u, solution.p
    ell, m = problem.shape
    rows = [sum(x[s]) for s in range(ell)]
    cols = [sum(x[s][t] for s in range(ell)) for t in range(m)]

    primal = (all(x[s][t] >= -tol for s in range(ell) for t in range(m))
              and all(rows[s] <= alpha[s] + tol for s in range(ell))
              and all(cols[t] <= beta[t] + tol for t in range(m)))
    dual = (all(v >= -tol for v in u) and all(v >= -tol for v in p)
            and all(u[s] + p[t] >= w[s][t] - tol for s in range(ell) for t in range(m)))
    cs = (all(abs(u[s] + p[t] - w[s][t]) <= tol
              for s in range(ell) for t in range(m) if x[s][t] > tol)
          and all(abs(rows[s] - alpha[s]) <= tol for s in range(ell) if u[s] > tol)
          and all(abs(cols[t] - beta[t]) <= tol for t in range(m) if p[t] > tol))
    clearing = (all(abs(rows[s] - alpha[s]) <= tol for s in range(ell))
                and all(abs(cols[t] - beta[t]) <= tol for t in range(m)))
    return CertificateReport(primal, dual, cs, clearing)
