"""Revenue and residual-surplus reductions for downward-closed problems.

The induced assignment problems are solved by a reserve ladder instead of
pure welfare maximization. The resulting envy-free allocation may leave
supply unsold; the meta mechanism then leaves part of each report unserved
(allocating the null service at price 0) and feeds the algorithm an input
drawn from the unsold supply, which keeps every algorithm input distributed
according to the prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .assignment import AssignmentProblem, AssignmentSolution, solve_welfare_lp
from .interim import AllocationAlgorithm, InterimTable, induced_problem
from .model import MechanismInstance, granularity, require_downward_closed
from .reduction_sw import (
    ReducedMechanism,
    ReductionTables,
    _draw,
    agent_table,
    build_interim,
    decouple_distribution,
)

OBJECTIVES = ("revenue", "surplus")


def ladder_levels(delta) -> int:
    """Number of reserve levels, ceil(log2(1/delta)) but at least one."""
    if not 0 < delta <= 1:
        raise ValueError(f"granularity must lie in (0, 1], got {delta}")
    if isinstance(delta, Fraction):
        k = 0
        while Fraction(1, 2**k) > delta:
            k += 1
        return max(1, k)
    return max(1, math.ceil(math.log2(1 / delta) - 1e-12))


@dataclass(frozen=True)
class LadderResult:
    solution: AssignmentSolution  # projected onto the original buyers and products
    objective: str
    level: int  # chosen k, 0 when the problem has no positive value
    u_max: object
    levels: int
    reserves: tuple  # u_k for k = 1..K
    values: tuple  # objective of each level's projection
    solutions: tuple  # projection of each level


def _zero_solution(problem: AssignmentProblem) -> AssignmentSolution:
    ell, m = problem.shape
    z = problem.demands[0] * 0 if problem.demands else 0
    return AssignmentSolution(tuple(tuple(z for _ in range(m)) for _ in range(ell)),
                              tuple(z for _ in range(ell)), tuple(z for _ in range(m)), z)


def _revenue_variant(problem: AssignmentProblem, reserve, delta):
    """One dummy buyer per product, demand 1 + delta, valuing only that product."""
    ell, m = problem.shape
    zero = reserve * 0
    dummies = [[reserve if t == d else zero for t in range(m)] for d in range(m)]
    return AssignmentProblem(list(problem.demands) + [1 + delta] * m, problem.supplies,
                             [list(r) for r in problem.values] + dummies)


def _surplus_variant(problem: AssignmentProblem, reserve, delta):
    """One dummy product per buyer, supply 1 + delta, valued only by that buyer."""
    ell, m = problem.shape
    zero = reserve * 0
    values = [list(r) + [reserve if d == s else zero for d in range(ell)]
              for s, r in enumerate(problem.values)]
    return AssignmentProblem(problem.demands, list(problem.supplies) + [1 + delta] * ell, values)


def _project(problem: AssignmentProblem, sol: AssignmentSolution) -> AssignmentSolution:
    ell, m = problem.shape
    x = tuple(tuple(sol.x[s][t] for t in range(m)) for s in range(ell))
    return AssignmentSolution(
        x, tuple(sol.u[:ell]), tuple(sol.p[:m]),
        sum(x[s][t] * problem.values[s][t] for s in range(ell) for t in range(m)),
    )


def ladder(problem: AssignmentProblem, delta, objective: str = "revenue") -> LadderResult:
    """Reserve ladder: try reserves u_max / 2^k and keep the best projection.

    Revenue levels use seller-optimal prices and surplus levels use
    buyer-optimal prices; ties between levels go to the lowest k.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    K = ladder_levels(delta)
    opt = solve_welfare_lp(problem)
    ell, m = problem.shape
    supported = [problem.values[s][t] for s in range(ell) for t in range(m) if opt.x[s][t] > 0]
    u_max = max(supported, default=0)
    if u_max == 0:
        zero = _zero_solution(problem)
        return LadderResult(zero, objective, 0, u_max, K, (), (), ())

    exact = problem.exact
    slack = Fraction(delta) if exact else float(delta)
    reserves, values, sols = [], [], []
    for k in range(1, K + 1):
        reserve = u_max / (Fraction(2) ** k if exact else 2.0 ** k)
        if objective == "revenue":
            sol = solve_welfare_lp(_revenue_variant(problem, reserve, slack), prices="max")
            proj = _project(problem, sol)
            val = proj.revenue()
        else:
            sol = solve_welfare_lp(_surplus_variant(problem, reserve, slack), prices="min")
            proj = _project(problem, sol)
            val = proj.surplus(problem)
        reserves.append(reserve)
        values.append(val)
        sols.append(proj)
    best = max(range(K), key=lambda k: (values[k], -k))
    return LadderResult(sols[best], objective, best + 1, u_max, K,
                        tuple(reserves), tuple(values), tuple(sols))


def reserve_ladder_revenue(problem: AssignmentProblem, delta) -> AssignmentSolution:
    return ladder(problem, delta, "revenue").solution


def reserve_ladder_surplus(problem: AssignmentProblem, delta) -> AssignmentSolution:
    return ladder(problem, delta, "surplus").solution


# --------------------------------------------------------------------------
# meta mechanism


class MetaTables(ReductionTables):
    """Reduction tables whose allocations may leave supply unsold.

    ``meta`` holds the objective, granularity and per-agent ladder results.
    """


def meta_tables_from_interim(table: InterimTable, instance: MechanismInstance,
                             objective: str = "revenue", delta=None) -> MetaTables:
    require_downward_closed(instance)
    delta = granularity(instance) if delta is None else delta
    agents, ladders = [], []
    for i in range(instance.n):
        prob = induced_problem(table, instance, i)
        res = ladder(prob, delta, objective)
        agents.append(agent_table(prob, res.solution))
        ladders.append(res)
    return MetaTables(tuple(agents), table.mode, table.epsilon,
                      {"objective": objective, "delta": delta, "ladders": tuple(ladders)})


def meta_precompute(instance: MechanismInstance, algorithm: AllocationAlgorithm,
                    objective: str = "revenue", mode: str = "exact", epsilon=None, rng=None,
                    *, delta=None, c: float = 10.0, workers: int = 1) -> MetaTables:
    require_downward_closed(instance)
    table = build_interim(instance, algorithm, mode, epsilon, rng, c, workers)
    return meta_tables_from_interim(table, instance, objective, delta)


def meta_decouple_distribution(tables: ReductionTables, agent: int, s: int) -> list:
    """[(probability, (input type, served))] for report s."""
    at = tables.agent(agent)
    served = decouple_distribution(tables, agent, s)
    out = [(q, (t, True)) for q, t in served]
    if not at.leftover:
        return out
    rest = 1 - sum(q for q, _ in served)
    if rest <= 0:
        return out
    total = sum(at.leftover)
    out += [(rest * y / total, (t, False)) for t, y in enumerate(at.leftover) if y > 0]
    return out


def meta_decouple(tables: ReductionTables, agent: int, s: int, rng) -> tuple:
    return _draw(meta_decouple_distribution(tables, agent, s), rng)


class MetaMechanism(ReducedMechanism):
    """Reduced mechanism that leaves the unserved part of each report with
    the null service at price 0."""

    name = "reduction-meta"

    def __init__(self, instance, algorithm, tables):
        require_downward_closed(instance)
        super().__init__(instance, algorithm, tables)

    def _agent_choices(self, i, s):
        return meta_decouple_distribution(self.tables, i, s)


def run_meta_mechanism(tables, instance, algorithm, reports, rng):
    return MetaMechanism(instance, algorithm, tables).run(reports, rng)
