"""Black-box reduction from a Bayesian algorithm to a BIC, IR mechanism.

Per agent, the induced assignment problem is solved for a welfare-optimal
market-clearing allocation x_i with envy-free prices p_i. A report s is then
replaced by an algorithm input t drawn with probability x_i[s][t] / f_i(s),
the algorithm runs on the replaced profile, and the agent pays
p_i[t] * v_i^s(S_i) / w_i[s][t].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import AssignmentProblem, AssignmentSolution, solve_welfare_lp
from .errors import ZeroProbabilityType
from .interim import (
    AllocationAlgorithm,
    InterimTable,
    estimate_interim_absolute,
    estimate_interim_relative,
    exact_interim,
    induced_problem,
)
from .mechanism import Mechanism, Outcome, product_distribution
from .model import MechanismInstance


@dataclass(frozen=True)
class AgentTable:
    x: tuple  # ell x ell allocation of the induced problem
    p: tuple  # prices per virtual product (input type)
    w: tuple  # interim values the problem was built from
    prior: tuple
    leftover: tuple = ()  # unsold supply per product, empty when market-clearing

    @property
    def ell(self) -> int:
        return len(self.prior)

    def problem(self) -> AssignmentProblem:
        return AssignmentProblem(self.prior, self.prior, self.w)

    def revenue(self):
        return sum(self.x[s][t] * self.p[t] for s in range(self.ell) for t in range(self.ell))

    def surplus(self):
        return sum(self.x[s][t] * (self.w[s][t] - self.p[t])
                   for s in range(self.ell) for t in range(self.ell))

    def welfare(self):
        return sum(self.x[s][t] * self.w[s][t] for s in range(self.ell) for t in range(self.ell))


@dataclass(frozen=True)
class ReductionTables:
    agents: tuple
    mode: str = "exact"
    epsilon: object = None
    meta: dict = field(default_factory=dict, compare=False)

    def agent(self, i: int) -> AgentTable:
        return self.agents[i]


def build_interim(instance: MechanismInstance, algorithm: AllocationAlgorithm, mode: str = "exact",
                  epsilon=None, rng=None, c: float = 10.0, workers: int = 1) -> InterimTable:
    if mode == "exact":
        return exact_interim(instance, algorithm)
    if rng is None:
        raise ValueError("estimated interim tables need an rng")
    if mode == "relative":
        return estimate_interim_relative(instance, algorithm, epsilon, c, rng, workers)
    if mode == "absolute":
        return estimate_interim_absolute(instance, algorithm, epsilon, rng, workers)
    raise ValueError(f"unknown interim mode {mode!r}")


def tables_from_interim(table: InterimTable, instance: MechanismInstance,
                        prices: str = "max") -> ReductionTables:
    agents = []
    for i in range(instance.n):
        prob = induced_problem(table, instance, i)
        sol = solve_welfare_lp(prob, prices=prices)
        agents.append(agent_table(prob, sol))
    return ReductionTables(tuple(agents), table.mode, table.epsilon)


def agent_table(problem: AssignmentProblem, sol: AssignmentSolution) -> AgentTable:
    f = problem.demands
    ell = len(f)
    leftover = tuple(f[t] - sum(sol.x[s][t] for s in range(ell)) for t in range(ell))
    if all(y == 0 for y in leftover):
        leftover = ()
    return AgentTable(sol.x, sol.p, problem.values, tuple(f), leftover)


def precompute(instance: MechanismInstance, algorithm: AllocationAlgorithm, mode: str = "exact",
               epsilon=None, rng=None, *, c: float = 10.0, prices: str = "max",
               workers: int = 1) -> ReductionTables:
    table = build_interim(instance, algorithm, mode, epsilon, rng, c, workers)
    return tables_from_interim(table, instance, prices)


def decouple_distribution(tables: ReductionTables, agent: int, s: int) -> list:
    """[(probability, algorithm input type)] for report s."""
    at = tables.agent(agent)
    f = at.prior[s]
    if f == 0:
        raise ZeroProbabilityType(f"agent {agent} reported type {s}, which has prior mass 0")
    return [(at.x[s][t] / f, t) for t in range(at.ell) if at.x[s][t] > 0]


def _draw(dist, rng):
    probs = np.array([float(q) for q, _ in dist])
    k = int(rng.choice(len(dist), p=probs / probs.sum()))
    return dist[k][1]


def decouple(tables: ReductionTables, agent: int, s: int, rng: np.random.Generator) -> int:
    return _draw(decouple_distribution(tables, agent, s), rng)


def price(tables: ReductionTables, agent: int, s: int, t: int, realized_value):
    w = tables.agent(agent).w[s][t]
    if w == 0 or realized_value == 0:
        return 0 * realized_value
    return tables.agent(agent).p[t] * realized_value / w


class ReducedMechanism(Mechanism):
    """The reduced mechanism for given tables and algorithm."""

    name = "reduction-sw"

    def __init__(self, instance: MechanismInstance, algorithm: AllocationAlgorithm,
                 tables: ReductionTables):
        super().__init__(instance)
        self.algorithm = algorithm
        self.tables = tables

    def _agent_choices(self, i: int, s: int) -> list:
        """[(probability, (input type, served))] for agent i reporting s."""
        return [(q, (t, True)) for q, t in decouple_distribution(self.tables, i, s)]

    def _outcome(self, reports, choices, alloc) -> Outcome:
        inst = self.instance
        final, prices, trace = [], [], []
        for i, (s, (t, served)) in enumerate(zip(reports, choices)):
            service = alloc[i] if served else inst.null_service
            value = inst.value(i, s, service)
            final.append(service)
            prices.append(price(self.tables, i, s, t, value) if served else 0 * value)
            trace.append((s, t, served))
        return Outcome(tuple(final), tuple(prices), tuple(trace))

    def run(self, reports, rng) -> Outcome:
        reports = tuple(reports)
        choices = [_draw(self._agent_choices(i, s), rng) for i, s in enumerate(reports)]
        inputs = tuple(t for t, _ in choices)
        alloc = self.algorithm.allocate(inputs, rng)
        return self._outcome(reports, choices, alloc)

    def outcome_distribution(self, reports):
        reports = tuple(reports)
        per_agent = [self._agent_choices(i, s) for i, s in enumerate(reports)]
        out = []
        for q, choices in product_distribution(per_agent):
            inputs = tuple(t for t, _ in choices)
            for r, alloc in self.algorithm.distribution(inputs):
                out.append((q * r, self._outcome(reports, choices, alloc)))
        return out

    def has_distribution(self):
        return self.algorithm.has_distribution()


def run_mechanism(tables: ReductionTables, instance: MechanismInstance,
                  algorithm: AllocationAlgorithm, reports, rng) -> Outcome:
    return ReducedMechanism(instance, algorithm, tables).run(reports, rng)
