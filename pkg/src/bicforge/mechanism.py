"""Mechanism interface shared by the reductions and the verifier."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NoRandomnessDomain
from .interim import AllocationAlgorithm
from .model import MechanismInstance


@dataclass(frozen=True)
class Outcome:
    allocation: tuple  # one service per agent
    prices: tuple
    trace: tuple = ()  # per agent: (reported type, algorithm input type, served)


class Mechanism:
    """Maps a reported type profile to an Outcome.

    ``outcome_distribution`` lists every (probability, Outcome) the mechanism
    can produce on a report profile; the verifier integrates over it. A
    mechanism without one can still be measured by Monte Carlo via ``run``.
    """

    name = "mechanism"

    def __init__(self, instance: MechanismInstance):
        self.instance = instance

    def run(self, reports, rng: np.random.Generator) -> Outcome:
        dist = self.outcome_distribution(tuple(reports))
        cdf = np.cumsum([float(q) for q, _ in dist])
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return dist[min(k, len(dist) - 1)][1]

    def outcome_distribution(self, reports) -> list[tuple[object, Outcome]]:
        raise NoRandomnessDomain(f"{self.name} declares no finite randomness domain")

    def has_distribution(self) -> bool:
        return type(self).outcome_distribution is not Mechanism.outcome_distribution


class DirectMechanism(Mechanism):
    """Runs the algorithm on the reports and charges fixed per-agent prices
    to every agent that receives a non-null service."""

    def __init__(self, instance, algorithm: AllocationAlgorithm, prices=None, name="direct"):
        super().__init__(instance)
        self.algorithm = algorithm
        self.fixed = tuple(prices) if prices is not None else tuple(0 for _ in range(instance.n))
        self.name = name

    def _charge(self, alloc):
        null = self.instance.null_service
        return tuple(0 if a == null else self.fixed[i] for i, a in enumerate(alloc))

    def run(self, reports, rng):
        alloc = tuple(self.algorithm.allocate(tuple(reports), rng))
        return Outcome(alloc, self._charge(alloc), tuple((r, r, True) for r in reports))

    def outcome_distribution(self, reports):
        reports = tuple(reports)
        trace = tuple((r, r, True) for r in reports)
        return [(q, Outcome(tuple(a), self._charge(a), trace))
                for q, a in self.algorithm.distribution(reports)]

    def has_distribution(self):
        return self.algorithm.has_distribution()


def product_distribution(per_agent):
    """Joint distribution of independent per-agent draws.

    ``per_agent[i]`` is a list of (probability, value); yields
    (probability, tuple of values) over the Cartesian product.
    """
    for combo in itertools.product(*per_agent):
        prob = 1
        for q, _ in combo:
            prob = prob * q
        if prob:
            yield prob, tuple(v for _, v in combo)
