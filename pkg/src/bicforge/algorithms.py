"""Built-in allocation algorithms used by the CLI and the test suites."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from .interim import AllocationAlgorithm
from .model import MechanismInstance, Partition


def _welfare(instance, profile, alloc):
    return sum(instance.value(i, t, alloc[i]) for i, t in enumerate(profile))


class ConstantAlgorithm(AllocationAlgorithm):
    """Ignores the input and always returns the same allocation."""

    name = "constant"

    def __init__(self, instance: MechanismInstance, allocation: tuple | None = None):
        if allocation is None:
            if instance.null_service is not None and instance.feasibility(
                    tuple(instance.null_service for _ in range(instance.n))):
                allocation = tuple(instance.null_service for _ in range(instance.n))
            else:
                allocation = next(instance.joint_allocations())
        if not instance.feasibility(tuple(allocation)):
            raise ValueError("constant allocation is infeasible")
        self.allocation = tuple(allocation)

    def allocate(self, profile, rng=None):
        return self.allocation


class SerialDictator(AllocationAlgorithm):
    """Agents pick in ``order``; each takes its favourite service that still
    admits a feasible completion. Ties go to the earliest-listed service."""

    name = "serial-dictator"

    def __init__(self, instance: MechanismInstance, order=None):
        self.instance = instance
        self.order = tuple(range(instance.n)) if order is None else tuple(order)
        self._partition = isinstance(instance.feasibility, Partition)
        self._feasible = None if self._partition else list(instance.joint_allocations())

    def allocate(self, profile, rng=None):
        inst = self.instance
        if self._partition:
            taken, alloc = 0, [0] * inst.n
            for i in self.order:
                v = inst.supports[i][profile[i]]
                best = max((m for m in inst.services[i] if not m & taken),
                           key=v, default=0)
                # max() keeps the first maximizer, i.e. the lowest mask
                alloc[i] = best
                taken |= best
            return tuple(alloc)
        candidates = self._feasible
        for i in self.order:
            v = inst.supports[i][profile[i]]
            best_service, best_value = None, None
            for service in inst.services[i]:
                if not any(a[i] == service for a in candidates):
                    continue
                if best_value is None or v(service) > best_value:
                    best_service, best_value = service, v(service)
            candidates = [a for a in candidates if a[i] == best_service]
        return candidates[0]


class RandomSerialDictator(AllocationAlgorithm):
    """Serial dictatorship under a uniformly random agent order."""

    name = "random-serial-dictator"
    deterministic = False

    def __init__(self, instance: MechanismInstance):
        self.instance = instance
        self.orders = list(itertools.permutations(range(instance.n)))
        self._dictators = [SerialDictator(instance, o) for o in self.orders]

    def allocate(self, profile, rng=None):
        k = int(rng.integers(len(self.orders)))
        return self._dictators[k].allocate(profile)

    def distribution(self, profile):
        q = Fraction(1, len(self.orders)) if self.instance.exact else 1 / len(self.orders)
        return _merge([(q, d.allocate(profile)) for d in self._dictators])


class OptimalAlgorithm(AllocationAlgorithm):
    """Welfare-maximizing allocation by exhaustive search.

    Partition instances use a subset DP over items (O(n 3^m)); other
    feasibility kinds enumerate the feasible joint allocations.
    """

    name = "optimal-bruteforce"

    def __init__(self, instance: MechanismInstance):
        self.instance = instance
        self._partition = isinstance(instance.feasibility, Partition)
        self._feasible = None if self._partition else list(instance.joint_allocations())
        self._cache: dict = {}

    def allocate(self, profile, rng=None):
        profile = tuple(profile)
        hit = self._cache.get(profile)
        if hit is None:
            hit = self._cache[profile] = self._solve(profile)[1]
        return hit

    def best_value(self, profile):
        return self._solve(tuple(profile))[0]

    def _solve(self, profile):
        inst = self.instance
        if self._partition:
            return best_partition(
                [[inst.supports[i][profile[i]](mask) for mask in range(1 << inst.items)]
                 for i in range(inst.n)],
                inst.items,
            )
        best, best_alloc = None, None
        for alloc in self._feasible:
            val = _welfare(inst, profile, alloc)
            if best is None or val > best:
                best, best_alloc = val, alloc
        return best, best_alloc


def best_partition(values, m: int):
    """Max of sum_i values[i][S_i] over disjoint masks; returns (value, masks).

    ``values[i]`` lists agent i's value for every mask in 0..2^m-1.
    """
    full = (1 << m) - 1
    n = len(values)
    # best[i][U]: best value of agents i.. using only items in U
    best = [[0] * (full + 1) for _ in range(n + 1)]
    choice = [[0] * (full + 1) for _ in range(n)]
    for i in range(n - 1, -1, -1):
        vi, nxt, row, ch = values[i], best[i + 1], best[i], choice[i]
        for used in range(full + 1):
            top, arg = nxt[used], 0
            sub = used
            while sub:
                cand = vi[sub] + nxt[used ^ sub]
                if cand > top:
                    top, arg = cand, sub
                sub = (sub - 1) & used
            row[used], ch[used] = top, arg
    masks, used = [], full
    for i in range(n):
        masks.append(choice[i][used])
        used ^= choice[i][used]
    return best[0][full], tuple(masks)


class TableAlgorithm(AllocationAlgorithm):
    """Arbitrary randomized algorithm given as profile -> [(prob, allocation)]."""

    name = "table"

    def __init__(self, table: dict, name: str = "table"):
        self.table = {tuple(k): list(v) for k, v in table.items()}
        self.deterministic = all(len(v) == 1 for v in self.table.values())
        self.name = name
        self._cdf = {k: np.cumsum([float(q) for q, _ in v]) for k, v in self.table.items()}

    def allocate(self, profile, rng=None):
        dist = self.table[tuple(profile)]
        if len(dist) == 1:
            return dist[0][1]
        cdf = self._cdf[tuple(profile)]
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return dist[min(k, len(dist) - 1)][1]

    def distribution(self, profile):
        return self.table[tuple(profile)]


def random_table_algorithm(instance: MechanismInstance, rng: np.random.Generator,
                           support: int = 2, den: int = 4) -> TableAlgorithm:
    """Random finite-randomness algorithm: each profile maps to a random
    distribution over up to ``support`` feasible allocations."""
    feasible = list(instance.joint_allocations())
    table = {}
    for profile in instance.profiles():
        k = int(rng.integers(1, support + 1))
        picks = [feasible[int(j)] for j in rng.integers(len(feasible), size=k)]
        weights = [int(x) for x in rng.integers(1, den + 1, size=k)]
        total = sum(weights)
        table[profile] = _merge([(Fraction(wt, total), a) for wt, a in zip(weights, picks)])
    return TableAlgorithm(table, name="random-table")


def serve_probability_algorithm(instance: MechanismInstance, serve) -> TableAlgorithm:
    """Single-agent algorithm serving service 1 with probability serve[t]."""
    if instance.n != 1:
        raise ValueError("serve-probability algorithm is single-agent")
    table = {}
    for t in range(instance.ell):
        q = serve[t]
        dist = [(q, (1,)), (1 - q, (0,))]
        table[(t,)] = [(p, a) for p, a in dist if p > 0] or [(1, (0,))]
    return TableAlgorithm(table, name="serve-probability")


def _merge(dist):
    merged: dict = {}
    for q, alloc in dist:
        merged[alloc] = merged.get(alloc, 0) + q
    return [(q, a) for a, q in merged.items()]


BUILTIN_ALGORITHMS = {
    "constant": ConstantAlgorithm,
    "serial-dictator": SerialDictator,
    "random-serial-dictator": RandomSerialDictator,
    "optimal-bruteforce": OptimalAlgorithm,
}


def make_algorithm(name: str, instance: MechanismInstance) -> AllocationAlgorithm:
    try:
        return BUILTIN_ALGORITHMS[name](instance)
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from "
                         f"{sorted(BUILTIN_ALGORITHMS) + ['ca-lp-round']}") from None


def n_orders(n: int) -> int:
    return math.factorial(n)
