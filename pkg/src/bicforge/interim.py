"""Interim value tables w_i[s][t] and the per-agent induced assignment problems.

``w_i[s][t]`` is the expected value, to agent i of true type s, of the
service the algorithm hands out when agent i's input type is t and the
other agents' types are drawn from their priors.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentProblem
from .errors import EnumerationTooLarge, InvalidEpsilon, NoRandomnessDomain
from .model import ENUMERATION_LIMIT, MechanismInstance


class AllocationAlgorithm:
    """Maps a type profile (tuple of type indices) to a feasible joint allocation.

    Randomized subclasses set ``deterministic = False`` and draw from the
    generator passed to ``allocate``. Overriding ``distribution`` with an
    exact finite list of (probability, allocation) pairs makes the
    algorithm usable by the exact integrators.
    """

    name = "algorithm"
    deterministic = True

    def allocate(self, profile: tuple, rng: np.random.Generator | None = None) -> tuple:
        raise NotImplementedError

    def distribution(self, profile: tuple) -> list[tuple[object, tuple]]:
        if self.deterministic:
            return [(1, self.allocate(profile, None))]
        raise NoRandomnessDomain(f"{self.name} declares no finite randomness domain")

    def has_distribution(self) -> bool:
        if self.deterministic:
            return True
        return type(self).distribution is not AllocationAlgorithm.distribution


@dataclass(frozen=True)
class InterimTable:
    values: tuple  # per agent: ell x ell, values[i][s][t]
    mode: str = "exact"
    epsilon: object = None
    samples: tuple | None = None  # per agent: samples drawn per reported type

    def __post_init__(self):
        if self.mode not in ("exact", "relative", "absolute"):
            raise ValueError(f"unknown interim mode {self.mode!r}")
        object.__setattr__(
            self, "values", tuple(tuple(tuple(r) for r in w) for w in self.values)
        )

    def agent(self, i: int) -> tuple:
        return self.values[i]

    def perturbed(self, deltas, mode: str, epsilon) -> "InterimTable":
        """Table with ``deltas[i][s][t]`` added entrywise, clamped at 0."""
        vals = [
            [[max(0, w[s][t] + deltas[i][s][t]) for t in range(len(w))] for s in range(len(w))]
            for i, w in enumerate(self.values)
        ]
        return InterimTable(vals, mode, epsilon)


def _check_limit(instance: MechanismInstance, limit: int) -> None:
    if instance.ell ** instance.n > limit:
        raise EnumerationTooLarge(
            f"{instance.ell}^{instance.n} type profiles exceed the limit of {limit}"
        )


def profile_distributions(instance: MechanismInstance, algorithm: AllocationAlgorithm,
                          limit: int = ENUMERATION_LIMIT):
    """Yield (profile, outcome distribution) for every type profile.

    Raises EnumerationTooLarge once the running count of evaluated
    outcomes passes ``limit``.
    """
    _check_limit(instance, limit)
    if not algorithm.has_distribution():
        raise NoRandomnessDomain(f"{algorithm.name} declares no finite randomness domain")
    evaluated = 0
    for profile in instance.profiles():
        dist = algorithm.distribution(profile)
        evaluated += len(dist)
        if evaluated > limit:
            raise EnumerationTooLarge(f"more than {limit} algorithm outcomes to enumerate")
        yield profile, dist


def exact_interim(instance: MechanismInstance, algorithm: AllocationAlgorithm,
                  limit: int = ENUMERATION_LIMIT) -> InterimTable:
    n, ell = instance.n, instance.ell
    zero = instance.priors[0][0] * 0
    w = [[[zero] * ell for _ in range(ell)] for _ in range(n)]
    for profile, dist in profile_distributions(instance, algorithm, limit):
        for i in range(n):
            weight = instance.profile_probability(profile, skip=i)
            if weight == 0:
                continue
            t = profile[i]
            for s in range(ell):
                v = instance.supports[i][s]
                w[i][s][t] += weight * sum(q * v(alloc[i]) for q, alloc in dist)
    return InterimTable(w, "exact")


def expected_welfare(instance: MechanismInstance, algorithm: AllocationAlgorithm,
                     limit: int = ENUMERATION_LIMIT):
    """SW of the algorithm under truthful inputs, by exact enumeration."""
    total = instance.priors[0][0] * 0
    for profile, dist in profile_distributions(instance, algorithm, limit):
        weight = instance.profile_probability(profile)
        if weight == 0:
            continue
        for q, alloc in dist:
            total += weight * q * sum(instance.value(i, t, alloc[i]) for i, t in enumerate(profile))
    return total


def identity_welfare(table: InterimTable, instance: MechanismInstance):
    return sum(
        instance.priors[i][s] * table.values[i][s][s]
        for i in range(instance.n) for s in range(instance.ell)
    )


# --------------------------------------------------------------------------
# sampling


def _check_epsilon(epsilon) -> None:
    if not 0 < epsilon < 1:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")


def sample_count_relative(n: int, ell: int, epsilon: float, c: float) -> int:
    _check_epsilon(epsilon)
    return math.ceil(4 * c * c * math.log(n * ell * ell / epsilon) / epsilon**2)


def sample_count_absolute(n: int, ell: int, epsilon: float) -> int:
    _check_epsilon(epsilon)
    return math.ceil(4 * math.log(n * ell * ell / epsilon) / epsilon**2)


def _root_entropy(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2**63))
    if isinstance(rng, np.random.SeedSequence):
        return int(rng.generate_state(2, np.uint64)[0])
    return int(rng)


def _estimate_row(instance, algorithm, i, t, n_samples, entropy):
    """Sample means of v_i^s(S_i), all s, with agent i's input fixed to t."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(i, t)))
    ell = instance.ell
    columns = []
    for j in range(instance.n):
        if j == i:
            columns.append(np.full(n_samples, t))
        else:
            columns.append(rng.choice(ell, size=n_samples, p=np.asarray(instance.priors[j], float)))
    support = instance.supports[i]
    cache: dict = {}
    totals = [0.0] * ell
    for k in range(n_samples):
        profile = tuple(int(col[k]) for col in columns)
        service = algorithm.allocate(profile, rng)[i]
        vals = cache.get(service)
        if vals is None:
            vals = cache[service] = [float(support[s](service)) for s in range(ell)]
        for s in range(ell):
            totals[s] += vals[s]
    return [x / n_samples for x in totals]


def estimate_interim(instance: MechanismInstance, algorithm: AllocationAlgorithm,
                     n_samples: int, rng, *, mode: str, epsilon, workers: int = 1) -> InterimTable:
    """Monte Carlo table with ``n_samples`` draws per (agent, input type).

    The same draws serve every true type s of that row. Each (agent, input
    type) pair gets its own child seed, so the table depends only on the
    root seed and not on ``workers``.
    """
    entropy = _root_entropy(rng)
    n, ell = instance.n, instance.ell
    jobs = [(i, t) for i in range(n) for t in range(ell)]

    def run(job):
        return _estimate_row(instance, algorithm, job[0], job[1], n_samples, entropy)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]

    w = [[[0.0] * ell for _ in range(ell)] for _ in range(n)]
    for (i, t), means in zip(jobs, rows):
        for s in range(ell):
            w[i][s][t] = means[s]
    samples = tuple(tuple(n_samples for _ in range(ell)) for _ in range(n))
    return InterimTable(w, mode, epsilon, samples)


def estimate_interim_relative(instance, algorithm, epsilon, c, rng, workers: int = 1) -> InterimTable:
    n_samples = sample_count_relative(instance.n, instance.ell, epsilon, c)
    return estimate_interim(instance, algorithm, n_samples, rng, mode="relative",
                            epsilon=epsilon, workers=workers)


def estimate_interim_absolute(instance, algorithm, epsilon, rng, workers: int = 1) -> InterimTable:
    n_samples = sample_count_absolute(instance.n, instance.ell, epsilon)
    return estimate_interim(instance, algorithm, n_samples, rng, mode="absolute",
                            epsilon=epsilon, workers=workers)


def induced_problem(table: InterimTable, instance: MechanismInstance, agent: int) -> AssignmentProblem:
    f = instance.priors[agent]
    return AssignmentProblem(f, f, table.values[agent])


def std_mean_ratios(instance: MechanismInstance, algorithm: AllocationAlgorithm,
                    limit: int = ENUMERATION_LIMIT) -> list:
    """Exact std/mean of v_i^s(S_i) for every (i, s, t); None where the mean is 0."""
    n, ell = instance.n, instance.ell
    first = [[[0.0] * ell for _ in range(ell)] for _ in range(n)]
    second = [[[0.0] * ell for _ in range(ell)] for _ in range(n)]
    for profile, dist in profile_distributions(instance, algorithm, limit):
        for i in range(n):
            weight = float(instance.profile_probability(profile, skip=i))
            if weight == 0:
                continue
            t = profile[i]
            for s in range(ell):
                v = instance.supports[i][s]
                for q, alloc in dist:
                    x = float(v(alloc[i]))
                    first[i][s][t] += weight * float(q) * x
                    second[i][s][t] += weight * float(q) * x * x
    out = []
    for i in range(n):
        rows = []
        for s in range(ell):
            row = []
            for t in range(ell):
                mean = first[i][s][t]
                if mean <= 1e-15:
                    row.append(None)
                else:
                    var = max(0.0, second[i][s][t] - mean * mean)
                    row.append(math.sqrt(var) / mean)
            rows.append(row)
        out.append(rows)
    return out
