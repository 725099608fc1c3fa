"""Mechanism-design instances: services, feasibility, finite-support priors.

Types are indexed from 0 throughout. A joint allocation is a tuple holding
one service per agent. Combinatorial-auction services are item bitmasks,
with the empty mask acting as the null service.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    EmptySupport,
    InfeasibleInstance,
    NotDownwardClosed,
    NotXOS,
    ProbabilitySumMismatch,
)

PROB_TOL = 1e-12
ENUMERATION_LIMIT = 10**7


def is_exact_number(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def to_number(x, exact: bool):
    """Coerce ``x`` (number or ``"p/q"`` string) to Fraction or float."""
    if isinstance(x, str):
        x = Fraction(x)
    if exact:
        return Fraction(x)
    return float(x)


# --------------------------------------------------------------------------
# valuations


@dataclass(frozen=True)
class TableValuation:
    """Valuation over an explicit service set; unknown services are worth 0."""

    values: Mapping[Hashable, object]

    def __call__(self, service):
        return self.values.get(service, 0)

    def max_value(self):
        return max(self.values.values(), default=0)

    def scaled(self, factor) -> "TableValuation":
        return TableValuation({k: v * factor for k, v in self.values.items()})


@dataclass(frozen=True)
class SetValuation:
    """Valuation over item bitmasks.

    ``kind`` is one of additive, unit-demand, budget-additive or xos. The
    first three use ``weights``; xos uses ``clauses`` (one additive weight
    vector per clause) and takes the best clause on the set.
    """

    kind: str
    weights: tuple = ()
    clauses: tuple = ()
    budget: object = None

    def __post_init__(self):
        if self.kind not in ("additive", "unit-demand", "budget-additive", "xos"):
            raise ValueError(f"unknown valuation kind {self.kind!r}")
        if self.kind == "xos" and not self.clauses:
            raise ValueError("xos valuation needs at least one clause")
        if self.kind == "budget-additive" and self.budget is None:
            raise ValueError("budget-additive valuation needs a budget")

    @property
    def m(self) -> int:
        return len(self.clauses[0]) if self.kind == "xos" else len(self.weights)

    def __call__(self, mask: int):
        if mask == 0:
            return 0
        if self.kind == "xos":
            return max(_masked_sum(c, mask) for c in self.clauses)
        if self.kind == "unit-demand":
            return max(w for j, w in enumerate(self.weights) if mask >> j & 1)
        total = _masked_sum(self.weights, mask)
        if self.kind == "budget-additive":
            return min(self.budget, total)
        return total

    def max_value(self):
        return self((1 << self.m) - 1)

    def scaled(self, factor) -> "SetValuation":
        return SetValuation(
            self.kind,
            tuple(w * factor for w in self.weights),
            tuple(tuple(w * factor for w in c) for c in self.clauses),
            None if self.budget is None else self.budget * factor,
        )


def _masked_sum(vec, mask: int):
    total = 0
    for j, w in enumerate(vec):
        if mask >> j & 1:
            total += w
    return total


def mask_items(mask: int) -> list[int]:
    return [j for j in range(mask.bit_length()) if mask >> j & 1]


def xos_supporting(valuation: SetValuation, mask: int) -> tuple:
    """Additive supporting vector of ``valuation`` at the item set ``mask``.

    Returns the lowest-index maximizing clause restricted to ``mask`` (zeros
    outside). Additive and unit-demand valuations are converted on the fly.
    """
    if valuation.kind == "additive":
        clause = tuple(valuation.weights)
    elif valuation.kind == "unit-demand":
        items = mask_items(mask)
        if not items:
            return tuple(0 for _ in valuation.weights)
        best = max(items, key=lambda j: (valuation.weights[j], -j))
        clause = tuple(w if j == best else 0 for j, w in enumerate(valuation.weights))
    elif valuation.kind == "xos":
        sums = [_masked_sum(c, mask) for c in valuation.clauses]
        clause = valuation.clauses[sums.index(max(sums))]
    else:
        raise NotXOS(f"{valuation.kind} valuations have no supporting clauses")
    return tuple(w if mask >> j & 1 else 0 for j, w in enumerate(clause))


# --------------------------------------------------------------------------
# feasibility


class Feasibility:
    name = "abstract"
    downward_closed = False

    def __call__(self, allocation: tuple) -> bool:
        raise NotImplementedError


class Unrestricted(Feasibility):
    name = "unrestricted"
    downward_closed = True

    def __call__(self, allocation):
        return True


class Partition(Feasibility):
    """Bitmask services must be pairwise disjoint."""

    name = "partition"
    downward_closed = True

    def __call__(self, allocation):
        seen = 0
        for mask in allocation:
            if seen & mask:
                return False
            seen |= mask
        return True


class Explicit(Feasibility):
    name = "explicit"

    def __init__(self, allocations: Iterable[Sequence]):
        self.allocations = frozenset(tuple(a) for a in allocations)
        self.downward_closed = False

    def __call__(self, allocation):
        return tuple(allocation) in self.allocations


class Predicate(Feasibility):
    name = "predicate"

    def __init__(self, fn: Callable[[tuple], bool], downward_closed: bool = False):
        self.fn = fn
        self.downward_closed = downward_closed

    def __call__(self, allocation):
        return bool(self.fn(tuple(allocation)))


# --------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class MechanismInstance:
    services: tuple  # per agent: tuple of service labels
    feasibility: Feasibility
    supports: tuple  # per agent: tuple of ell valuations
    priors: tuple  # per agent: tuple of ell probabilities
    null_service: Hashable = None
    exact: bool = False
    items: int | None = None
    name: str = ""
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return len(self.services)

    @property
    def ell(self) -> int:
        return len(self.priors[0])

    def value(self, agent: int, type_index: int, service):
        return self.supports[agent][type_index](service)

    def profile_probability(self, profile, skip: int | None = None):
        prob = 1
        for j, t in enumerate(profile):
            if j != skip:
                prob *= self.priors[j][t]
        return prob

    def profiles(self) -> Iterator[tuple]:
        return itertools.product(range(self.ell), repeat=self.n)

    def joint_allocations(self) -> Iterator[tuple]:
        for alloc in itertools.product(*self.services):
            if self.feasibility(alloc):
                yield alloc

    def with_supports(self, supports) -> "MechanismInstance":
        return MechanismInstance(
            self.services, self.feasibility, tuple(tuple(s) for s in supports),
            self.priors, self.null_service, self.exact, self.items, self.name,
            self.metadata,
        )


@dataclass(frozen=True)
class ValuationProfile:
    types: tuple

    def __post_init__(self):
        if any(t < 0 for t in self.types):
            raise ValueError("type indices must be non-negative")


def build_instance(
    services,
    feasibility,
    valuation_supports,
    priors,
    *,
    null_service=None,
    exact: bool | None = None,
    items: int | None = None,
    name: str = "",
    enumeration_limit: int = ENUMERATION_LIMIT,
) -> MechanismInstance:
    """Validate inputs and return an immutable instance.

    Ragged supports are padded with zero-probability copies of the last
    support point so every agent has the same number of types.
    """
    services = tuple(tuple(s) for s in services)
    n = len(services)
    if n == 0:
        raise EmptySupport("instance has no agents")
    if len(valuation_supports) != n or len(priors) != n:
        raise ValueError("services, supports and priors disagree on agent count")
    if exact is None:
        exact = all(is_exact_number(p) or isinstance(p, str) for f in priors for p in f)

    supports, probs = [], []
    for i in range(n):
        sup, f = list(valuation_supports[i]), [to_number(p, exact) for p in priors[i]]
        if not sup:
            raise EmptySupport(f"agent {i} has an empty support")
        if len(sup) != len(f):
            raise ValueError(f"agent {i}: {len(sup)} support points but {len(f)} probabilities")
        if any(p < 0 for p in f):
            raise ProbabilitySumMismatch(f"agent {i} has a negative probability")
        total = sum(f)
        if (total != 1) if exact else abs(total - 1) > PROB_TOL:
            raise ProbabilitySumMismatch(f"agent {i} prior sums to {total}")
        supports.append(sup)
        probs.append(f)

    ell = max(len(f) for f in probs)
    zero = Fraction(0) if exact else 0.0
    for i in range(n):
        while len(probs[i]) < ell:
            supports[i].append(supports[i][-1])
            probs[i].append(zero)

    if null_service is not None:
        for i in range(n):
            if null_service not in services[i]:
                raise ValueError(f"agent {i} lacks the null service {null_service!r}")
            for v in supports[i]:
                if v(null_service) != 0:
                    raise ValueError("null service must be worth 0 to every type")

    instance = MechanismInstance(
        services, feasibility, tuple(tuple(s) for s in supports),
        tuple(tuple(f) for f in probs), null_service, exact, items, name,
    )
    if not _has_feasible(instance, enumeration_limit):
        raise InfeasibleInstance("no joint allocation is feasible")
    return instance


def _has_feasible(instance: MechanismInstance, limit: int) -> bool:
    if instance.null_service is not None and instance.feasibility.downward_closed:
        return instance.feasibility(tuple(instance.null_service for _ in range(instance.n)))
    if math.prod(len(s) for s in instance.services) > limit:
        raise InfeasibleInstance("feasibility could not be established within the enumeration limit")
    return next(instance.joint_allocations(), None) is not None


def is_downward_closed(instance: MechanismInstance) -> bool:
    """Feasibility survives replacing any agent's service by the null service."""
    phi = instance.null_service
    if phi is None:
        return False
    if instance.feasibility.downward_closed:
        return True
    for alloc in instance.joint_allocations():
        for i in range(instance.n):
            if not instance.feasibility(alloc[:i] + (phi,) + alloc[i + 1:]):
                return False
    return True


def require_downward_closed(instance: MechanismInstance) -> None:
    if not is_downward_closed(instance):
        raise NotDownwardClosed("instance lacks a null service closed under feasibility")


def v_max(instance: MechanismInstance):
    best = 0
    for i, sup in enumerate(instance.supports):
        for v in sup:
            for s in instance.services[i]:
                best = max(best, v(s))
    return best


def granularity(instance: MechanismInstance):
    return min(p for f in instance.priors for p in f if p > 0)


def sample_profile(instance: MechanismInstance, rng: np.random.Generator) -> ValuationProfile:
    types = tuple(
        int(rng.choice(instance.ell, p=np.asarray(f, dtype=float))) for f in instance.priors
    )
    return ValuationProfile(types)


# --------------------------------------------------------------------------
# generators


def combinatorial_auction(supports, priors, *, m: int | None = None, name: str = "") -> MechanismInstance:
    """n agents with SetValuation supports over m items, partition feasibility."""
    if m is None:
        m = supports[0][0].m
    services = [tuple(range(1 << m)) for _ in supports]
    return build_instance(services, Partition(), supports, priors, null_service=0, items=m, name=name)


def single_item_auction(values, priors, name: str = "") -> MechanismInstance:
    """Per-agent scalar values for one item (service 1), null service 0."""
    supports = [[SetValuation("additive", (v,)) for v in vals] for vals in values]
    return combinatorial_auction(supports, priors, m=1, name=name)


def lower_bound_instance(levels: int) -> MechanismInstance:
    """One agent, one item: value 2^k with probability 2^-k for k = 1..K, else 0.

    The zero-value type carries the residual mass 2^-K, which is also the
    granularity of the prior.
    """
    if levels < 1:
        raise ValueError("need at least one level")
    values = [Fraction(2) ** k for k in range(1, levels + 1)] + [Fraction(0)]
    probs = [Fraction(1, 2**k) for k in range(1, levels + 1)] + [Fraction(1, 2**levels)]
    return single_item_auction([values], [probs], name=f"lower-bound-{levels}")


def random_rational(rng: np.random.Generator, hi: int = 10, den: int = 4) -> Fraction:
    return Fraction(int(rng.integers(0, hi * den + 1)), den)


def random_prior(rng: np.random.Generator, ell: int, exact: bool = True, allow_zero: bool = False):
    lo = 0 if allow_zero else 1
    weights = [int(w) for w in rng.integers(lo, 6, size=ell)]
    if sum(weights) == 0:
        weights[0] = 1
    total = sum(weights)
    probs = [Fraction(w, total) for w in weights]
    return probs if exact else [float(p) for p in probs]


def random_set_valuation(rng: np.random.Generator, kind: str, m: int, *, clauses: int = 2,
                         hi: int = 10, exact: bool = True) -> SetValuation:
    def vec():
        v = [Fraction(int(x)) for x in rng.integers(0, hi + 1, size=m)]
        return tuple(v if exact else map(float, v))

    if kind == "xos":
        return SetValuation("xos", clauses=tuple(vec() for _ in range(clauses)))
    weights = vec()
    if kind == "budget-additive":
        budget = Fraction(int(rng.integers(1, hi * max(1, m // 2) + 1)))
        return SetValuation(kind, weights, budget=budget if exact else float(budget))
    return SetValuation(kind, weights)


def random_explicit_instance(rng: np.random.Generator, n: int, ell: int, *,
                             services: int = 3, density: float = 0.6,
                             with_null: bool = True) -> MechanismInstance:
    """Random exact instance with explicit feasibility over labelled services.

    Service 0 is the null service when ``with_null`` is set; the feasible set
    is then closed downward so the instance suits the revenue reductions.
    """
    labels = [tuple(range(services)) for _ in range(n)]
    allocs = [a for a in itertools.product(*labels) if rng.random() < density]
    if with_null:
        closed = set()
        for a in allocs:
            for keep in itertools.product((False, True), repeat=n):
                closed.add(tuple(x if k else 0 for x, k in zip(a, keep)))
        closed.add(tuple(0 for _ in range(n)))
        allocs = sorted(closed)
    elif not allocs:
        allocs = [tuple(int(rng.integers(0, services)) for _ in range(n))]

    supports = []
    for i in range(n):
        sup = []
        for _ in range(ell):
            vals = {s: random_rational(rng) for s in labels[i]}
            if with_null:
                vals[0] = Fraction(0)
            sup.append(TableValuation(vals))
        supports.append(sup)
    priors = [random_prior(rng, ell) for _ in range(n)]
    feas = Explicit(allocs)
    feas.downward_closed = with_null
    return build_instance(labels, feas, supports, priors,
                          null_service=0 if with_null else None, exact=True)
