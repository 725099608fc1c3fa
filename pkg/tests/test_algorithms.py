import itertools
from fractions import Fraction as F

import numpy as np
import pytest

from bicforge.algorithms import (
    ConstantAlgorithm,
    OptimalAlgorithm,
    RandomSerialDictator,
    SerialDictator,
    best_partition,
    make_algorithm,
    random_table_algorithm,
    serve_probability_algorithm,
)
from bicforge.model import (
    combinatorial_auction,
    random_explicit_instance,
    random_prior,
    random_set_valuation,
    single_item_auction,
)


def two_bidders():
    return single_item_auction([[1, 3], [2]], [[F(1, 2), F(1, 2)], [1]])


def test_serial_dictator_orders():
    inst = two_bidders()
    assert SerialDictator(inst).allocate((0, 0)) == (1, 0)
    assert SerialDictator(inst, order=(1, 0)).allocate((1, 0)) == (0, 1)


def test_random_serial_dictator_distribution():
    dist = RandomSerialDictator(two_bidders()).distribution((0, 0))
    assert sorted(dist) == [(F(1, 2), (0, 1)), (F(1, 2), (1, 0))]


def test_optimal_on_single_item():
    alg = OptimalAlgorithm(two_bidders())
    assert alg.allocate((0, 0)) == (0, 1)
    assert alg.allocate((1, 0)) == (1, 0)
    assert alg.best_value((1, 0)) == 3


def test_best_partition_matches_enumeration(rng):
    for _ in range(25):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        vals = [[0] + [int(x) for x in rng.integers(0, 20, size=(1 << m) - 1)] for _ in range(n)]
        brute = max(
            sum(vals[i][a[i]] for i in range(n))
            for a in itertools.product(range(1 << m), repeat=n)
            if all(not (a[i] & a[j]) for i in range(n) for j in range(i))
        )
        value, masks = best_partition(vals, m)
        assert value == brute == sum(vals[i][masks[i]] for i in range(n))


def test_optimal_explicit_matches_enumeration(rng):
    inst = random_explicit_instance(rng, 2, 3)
    alg = OptimalAlgorithm(inst)
    for profile in inst.profiles():
        best = max(sum(inst.value(i, t, a[i]) for i, t in enumerate(profile))
                   for a in inst.joint_allocations())
        assert alg.best_value(profile) == best


def test_optimal_partition_allocation_is_feasible(rng):
    sup = [[random_set_valuation(rng, "xos", 3) for _ in range(2)] for _ in range(3)]
    inst = combinatorial_auction(sup, [random_prior(rng, 2) for _ in range(3)])
    alg = OptimalAlgorithm(inst)
    for profile in inst.profiles():
        assert inst.feasibility(alg.allocate(profile))


def test_table_algorithm_sampling(rng):
    inst = random_explicit_instance(rng, 2, 2)
    alg = random_table_algorithm(inst, rng, support=3)
    profile = (0, 1)
    dist = alg.distribution(profile)
    assert sum(q for q, _ in dist) == 1
    draws = [alg.allocate(profile, rng) for _ in range(4000)]
    for q, a in dist:
        assert abs(draws.count(a) / 4000 - float(q)) < 0.04


def test_serve_probability_algorithm():
    inst = single_item_auction([[3, 1]], [[F(1, 2), F(1, 2)]])
    alg = serve_probability_algorithm(inst, [F(3, 4), 0])
    assert alg.distribution((0,)) == [(F(3, 4), (1,)), (F(1, 4), (0,))]
    assert alg.distribution((1,)) == [(1, (0,))]


def test_constant_and_factory():
    inst = two_bidders()
    assert ConstantAlgorithm(inst).allocate((1, 0)) == (0, 0)
    with pytest.raises(ValueError):
        ConstantAlgorithm(inst, (1, 1))
    assert isinstance(make_algorithm("serial-dictator", inst), SerialDictator)
    with pytest.raises(ValueError):
        make_algorithm("vcg", inst)


def test_rsd_allocate_uses_rng():
    inst = two_bidders()
    alg = RandomSerialDictator(inst)
    rng = np.random.default_rng(0)
    seen = {alg.allocate((0, 0), rng) for _ in range(50)}
    assert seen == {(1, 0), (0, 1)}
