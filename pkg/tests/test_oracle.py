"""Exact counting references and the empirical TV helper.

Expected values below were frozen from an independent brute-force script
before the library was trusted.
"""

import itertools
import random

import pytest

from knapcount.instance import DomainError, KnapsackInstance, generate
from knapcount.oracle import (
    count_band,
    count_dp,
    count_enum,
    count_le,
    empirical_tv,
    solutions,
)


FIX = KnapsackInstance(5, [2, 3, 5])


def test_enum_fixture():
    # subsets of {2,3,5} with sum <= 5: {}, {2}, {3}, {5}, {2,3}
    assert count_enum(FIX) == 5


def test_dp_matches_fixture():
    assert count_dp(FIX) == 5


def test_band_fixture():
    inst = KnapsackInstance(10, [2, 3, 5])
    assert count_band(inst, 5, 10) == 3      # {2,3,5} sums 7, 8, 10
    assert count_band(inst, 0, 10) == 7      # everything but the empty set


def test_band_requires_ordered_window():
    inst = KnapsackInstance(10, [2, 3, 5])
    with pytest.raises(DomainError):
        count_band(inst, 5, 5)
    with pytest.raises(DomainError):
        count_band(inst, 7, 3)


def test_empty_instance():
    inst = KnapsackInstance(4, [])
    assert count_enum(inst) == 1
    assert count_dp(inst) == 1


def test_count_le_raw():
    assert count_le((2, 3, 5), 5) == 5
    assert count_le((), 0) == 1
    assert count_le((1, 1, 1), 0) == 1


def test_dp_equals_enum_random():
    rnd = random.Random(0)
    for _ in range(50):
        n = rnd.randint(1, 12)
        cap = rnd.randint(1, 200)
        ws = [rnd.randint(1, cap) for _ in range(n)]
        inst = KnapsackInstance(cap, ws)
        assert count_dp(inst) == count_enum(inst)


def test_enum_equals_brute_force():
    rnd = random.Random(1)
    for _ in range(20):
        n = rnd.randint(1, 10)
        cap = rnd.randint(1, 60)
        ws = [rnd.randint(1, cap) for _ in range(n)]
        brute = sum(1 for r in range(n + 1)
                    for comb in itertools.combinations(ws, r)
                    if sum(comb) <= cap)
        assert count_enum(KnapsackInstance(cap, ws)) == brute


def test_solutions_listing():
    inst = KnapsackInstance(5, [2, 3, 5])
    sols = solutions(inst)
    assert len(sols) == count_enum(inst)
    assert all(s == tuple(sorted(s)) for s in sols)
    assert len(set(sols)) == len(sols)
    ws = inst.weights
    assert all(sum(ws[i] for i in s) <= inst.capacity for s in sols)


def test_band_consistent_with_generate():
    inst = generate("uniform", 10, 100, seed=5)
    total = count_enum(inst)
    lo_part = count_le(inst.weights, 50)
    assert count_band(inst, 50, inst.capacity) == total - lo_part


def test_empirical_tv_exact_match():
    target = {"a": 0.5, "b": 0.5}
    assert empirical_tv(["a", "b", "a", "b"], target) == 0.0


def test_empirical_tv_half():
    target = {"a": 0.5, "b": 0.5}
    assert empirical_tv(["a", "a", "a", "a"], target) == pytest.approx(0.5)


def test_empirical_tv_rejects_off_support():
    with pytest.raises(DomainError):
        empirical_tv(["z"], {"a": 1.0})


def test_empirical_tv_concentrates():
    rnd = random.Random(3)
    target = {0: 0.25, 1: 0.25, 2: 0.5}
    draws = rnd.choices([0, 1, 2], weights=[1, 1, 2], k=20000)
    assert empirical_tv(draws, target) < 0.02
