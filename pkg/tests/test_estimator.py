"""End-to-end estimators plus the structure helpers they sit on."""

import random
from fractions import Fraction

import pytest

from knapcount._rand import stream
from knapcount.estimator import (
    EstimatorError,
    build_class_sampler,
    build_global_sampler,
    estimate_dyer,
    estimate_subquadratic,
    find_popular_ell,
    heavy_prefix_index,
    partition_classes,
    _popular_detail,
)
from knapcount.instance import AlgoParams, KnapsackInstance, generate
from knapcount.oracle import count_enum


PARAMS = AlgoParams(epsilon=0.25, seed=0)


def ratio(est, exact):
    return est.to_fraction() / exact


# -- structure helpers --------------------------------------------------------

def test_heavy_prefix_index():
    assert heavy_prefix_index([6, 3, 3], 8) == 1
    assert heavy_prefix_index([3, 3, 3, 3], 8) == 2
    with pytest.raises(EstimatorError):
        heavy_prefix_index([1, 1], 8)


def test_popular_detail_fixtures():
    assert _popular_detail(KnapsackInstance(8, [3, 3, 3, 3])) == (4, 2, 2, 6)
    assert _popular_detail(KnapsackInstance(10, [5, 5])) == (4, 1, 1, 5)


def test_find_popular_ell_rejects_trivial():
    with pytest.raises(EstimatorError):
        find_popular_ell(KnapsackInstance(10, [2, 3]))


def test_popular_class_is_nonempty_band():
    rnd = random.Random(2)
    for _ in range(30):
        n = rnd.randint(4, 14)
        cap = rnd.randint(10, 400)
        ws = [rnd.randint(1, cap) for _ in range(n)]
        inst = KnapsackInstance(cap, ws)
        if inst.total_weight() <= cap:
            continue
        ell = find_popular_ell(inst)
        assert ell >= 2 and ell & (ell - 1) == 0
        hits = [w for w in ws if w * ell > cap and w * ell <= 2 * cap]
        assert hits


def test_partition_classes_covers_every_item():
    rnd = random.Random(5)
    for _ in range(30):
        n = rnd.randint(1, 20)
        cap = rnd.randint(2, 10 ** 6)
        ws = [rnd.randint(1, cap) for _ in range(n)]
        inst = KnapsackInstance(cap, ws)
        part = partition_classes(inst)
        seen = sorted(i for ids in part.classes.values() for i in ids)
        assert seen == list(range(n))
        for m, ids in part.classes.items():
            me = part.m_eff(m)
            for i in ids:
                w = inst.weights[i]
                if m == 2 * part.n:
                    assert w * (me // 2) <= cap
                else:
                    assert cap < w * m <= 2 * cap


def test_partition_small_class_label():
    inst = KnapsackInstance(100, [1, 1, 60])
    part = partition_classes(inst)
    assert part.classes[2 * inst.n] == [0, 1]
    assert part.m_eff(2 * inst.n) == 1 << (part.g + 1)


# -- class and global samplers ------------------------------------------------

def test_build_class_sampler_counts():
    # one class containing two items in the band (T/2, T]
    inst = KnapsackInstance(10, [6, 7])
    part = partition_classes(inst)
    ids = part.classes[2]
    smp = build_class_sampler([(i, inst.weights[i]) for i in ids], 2, 2,
                              inst.capacity, inst.n, PARAMS,
                              stream(0, "bc"))
    assert smp.universe() == set(ids)
    # grid keeps slack above T; the query capacity excludes the pair
    assert smp.table.total_stored().to_fraction() == 4
    sols = {ids for ids, _w in smp.enumerate_solutions(inst.capacity)}
    assert sols == {(), (0,), (1,)}

def test_build_global_identity_for_single_class():
    inst = KnapsackInstance(10, [6, 7])
    part = partition_classes(inst)
    items = [(i, inst.weights[i]) for i in part.classes[2]]
    smp = build_class_sampler(items, 2, 2, inst.capacity, inst.n, PARAMS,
                              stream(0, "bg"))
    top = build_global_sampler([smp], PARAMS, stream(0, "bg2"),
                               cap_t=inst.capacity)
    assert top.universe() == smp.universe()


def test_build_global_two_classes():
    inst = KnapsackInstance(12, [7, 8, 2, 3])
    part = partition_classes(inst)
    samplers = []
    for m in part.labels():
        items = [(i, inst.weights[i]) for i in part.classes[m]]
        samplers.append(build_class_sampler(
            items, part.m_eff(m), 2, inst.capacity, inst.n, PARAMS,
            stream(0, "cl", m)))
    top = build_global_sampler(samplers, PARAMS, stream(0, "top"),
                               cap_t=inst.capacity)
    assert top.universe() == {0, 1, 2, 3}
    assert top.delta_total < 0.01


# -- full estimators ----------------------------------------------------------

def test_trivial_instance_counts_exactly():
    inst = KnapsackInstance(3, [1, 1, 1])
    for est in (estimate_subquadratic, estimate_dyer):
        rep = est(inst, PARAMS)
        assert rep.estimate.to_fraction() == 8
        assert not rep.aborted
        assert rep.algorithm in ("subquad", "dyer")


def test_empty_instance():
    inst = KnapsackInstance(5, [])
    rep = estimate_subquadratic(inst, PARAMS)
    assert rep.estimate.to_fraction() == 1


def test_subquadratic_report_shape():
    inst = generate("uniform", 12, 60, seed=3)
    rep = estimate_subquadratic(inst, PARAMS)
    assert rep.n == 12
    assert rep.capacity == inst.capacity
    assert rep.ell >= 2
    assert rep.n_samples > 0
    assert set(rep.timings) >= {"scale_ms", "build_ms", "phase1_ms",
                                "phase2_ms", "total_ms"}
    assert "scale_factor" in rep.diagnostics
    assert rep.diagnostics["delta_total"] < 0.01
    flat = rep.flat_record()
    assert flat["algorithm"] == "subquad"
    assert isinstance(flat["estimate"], str)


def test_same_seed_same_report():
    inst = generate("uniform", 14, 90, seed=8)
    a = estimate_subquadratic(inst, PARAMS)
    b = estimate_subquadratic(inst, PARAMS)
    assert a.estimate.cmp(b.estimate) == 0
    assert a.n_samples == b.n_samples
    ra, rb = a.flat_record(), b.flat_record()
    for rec in (ra, rb):
        for k in list(rec):
            if k.startswith("t_"):
                del rec[k]
    assert ra == rb


def test_subquadratic_accuracy_smoke():
    rnd = random.Random(17)
    hits = 0
    trials = 12
    for t in range(trials):
        n = rnd.randint(6, 12)
        cap = rnd.randint(12, 300)
        ws = [rnd.randint(1, cap) for _ in range(n)]
        inst = KnapsackInstance(cap, ws)
        exact = count_enum(inst)
        rep = estimate_subquadratic(inst, AlgoParams(epsilon=0.25, seed=t))
        assert not rep.aborted
        if Fraction(3, 4) <= ratio(rep.estimate, exact) <= Fraction(5, 4):
            hits += 1
    assert hits >= trials - 2


def test_dyer_accuracy_smoke():
    rnd = random.Random(23)
    for t in range(8):
        n = rnd.randint(5, 11)
        cap = rnd.randint(10, 200)
        ws = [rnd.randint(1, cap) for _ in range(n)]
        inst = KnapsackInstance(cap, ws)
        exact = count_enum(inst)
        rep = estimate_dyer(inst, AlgoParams(epsilon=0.25, seed=t))
        assert not rep.aborted
        assert Fraction(2, 3) <= ratio(rep.estimate, exact) <= Fraction(3, 2)


def test_dyer_report_fields():
    inst = generate("uniform", 10, 70, seed=1)
    rep = estimate_dyer(inst, PARAMS)
    assert rep.algorithm == "dyer"
    assert "K" in rep.diagnostics
    assert set(rep.timings) >= {"build_ms", "sample_ms", "total_ms"}


def test_time_budget_abort():
    inst = generate("uniform", 40, 10 ** 9, seed=2)
    rep = estimate_subquadratic(inst, PARAMS, time_budget=1e-7)
    assert rep.aborted
    assert rep.estimate.is_zero


def test_leaf_variant_override():
    inst = generate("uniform", 12, 100, seed=6)
    exact = count_enum(inst)
    for variant in ("dp", "cc"):
        params = AlgoParams(epsilon=0.25, seed=6, leaf_variant=variant)
        rep = estimate_subquadratic(inst, params)
        assert not rep.aborted
        assert Fraction(1, 2) <= ratio(rep.estimate, exact) <= Fraction(2, 1)
