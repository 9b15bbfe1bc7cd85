"""Instance parsing, generation, scaling, and parameter validation."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knapcount.instance import (
    AlgoParams,
    InstanceError,
    KnapsackInstance,
    ParseError,
    WeightOverCapacityError,
    generate,
    instance_digest,
    parse_instance,
    scale_instance,
    serialize_instance,
)
from knapcount.oracle import count_enum


def test_parse_basic():
    inst = parse_instance("3 5\n2 3 5\n")
    assert inst.n == 3
    assert inst.capacity == 5
    assert inst.weights == (2, 3, 5)


def test_parse_sorts_weights():
    inst = parse_instance("2 10\n7 3\n")
    assert inst.weights == (3, 7)


def test_parse_rejects_weight_over_capacity():
    with pytest.raises(WeightOverCapacityError):
        parse_instance("1 5\n9\n")


def test_parse_rejects_malformed():
    for bad in ["", "x y\n1\n", "2 5\n1\n", "2 5\n1 2 3\n"]:
        with pytest.raises(ParseError):
            parse_instance(bad)
    with pytest.raises(InstanceError):
        parse_instance("1 0\n0\n")   # zero capacity / zero weight


def test_serialize_round_trip():
    inst = KnapsackInstance(17, [4, 4, 9, 16])
    again = parse_instance(serialize_instance(inst))
    assert again == inst
    assert instance_digest(again) == instance_digest(inst)


def test_digest_distinguishes():
    a = KnapsackInstance(10, [1, 2, 3])
    b = KnapsackInstance(10, [1, 2, 4])
    assert instance_digest(a) != instance_digest(b)


@pytest.mark.parametrize("kind", ["uniform", "bounded_ratio", "tiny_adversarial"])
def test_generate_deterministic(kind):
    a = generate(kind, 40, 10 ** 6, seed=3, ell=8)
    b = generate(kind, 40, 10 ** 6, seed=3, ell=8)
    assert a == b
    c = generate(kind, 40, 10 ** 6, seed=4, ell=8)
    assert kind == "tiny_adversarial" or a != c


def test_generate_uniform_bounds():
    inst = generate("uniform", 200, 1000, seed=0)
    assert inst.n == 200
    assert all(1 <= w <= 1000 for w in inst.weights)


def test_generate_bounded_ratio_window():
    T, ell = 9973, 7
    inst = generate("bounded_ratio", 64, T, seed=1, ell=ell)
    lo, hi = T // ell + 1, (2 * T) // ell
    assert all(lo <= w <= hi for w in inst.weights)
    with pytest.raises(InstanceError):
        generate("bounded_ratio", 8, T, seed=0, ell=1)


def test_generate_tiny_adversarial_shape():
    n, T = 16, 10 ** 9
    inst = generate("tiny_adversarial", n, T, seed=0)
    ws = sorted(set(inst.weights))
    assert len(ws) == 2
    tiny, big = ws
    assert tiny * n ** 2 < big
    with pytest.raises(InstanceError):
        generate("tiny_adversarial", 1, T, seed=0)


def test_generate_custom_classes():
    inst = generate("custom_classes", 5, 100, seed=2,
                    classes=[(2, 1, 1), (3, 40, 60)])
    assert inst.n == 5
    assert sum(1 for w in inst.weights if w == 1) == 2
    assert sum(1 for w in inst.weights if 40 <= w <= 60) == 3
    with pytest.raises(InstanceError):
        generate("custom_classes", 5, 100, seed=2, classes=[(1, 1, 1)])


def test_generate_large_n():
    inst = generate("uniform", 10 ** 4, 10 ** 12, seed=9)
    assert inst.n == 10 ** 4


def test_scale_preserves_count():
    params = AlgoParams(epsilon=0.25, seed=0)
    for seed in range(6):
        inst = generate("uniform", 12, 10 ** 7, seed=seed)
        scaled, factor = scale_instance(inst, params)
        assert factor >= 1
        assert factor & (factor - 1) == 0
        assert count_enum(scaled) == count_enum(inst)


def test_scale_noop_when_already_coarse():
    # weights and capacity already clear the granularity bound: untouched
    params = AlgoParams(epsilon=0.25, seed=0)
    bound = params.scale_bound(3)
    inst = KnapsackInstance(10 * bound, [2 * bound, 3 * bound, 5 * bound])
    scaled, factor = scale_instance(inst, params)
    assert factor == 1
    assert scaled == inst


def test_scale_clears_granularity_bound():
    params = AlgoParams(epsilon=0.25, seed=0)
    inst = KnapsackInstance(50, [3, 11, 20])
    scaled, factor = scale_instance(inst, params)
    bound = params.scale_bound(inst.n)
    assert min(scaled.weights) >= bound and scaled.capacity >= bound
    assert scaled.capacity == inst.capacity * factor
    assert scaled.weights == tuple(w * factor for w in inst.weights)


@given(st.integers(2, 10), st.integers(20, 500), st.integers(0, 50))
@settings(max_examples=40, deadline=None)
def test_parse_serialize_identity(n, cap, seed):
    inst = generate("uniform", n, cap, seed=seed)
    assert parse_instance(serialize_instance(inst)) == inst


def test_algo_params_validation():
    AlgoParams(epsilon=0.25, seed=0).validate()
    AlgoParams(epsilon=1e-3, seed=0).validate()
    for eps in [0.0, -0.1, 0.26, 1.0]:
        with pytest.raises(InstanceError):
            AlgoParams(epsilon=eps, seed=0).validate()
    with pytest.raises(InstanceError):
        AlgoParams(epsilon=0.2, seed=0, dyer_c=0.0).validate()
    with pytest.raises(InstanceError):
        AlgoParams(epsilon=0.2, seed=0, leaf_variant="bogus").validate()
    with pytest.raises(InstanceError):
        AlgoParams(epsilon=0.2, seed=0, sample_cap=-1).validate()


def test_algo_params_sample_counts_grow():
    p = AlgoParams(epsilon=0.25, seed=0)
    assert p.phase1_samples(64, 4) >= p.phase1_samples(16, 4)
    assert p.phase2_samples(64) >= 1
    capped = AlgoParams(epsilon=0.25, seed=0, sample_cap=10)
    assert capped.phase1_samples(10 ** 4, 2) <= 10


def test_algo_params_stream_is_keyed():
    p = AlgoParams(epsilon=0.25, seed=5)
    a = p.stream("x").integers(0, 1 << 30, size=4)
    b = p.stream("x").integers(0, 1 << 30, size=4)
    c = p.stream("y").integers(0, 1 << 30, size=4)
    assert list(a) == list(b)
    assert list(a) != list(c)
