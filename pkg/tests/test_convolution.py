"""Exact convolution, witnessed (max,+), and the approximate sum route.

Frozen expectations come from an independent brute-force pass.
"""

import random
from fractions import Fraction

import pytest

from knapcount._rand import stream
from knapcount.convolution import (
    check_monotone,
    conv_exact,
    false_positive_segments,
    maxplus_witness_fast,
    maxplus_witness_ref,
    sum_approx_conv,
)
from knapcount.xfloat import XR_ZERO, XReal


def frac(x):
    return x.to_fraction()


def xr_list(ints):
    return [XReal.from_int(v) for v in ints]


# -- exact convolution --------------------------------------------------------

def test_conv_exact_fixture():
    assert conv_exact([1, 2], [3, 4]) == [3, 10, 8]


def test_conv_exact_identity():
    a = [5, 0, 7, 1]
    assert conv_exact([1], a) == a
    assert conv_exact(a, [1]) == a


def test_conv_exact_rejects_bad_input():
    with pytest.raises(ValueError):
        conv_exact([], [1])
    with pytest.raises(ValueError):
        conv_exact([1], [])
    with pytest.raises(ValueError):
        conv_exact([1, -2], [1])


def schoolbook(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def test_conv_exact_matches_schoolbook_random():
    rnd = random.Random(0)
    for _ in range(12):
        la = rnd.randint(1, 512)
        lb = rnd.randint(1, 512)
        mag = 1 << rnd.randint(1, 128)
        a = [rnd.randrange(mag) for _ in range(la)]
        b = [rnd.randrange(mag) for _ in range(lb)]
        assert conv_exact(a, b) == schoolbook(a, b)


def test_conv_exact_commutative_and_length():
    rnd = random.Random(1)
    a = [rnd.randrange(1 << 40) for _ in range(33)]
    b = [rnd.randrange(1 << 40) for _ in range(70)]
    ab = conv_exact(a, b)
    assert ab == conv_exact(b, a)
    assert len(ab) == len(a) + len(b) - 1


# -- witnessed (max,+) --------------------------------------------------------

def test_witness_ref_fixture():
    a, b = [0, 1], [0, 2]
    u = xr_list([1, 2])
    v = xr_list([3, 4])
    res = maxplus_witness_ref(a, b, u, v)
    assert res.c == [0, 2, 3]
    assert [frac(x) for x in res.w] == [3, 4, 8]


def test_witness_ref_tie_sums_mass():
    # all sums tie at 0, so every antidiagonal pair contributes
    res = maxplus_witness_ref([0, 0], [0, 0], xr_list([1, 1]), xr_list([1, 1]))
    assert res.c == [0, 0, 0]
    assert [frac(x) for x in res.w] == [1, 2, 1]


def test_witness_ref_none_entries():
    res = maxplus_witness_ref([None, 0], [0], xr_list([9, 1]), xr_list([1]))
    assert res.c == [None, 0]
    assert res.w[0].is_zero
    assert frac(res.w[1]) == 1


def test_witness_zero_mass_on_zero_u():
    res = maxplus_witness_ref([0, 1], [0], [XR_ZERO, XR_ZERO], xr_list([5]))
    assert res.c == [0, 1]
    assert all(x.is_zero for x in res.w)


def test_witness_ref_rejects_length_mismatch():
    with pytest.raises(ValueError):
        maxplus_witness_ref([0, 1], [0], xr_list([1]), xr_list([1]))


def test_check_monotone():
    check_monotone([None, None, 0, 0, 3])
    check_monotone([0, None, 1])    # gaps between finite entries are fine
    with pytest.raises(ValueError):
        check_monotone([2, 1])
    with pytest.raises(ValueError):
        check_monotone([1, "x"])


def brute_witness(a, b, u, v):
    na, nb = len(a), len(b)
    c, w = [], []
    for k in range(na + nb - 1):
        best, acc = None, Fraction(0)
        for i in range(max(0, k - nb + 1), min(na - 1, k) + 1):
            if a[i] is None or b[k - i] is None:
                continue
            s = a[i] + b[k - i]
            if best is None or s > best:
                best, acc = s, frac(u[i]) * frac(v[k - i])
            elif s == best:
                acc += frac(u[i]) * frac(v[k - i])
        c.append(best)
        w.append(acc)
    return c, w


def random_monotone(rnd, n, none_p=0.25):
    arr, cur = [], 0
    for _ in range(n):
        if rnd.random() < none_p:
            arr.append(None)
        else:
            cur += rnd.randint(0, 4)
            arr.append(cur)
    if all(x is None for x in arr):
        arr[0] = 0
    # leading Nones only; patch interior ones to keep monotone shape legal
    seen = False
    for i, x in enumerate(arr):
        if x is not None:
            seen = True
        elif seen:
            arr[i] = arr[i - 1]
    return arr


def test_witness_ref_matches_brute_force():
    rnd = random.Random(7)
    for _ in range(25):
        na, nb = rnd.randint(1, 12), rnd.randint(1, 12)
        a = random_monotone(rnd, na)
        b = random_monotone(rnd, nb)
        u = xr_list([rnd.randint(0, 1 << 20) for _ in range(na)])
        v = xr_list([rnd.randint(0, 1 << 20) for _ in range(nb)])
        res = maxplus_witness_ref(a, b, u, v)
        c, w = brute_witness(a, b, u, v)
        assert res.c == c
        for got, want in zip(res.w, w):
            if want == 0:
                assert got.is_zero
            else:
                assert abs(frac(got) - want) <= want * Fraction(1, 1 << 80)


def test_witness_fast_matches_ref():
    rnd = random.Random(11)
    rng = stream(11, "witness")
    for _ in range(15):
        na, nb = rnd.randint(1, 60), rnd.randint(1, 60)
        a = random_monotone(rnd, na)
        b = random_monotone(rnd, nb)
        u = xr_list([rnd.randint(0, 1 << 30) for _ in range(na)])
        v = xr_list([rnd.randint(0, 1 << 30) for _ in range(nb)])
        ref = maxplus_witness_ref(a, b, u, v)
        fast = maxplus_witness_fast(a, b, u, v, rng=rng)
        assert fast.c == ref.c
        for got, want in zip(fast.w, ref.w):
            if want.is_zero:
                assert got.is_zero
            else:
                rel = abs(frac(got) - frac(want)) / frac(want)
                assert rel <= Fraction(1, 1 << 80)


def test_false_positive_segments_definition():
    rnd = random.Random(5)
    for _ in range(20):
        na, nb = rnd.randint(1, 10), rnd.randint(1, 10)
        a = random_monotone(rnd, na, none_p=0.15)
        b = random_monotone(rnd, nb, none_p=0.15)
        c, _ = brute_witness(a, b, xr_list([1] * na), xr_list([1] * nb))
        p = rnd.choice([2, 3, 5, 7])
        segs = brute_fp(a, b, c, p)
        got = [(s.k, s.i1, s.i2) for s in false_positive_segments(a, b, c, p)]
        assert got == segs


def brute_fp(a, b, c, p):
    # runs also break whenever the value pair (a[i], b[k-i]) changes
    na, nb = len(a), len(b)
    segs = []
    for k in range(na + nb - 1):
        if c[k] is None:
            continue
        run, pair = None, None
        for i in range(max(0, k - nb + 1), min(na - 1, k) + 1):
            ai, bj = a[i], b[k - i]
            hit = (ai is not None and bj is not None
                   and (ai + bj) % p == c[k] % p and ai + bj != c[k])
            if hit and run is not None and (ai, bj) == pair:
                run[1] = i
            else:
                if run is not None:
                    segs.append((k, run[0], run[1]))
                run, pair = ([i, i], (ai, bj)) if hit else (None, None)
        if run is not None:
            segs.append((k, run[0], run[1]))
    return segs


def test_false_positive_segments_empty_for_large_modulus():
    a = [0, 2, 5]
    b = [0, 3]
    c, _ = brute_witness(a, b, xr_list([1] * 3), xr_list([1] * 2))
    m = max(x for x in c if x is not None)
    assert false_positive_segments(a, b, c, 2 * m + 3) == []


# -- approximate sum convolution ----------------------------------------------

def exact_prefixes(f, g):
    ef = [frac(x) for x in f]
    eg = [frac(x) for x in g]
    out = [Fraction(0)] * (len(f) + len(g) - 1)
    for i, x in enumerate(ef):
        for j, y in enumerate(eg):
            out[i + j] += x * y
    acc, pref = Fraction(0), []
    for v in out:
        acc += v
        pref.append(acc)
    return pref


def check_prefixes(approx, exact, delta):
    tol = Fraction(delta).limit_denominator(10 ** 9)
    acc = Fraction(0)
    for got, want in zip(approx, exact):
        acc += frac(got)
        assert abs(acc - want) <= want * tol


def test_sum_approx_small_fixture():
    f = xr_list([1, 1])
    res = sum_approx_conv(f, f, 0.1, rng=stream(0, "sa"))
    check_prefixes(res, exact_prefixes(f, f), 0.1)


def test_sum_approx_identity_like():
    f = xr_list([1])
    g = xr_list([3, 0, 5])
    res = sum_approx_conv(f, g, 0.05, rng=stream(1, "sa"))
    check_prefixes(res, exact_prefixes(f, g), 0.05)


def test_sum_approx_random():
    rnd = random.Random(9)
    for t in range(8):
        lf, lg = rnd.randint(1, 64), rnd.randint(1, 64)
        f = [XR_ZERO if rnd.random() < 0.2
             else XReal.from_int(rnd.randint(1, 1 << 60)) for _ in range(lf)]
        g = [XR_ZERO if rnd.random() < 0.2
             else XReal.from_int(rnd.randint(1, 1 << 60)) for _ in range(lg)]
        delta = 10 ** -3
        res = sum_approx_conv(f, g, delta, rng=stream(t, "sar"))
        check_prefixes(res, exact_prefixes(f, g), delta)


def test_sum_approx_chained():
    # ten self-convolutions of [1,1]; error compounds like (1 + delta)^10
    delta = 0.01
    cur = xr_list([1, 1])
    exact = [Fraction(1), Fraction(1)]
    rng = stream(4, "chain")
    for _ in range(10):
        cur = sum_approx_conv(cur, xr_list([1, 1]), delta, rng=rng)
        exact = [Fraction(x) for x in schoolbook([int(e) for e in exact], [1, 1])]
    tol = Fraction((1 + delta) ** 10 - 1).limit_denominator(10 ** 9)
    acc_g, acc_e = Fraction(0), Fraction(0)
    for got, want in zip(cur, exact):
        acc_g += frac(got)
        acc_e += want
        assert abs(acc_g - acc_e) <= acc_e * tol


def test_sum_approx_rejects_bad_entries():
    half = XReal.from_fraction(Fraction(1, 2))
    with pytest.raises(ValueError):
        sum_approx_conv([half], xr_list([1]), 0.1)
    for bad in [0.0, 0.25, 0.5, -1.0]:
        with pytest.raises(ValueError):
            sum_approx_conv(xr_list([1]), xr_list([1]), bad)
    with pytest.raises(ValueError):
        sum_approx_conv([], xr_list([1]), 0.1)


def test_sum_approx_all_zero():
    z = [XR_ZERO, XR_ZERO]
    res = sum_approx_conv(z, z, 0.1)
    assert len(res) == 3
    assert all(x.is_zero for x in res)
