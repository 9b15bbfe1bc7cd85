"""Convolution engines.

Three layers live here.

* ``conv_exact``: exact convolution of nonnegative integer sequences.
  Schoolbook below a small size threshold, otherwise NTT over 31-bit
  primes with CRT recombination, with big-int Kronecker packing as a
  last resort when the coefficient bound exhausts the prime pool.

* ``maxplus_witness_ref`` / ``maxplus_witness_fast``: (max, +)
  convolution of monotone integer arrays together with, per output
  index, the total mass u[i]*v[k-i] over the maximizing pairs.  The
  reference walks every window directly; the fast path folds the
  problem through a random prime and repairs false positives with
  small exact convolutions.  Both produce identical results.

* ``sum_approx_conv``: multiplicative sum-approximation of the
  convolution of two nonnegative count arrays.  This is the workhorse
  behind sampler merging.
"""

import math
import random
from typing import List, NamedTuple, Optional

import numpy as np

from .primes import is_probable_prime, sample_prime
from .xfloat import XR_ZERO, XReal

_SCHOOLBOOK_CUTOFF = 24
_REF_ENGINE_CUTOFF = 64

IntOrNone = Optional[int]


class Segment(NamedTuple):
    """Maximal run of indices i in [i1, i2] sharing (A[i], B[k-i])."""

    i1: int
    i2: int
    k: int


class WitnessResult(NamedTuple):
    c: List[IntOrNone]
    w: List[XReal]


# ---------------------------------------------------------------------------
# NTT machinery


def _build_prime_pool():
    pool = []
    for c in range(2047, 0, -2):
        q = c * (1 << 20) + 1
        if q >= 1 << 31:
            continue
        if is_probable_prime(q):
            fs = {2}
            m = c
            d = 3
            while d * d <= m:
                while m % d == 0:
                    fs.add(d)
                    m //= d
                d += 2
            if m > 1:
                fs.add(m)
            g = next(
                g
                for g in range(2, 1000)
                if all(pow(g, (q - 1) // f, q) != 1 for f in fs)
            )
            pool.append((q, g))
    return pool


_PRIME_POOL = None


def _prime_pool():
    global _PRIME_POOL
    if _PRIME_POOL is None:
        _PRIME_POOL = _build_prime_pool()
    return _PRIME_POOL


def _primes_for_bound(bound):
    """Smallest prefix of the pool whose product exceeds bound, or None."""
    acc = 1
    out = []
    for q, g in _prime_pool():
        out.append((q, g))
        acc *= q
        if acc > bound:
            return out
    return None


_BITREV_CACHE = {}
_TWIDDLE_CACHE = {}


def _bitrev(n):
    perm = _BITREV_CACHE.get(n)
    if perm is None:
        s = n.bit_length() - 1
        idx = np.arange(n, dtype=np.int64)
        perm = np.zeros(n, dtype=np.int64)
        for j in range(s):
            perm |= ((idx >> j) & 1) << (s - 1 - j)
        _BITREV_CACHE[n] = perm
    return perm


def _pow_series(w, count, q):
    """[w^0, w^1, ..., w^(count-1)] mod q, built by range doubling."""
    out = np.empty(count, dtype=np.int64)
    out[0] = 1
    k = 1
    while k < count:
        step = min(k, count - k)
        out[k : k + step] = out[:step] * pow(w, k, q) % q
        k *= 2
    return out


def _twiddles(q, g, n, inverse):
    key = (q, n, inverse)
    cached = _TWIDDLE_CACHE.get(key)
    if cached is None:
        root = pow(g, (q - 1) // n, q)
        if inverse:
            root = pow(root, q - 2, q)
        series = _pow_series(root, max(1, n // 2), q)
        cached = []
        size = 2
        while size <= n:
            # series[j * n // size] == (root^(n/size))^j, the level's w^j.
            cached.append(np.ascontiguousarray(series[:: n // size][: size // 2]))
            size *= 2
        _TWIDDLE_CACHE[key] = cached
    return cached


def _ntt(vec, q, g, inverse):
    n = len(vec)
    a = vec[_bitrev(n)]
    for tw in _twiddles(q, g, n, inverse):
        half = len(tw)
        blocks = a.reshape(-1, 2 * half)
        lo = blocks[:, :half]
        hi = blocks[:, half:] * tw % q
        s = lo + hi
        np.subtract(s, q, out=s, where=s >= q)
        d = lo - hi
        np.add(d, q, out=d, where=d < 0)
        blocks[:, :half] = s
        blocks[:, half:] = d
    if inverse:
        a = a * pow(n, q - 2, q) % q
    return a


def _residues_mod(seq, q):
    if seq and max(seq) < (1 << 62) and min(seq) >= 0:
        return np.asarray(seq, dtype=np.int64) % q
    return np.array([x % q for x in seq], dtype=np.int64)


_LIMB_BITS = 30
_LIMB_MASK = (1 << _LIMB_BITS) - 1


def _limbs(vals):
    """Little-endian base-2^30 limb matrix for nonnegative ints."""
    top = max(vals, default=0)
    width = max(1, (int(top).bit_length() + _LIMB_BITS - 1) // _LIMB_BITS)
    out = np.zeros((len(vals), width), dtype=np.int64)
    for i, v in enumerate(vals):
        v = int(v)
        j = 0
        while v:
            out[i, j] = v & _LIMB_MASK
            v >>= _LIMB_BITS
            j += 1
    return out


def _limbs_mod(limbs, q):
    """Row values mod q via Horner on the limbs; one pass per limb column."""
    acc = np.zeros(len(limbs), dtype=np.int64)
    base = (1 << _LIMB_BITS) % q
    for j in range(limbs.shape[1] - 1, -1, -1):
        acc = (acc * base + limbs[:, j]) % q
    return acc


def _ntt_conv_mod(ra, rb, q, g, out_len):
    size = 1 << (out_len - 1).bit_length()
    if size < 2:
        size = 2
    fa = np.zeros(size, dtype=np.int64)
    fb = np.zeros(size, dtype=np.int64)
    fa[: len(ra)] = ra
    fb[: len(rb)] = rb
    fa = _ntt(fa, q, g, False)
    fb = _ntt(fb, q, g, False)
    return _ntt(fa * fb % q, q, g, True)[:out_len]


def _crt_digits(residue_rows, primes):
    """Mixed-radix (Garner) digits for per-index CRT reconstruction."""
    k = len(primes)
    qmod = [[0] * k for _ in range(k)]
    for j in range(k):
        acc = 1
        for i in range(j):
            acc = acc * primes[i] % primes[j]
        # acc = (p_0 ... p_{j-1}) mod p_j, needed with its inverse below
        qmod[j][j] = pow(acc, primes[j] - 2, primes[j])
    prefix = [1]
    for p in primes:
        prefix.append(prefix[-1] * p)
    pref_mod = [[prefix[j] % primes[i] for i in range(k)] for j in range(k)]
    digits = []
    for i in range(k):
        p = primes[i]
        t = residue_rows[i] % p
        for j in range(i):
            t = (t - digits[j] * pref_mod[j][i]) % p
        digits.append(t * qmod[i][i] % p)
    return digits, prefix


def _conv_schoolbook(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if not ai:
            continue
        for j, bj in enumerate(b):
            if bj:
                out[i + j] += ai * bj
    return out


def _conv_kronecker(a, b):
    per = (max(a) * max(b) * min(len(a), len(b))).bit_length() + 1
    xa = sum(v << (i * per) for i, v in enumerate(a))
    xb = sum(v << (i * per) for i, v in enumerate(b))
    prod = xa * xb
    mask = (1 << per) - 1
    return [(prod >> (i * per)) & mask for i in range(len(a) + len(b) - 1)]


def conv_exact(a, b):
    """Exact convolution of two nonnegative integer sequences."""
    if not a or not b:
        raise ValueError("conv_exact: empty input")
    for seq in (a, b):
        for v in seq:
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError("conv_exact: entries must be nonnegative ints")
    a = [int(v) for v in a]
    b = [int(v) for v in b]
    out_len = len(a) + len(b) - 1
    ma, mb = max(a), max(b)
    if ma == 0 or mb == 0:
        return [0] * out_len
    if min(len(a), len(b)) <= _SCHOOLBOOK_CUTOFF:
        return _conv_schoolbook(a, b)
    size = 1 << (out_len - 1).bit_length()
    if size > 1 << 20:
        raise ValueError("conv_exact: sequences too long for the NTT pool")
    bound = ma * mb * min(len(a), len(b))
    chosen = _primes_for_bound(bound)
    if chosen is None:
        return _conv_kronecker(a, b)
    rows = []
    for q, g in chosen:
        rows.append(_ntt_conv_mod(_residues_mod(a, q), _residues_mod(b, q), q, g, out_len))
    primes = [q for q, _ in chosen]
    digits, prefix = _crt_digits(rows, primes)
    out = [0] * out_len
    for j, dj in enumerate(digits):
        pj = prefix[j]
        col = dj.tolist()
        for i in range(out_len):
            d = col[i]
            if d:
                out[i] += d * pj
    return out


# ---------------------------------------------------------------------------
# monotone arrays and (max,+) with witnesses


def check_monotone(arr):
    """Raise unless the finite entries of arr are nondecreasing ints."""
    last = None
    for v in arr:
        if v is None:
            continue
        if not isinstance(v, (int, np.integer)):
            raise ValueError("monotone array entries must be ints or None")
        if last is not None and v < last:
            raise ValueError("monotone array violates monotonicity")
        last = int(v)


def _pieces(arr):
    """Maximal constant runs as (lo, hi, val); None runs included."""
    out = []
    lo = 0
    for i in range(1, len(arr) + 1):
        if i == len(arr) or arr[i] != arr[lo]:
            out.append((lo, i - 1, arr[lo]))
            lo = i
    return out


def _piece_index(arr):
    pid = [0] * len(arr)
    for t, (lo, hi, _) in enumerate(_pieces(arr)):
        for i in range(lo, hi + 1):
            pid[i] = t
    return pid


def _scale_ints(vals):
    """Common-denominator integer mantissas: vals[i] == ints[i] * 2**shift."""
    lsbs = [x.e - x.m.bit_length() + 1 for x in vals if x.m]
    if not lsbs:
        return [0] * len(vals), 0
    base = min(lsbs)
    ints = []
    for x in vals:
        if not x.m:
            ints.append(0)
        else:
            ints.append(x.m << ((x.e - x.m.bit_length() + 1) - base))
    return ints, base


def _maxplus_c_pieces(a, b):
    """(max,+) values only, by sweeping piece-pair intervals."""
    import heapq

    out_len = len(a) + len(b) - 1
    c: List[IntOrNone] = [None] * out_len
    pa = [p for p in _pieces(a) if p[2] is not None]
    pb = [p for p in _pieces(b) if p[2] is not None]
    if not pa or not pb:
        return c
    adds = []
    for alo, ahi, av in pa:
        for blo, bhi, bv in pb:
            adds.append((alo + blo, -(av + bv), ahi + bhi))
    adds.sort()
    heap = []
    ptr = 0
    for k in range(out_len):
        while ptr < len(adds) and adds[ptr][0] == k:
            _, nv, end = adds[ptr]
            heapq.heappush(heap, (nv, end))
            ptr += 1
        while heap and heap[0][1] < k:
            heapq.heappop(heap)
        if heap:
            c[k] = -heap[0][0]
    return c


def maxplus_witness_ref(a, b, u, v):
    """(max,+) of a,b plus the mass of u x v over maximizing pairs.

    Direct per-window scan; quadratic, meant as the oracle route and
    for short inputs.
    """
    if len(a) != len(u) or len(b) != len(v):
        raise ValueError("length mismatch")
    check_monotone(a)
    check_monotone(b)
    ua, sa = _scale_ints(u)
    vb, sb = _scale_ints(v)
    na, nb = len(a), len(b)
    out_len = na + nb - 1
    c: List[IntOrNone] = [None] * out_len
    w = []
    for k in range(out_len):
        best = None
        acc = 0
        for i in range(max(0, k - nb + 1), min(na - 1, k) + 1):
            ai = a[i]
            bj = b[k - i]
            if ai is None or bj is None:
                continue
            s = ai + bj
            if best is None or s > best:
                best = s
                acc = ua[i] * vb[k - i]
            elif s == best:
                acc += ua[i] * vb[k - i]
        c[k] = best
        w.append(XReal.from_int_scaled(acc, sa + sb) if best is not None else XR_ZERO)
    return WitnessResult(c, w)


def false_positive_segments(a, b, c, p):
    """Runs of pairs congruent to c[k] mod p without equality.

    For every output index k, returns the maximal index runs [i1, i2]
    where (a[i], b[k-i]) is constant and finite, a[i]+b[k-i] == c[k]
    (mod p) but a[i]+b[k-i] != c[k].  Sorted by (k, i1).
    """
    if p <= 1:
        raise ValueError("modulus must exceed 1")
    check_monotone(a)
    check_monotone(b)
    pies_a = _pieces(a)
    pies_b = _pieces(b)
    pid_a = _piece_index(a)
    pid_b = _piece_index(b)
    na, nb = len(a), len(b)
    out = []
    for k in range(na + nb - 1):
        ck = c[k]
        if ck is None:
            continue
        i = max(0, k - nb + 1)
        hi = min(na - 1, k)
        while i <= hi:
            alo, ahi, av = pies_a[pid_a[i]]
            blo, bhi, bv = pies_b[pid_b[k - i]]
            run_hi = min(ahi, k - blo, hi)
            if av is not None and bv is not None:
                s = av + bv
                if s != ck and (s - ck) % p == 0:
                    out.append(Segment(i, run_hi, k))
            i = run_hi + 1
    return out


def _chop_pieces(pieces, limit):
    out = []
    for lo, hi, val in pieces:
        if val is None:
            continue
        start = lo
        while start <= hi:
            end = min(hi, start + limit - 1)
            out.append((start, end, val))
            start = end + 1
    return out


def maxplus_witness_fast(a, b, u, v, rng=None):
    """Same contract as maxplus_witness_ref, computed mod a random prime.

    Indices are folded mod p along a doubled stride so a single long
    exact convolution recovers most witness masses; residues that
    collide without matching the true maximum are located as segments
    and repaired by short exact convolutions over chopped pieces.  The
    result is exact, whatever prime gets drawn.
    """
    if len(a) != len(u) or len(b) != len(v):
        raise ValueError("length mismatch")
    check_monotone(a)
    check_monotone(b)
    na, nb = len(a), len(b)
    out_len = na + nb - 1
    c = _maxplus_c_pieces(a, b)
    fin_a = [x for x in a if x is not None]
    fin_b = [x for x in b if x is not None]
    ua, sa = _scale_ints(u)
    vb, sb = _scale_ints(v)
    shift = sa + sb
    if not fin_a or not fin_b:
        return WitnessResult(c, [XR_ZERO] * out_len)
    min_a, min_b = min(fin_a), min(fin_b)
    a0 = [None if x is None else x - min_a for x in a]
    b0 = [None if x is None else x - min_b for x in b]
    m = max(max(x for x in a0 if x is not None), max(x for x in b0 if x is not None))
    if rng is None:
        rng = random.Random(0x6D70 ^ (m * 2654435761 % (1 << 31)))
    root = math.isqrt(m)
    if root * root < m:
        root += 1
    p = sample_prime(root, 2 * root, rng)
    stride = 2 * p
    pos_a, sva = [], []
    for i, x in enumerate(a0):
        if x is not None and ua[i]:
            pos_a.append(i * stride + x % p)
            sva.append(ua[i])
    pos_b, svb = [], []
    for j, x in enumerate(b0):
        if x is not None and vb[j]:
            pos_b.append(j * stride + x % p)
            svb.append(vb[j])

    wprime = _witness_flat_conv(pos_a, sva, na * stride, pos_b, svb, nb * stride, min(na, nb))

    corr = {}
    fps = false_positive_segments(a0, b0, [None if x is None else x - min_a - min_b for x in c], p)
    if fps:
        lim_a = max(1, -(-na // max(1, 2 * m)))
        lim_b = max(1, -(-nb // max(1, 2 * m)))
        chunks_a = _chop_pieces(_pieces(a0), lim_a)
        chunks_b = _chop_pieces(_pieces(b0), lim_b)
        by_val_a = {}
        for ch in chunks_a:
            by_val_a.setdefault(ch[2], []).append(ch)
        by_val_b = {}
        for ch in chunks_b:
            by_val_b.setdefault(ch[2], []).append(ch)
        pending = {}
        for i1, i2, k in fps:
            av = a0[i1]
            bv = b0[k - i1]
            for ia_lo, ia_hi, _ in by_val_a.get(av, ()):
                for jb_lo, jb_hi, _ in by_val_b.get(bv, ()):
                    if ia_lo + jb_lo <= k <= ia_hi + jb_hi:
                        pending.setdefault((ia_lo, ia_hi, jb_lo, jb_hi), set()).add(k)
        for (ia_lo, ia_hi, jb_lo, jb_hi), ks in pending.items():
            piece = conv_exact(ua[ia_lo : ia_hi + 1], vb[jb_lo : jb_hi + 1])
            for k in ks:
                off = k - ia_lo - jb_lo
                if 0 <= off < len(piece):
                    corr[k] = corr.get(k, 0) + piece[off]

    idxs = []
    for k in range(out_len):
        if c[k] is None:
            continue
        r = (c[k] - min_a - min_b) % p
        idxs.append(k * stride + r)
        idxs.append(k * stride + r + p)
    got = wprime(idxs)
    w = []
    pos = 0
    for k in range(out_len):
        if c[k] is None:
            w.append(XR_ZERO)
            continue
        total = got[pos] + got[pos + 1] - corr.get(k, 0)
        pos += 2
        if total < 0:
            raise ArithmeticError("negative witness mass after correction")
        w.append(XReal.from_int_scaled(total, shift))
    return WitnessResult(c, w)


def _witness_flat_conv(pos_a, vals_a, len_a, pos_b, vals_b, len_b, min_len):
    """Convolve two sparsely scattered arrays of nonnegative ints.

    The arrays are given as (positions, values) over dense lengths len_a
    and len_b.  Returns a gatherer mapping a sequence of output indices
    to the list of exact convolution entries at those indices.
    """
    out_len = len_a + len_b - 1
    ma = max(vals_a) if vals_a else 0
    mb = max(vals_b) if vals_b else 0
    if ma == 0 or mb == 0:
        return lambda idxs: [0] * len(idxs)
    bound = ma * mb * min_len
    size = 1 << (out_len - 1).bit_length()
    chosen = _primes_for_bound(bound) if size <= 1 << 20 else None
    if chosen is None:
        fa = [0] * len_a
        for i, v in zip(pos_a, vals_a):
            fa[i] = v
        fb = [0] * len_b
        for j, v in zip(pos_b, vals_b):
            fb[j] = v
        full = _conv_kronecker(fa, fb)
        return lambda idxs: [full[i] if i < len(full) else 0 for i in idxs]

    la = _limbs(vals_a)
    lb = _limbs(vals_b)
    ipa = np.asarray(pos_a, dtype=np.int64)
    ipb = np.asarray(pos_b, dtype=np.int64)
    rows = []
    for q, g in chosen:
        ra = np.zeros(len_a, dtype=np.int64)
        ra[ipa] = _limbs_mod(la, q)
        rb = np.zeros(len_b, dtype=np.int64)
        rb[ipb] = _limbs_mod(lb, q)
        rows.append(_ntt_conv_mod(ra, rb, q, g, out_len))
    primes = [q for q, _ in chosen]
    nk = len(primes)
    prefix = [1]
    for p in primes:
        prefix.append(prefix[-1] * p)
    pref_mod = [[prefix[j] % primes[i] for i in range(nk)] for j in range(nk)]
    qinv = [pow(pref_mod[j][j], primes[j] - 2, primes[j]) for j in range(nk)]
    # Mixed-radix digits keep every partial sum below the prime product, so
    # int64 reconstruction is exact whenever that product fits.
    small = prefix[nk] < (1 << 62)

    def gather(idxs):
        if not len(idxs):
            return []
        ii = np.asarray(idxs, dtype=np.int64)
        ok = ii < out_len
        safe = np.where(ok, ii, 0)
        digs = []
        for i in range(nk):
            p = primes[i]
            t = rows[i][safe] % p
            for j in range(i):
                t = (t - digs[j] * pref_mod[j][i]) % p
            digs.append(t * qinv[i] % p)
        if small:
            vals = np.zeros(len(ii), dtype=np.int64)
            for j in range(nk):
                vals += digs[j] * prefix[j]
            vals[~ok] = 0
            return vals.tolist()
        cols = [d.tolist() for d in digs]
        okl = ok.tolist()
        out = []
        for r in range(len(ii)):
            if not okl[r]:
                out.append(0)
                continue
            val = 0
            for j in range(nk):
                d = cols[j][r]
                if d:
                    val += d * prefix[j]
            out.append(val)
        return out

    return gather


# ---------------------------------------------------------------------------
# sum-approximate convolution


def _band_index(x, l2d):
    return x.floor_log2() // l2d


def _part_inputs(vals, stars, part, sentinel, l2d):
    """Prefix-max exponent array and normalized weights for one residue class."""
    a = []
    u = []
    best = sentinel
    for x, st in zip(vals, stars):
        cur = st if (st is not None and st % 3 == part) else None
        if cur is not None and cur > best:
            best = cur
        a.append(best)
        if cur is not None and cur == best:
            u.append(x.mul_pow2(-best * l2d))
        else:
            u.append(XR_ZERO)
    return a, u


def sum_approx_conv(f, g, delta, rng=None):
    """Approximate counts of the convolution, good on prefix sums.

    Entries of f and g must be XReals that are zero or at least one.
    Every prefix sum of the returned array lies within (1 +- delta) of
    the corresponding prefix sum of the exact convolution.
    """
    if not 0 < delta < 0.25:
        raise ValueError("delta must lie in (0, 0.25)")
    if not f or not g:
        raise ValueError("empty input")
    one = XReal.one()
    for seq in (f, g):
        for x in seq:
            if x.m and x.cmp(one) < 0:
                raise ValueError("entries must be zero or >= 1")
    nmax = max(len(f), len(g)) - 1
    l2d = max(1, math.ceil(math.log2((2 * nmax + 1) ** 2 * 2.0 / delta)))
    stars_f = [None if not x.m else _band_index(x, l2d) for x in f]
    stars_g = [None if not x.m else _band_index(x, l2d) for x in g]
    tops = [s for s in stars_f + stars_g if s is not None]
    if not tops:
        return [XR_ZERO] * (len(f) + len(g) - 1)
    sentinel = -10 * max(1, max(tops) + 1)
    out = [XR_ZERO] * (len(f) + len(g) - 1)
    for pi in range(3):
        if not any(s is not None and s % 3 == pi for s in stars_f):
            continue
        af, uf = _part_inputs(f, stars_f, pi, sentinel, l2d)
        for pj in range(3):
            if not any(s is not None and s % 3 == pj for s in stars_g):
                continue
            bg, vg = _part_inputs(g, stars_g, pj, sentinel, l2d)
            if max(len(af), len(bg)) <= _REF_ENGINE_CUTOFF:
                res = maxplus_witness_ref(af, bg, uf, vg)
            else:
                res = maxplus_witness_fast(af, bg, uf, vg, rng)
            for z, wz in enumerate(res.w):
                if wz.m:
                    out[z] = out[z].add(wz.mul_pow2(res.c[z] * l2d))
    return out
