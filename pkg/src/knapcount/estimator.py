"""End-to-end counting pipelines.

estimate_subquadratic: two-phase estimator built from weight classes,
hashed bins, and the merge/round sampler tree, finished by the
second-phase solver over tiny items.

estimate_dyer: classic rounding baseline; randomized rounding to a
coarse grid, an exact table over the rounded weights, and a backtrace
ratio estimator.
"""

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._rand import stream, uniform_int
from .instance import ceil_div, ceil_div_scaled, scale_instance
from .sampler import (
    SamplerError,
    leaf_cc_build,
    leaf_dp_build,
    merge_samplers,
    round_sampler,
    round_weights,
    small_items_build,
)
from .secondphase import SecondPhaseInstance, second_phase_estimate
from .xfloat import XR_ONE, XR_ZERO, XReal

_CONV_DELTA_FLOOR = 2.0 ** -40
_CC_CELL_GUARD = 1_500_000
_QUERY_CHUNK = 4096


class EstimatorError(Exception):
    pass


class _Abort(Exception):
    """Internal: wall-clock budget exhausted."""


# -- popular class ------------------------------------------------------------

def heavy_prefix_index(weights_desc, capacity):
    """Smallest i with W_1 + ... + W_i >= T/2 (weights sorted descending)."""
    acc = 0
    for i, w in enumerate(weights_desc, 1):
        acc += w
        if 2 * acc >= capacity:
            return i
    raise EstimatorError("total weight at most T; trivial case upstream")


def _popular_detail(inst):
    desc = sorted(inst.weights, reverse=True)
    t = inst.capacity
    istar = heavy_prefix_index(desc, t)
    prefix = desc[:istar]
    # candidates 2, 4, ..., 2^ceil(log2(4n))
    top = 1 << (4 * inst.n - 1).bit_length()
    best = None
    ell = 2
    while ell <= top:
        weight = sum(w for w in prefix if w * ell > t and w * ell <= 2 * t)
        count = sum(1 for w in prefix if w * ell > t and w * ell <= 2 * t)
        if best is None or weight > best[0]:
            best = (weight, ell, count)
        ell <<= 1
    weight, ell, count = best
    bound = ell / (8.0 * math.log2(8 * inst.n))
    if count <= bound:
        raise EstimatorError("popular class below its count bound")
    return ell, istar, count, weight


def find_popular_ell(inst):
    """The power of two whose weight band (T/l, 2T/l] captures the most
    heavy-prefix weight; ties go to the smaller l."""
    if inst.total_weight() <= inst.capacity:
        raise EstimatorError("trivial instance: total weight within capacity")
    return _popular_detail(inst)[0]


# -- weight classes -----------------------------------------------------------

@dataclass(frozen=True)
class WeightClassPartition:
    classes: dict            # label -> list of item ids
    g: int
    n: int

    def m_eff(self, label):
        """The power of two actually used for the last (small) class."""
        if label == 2 * self.n:
            return 1 << (self.g + 1)
        return label

    def labels(self):
        return [m for m, ids in self.classes.items() if ids]


def partition_classes(inst):
    n, t = inst.n, inst.capacity
    g = max(0, (max(1, n) - 1).bit_length())
    classes = {}
    m = 2
    while m <= (1 << g):
        classes[m] = []
        m <<= 1
    classes[2 * n] = []
    for i, w in enumerate(inst.weights):
        if w * (1 << g) <= t:
            classes[2 * n].append(i)
            continue
        m = 2
        while m <= (1 << g):
            if w * m > t and w * m <= 2 * t:
                classes[m].append(i)
                break
            m <<= 1
        else:
            raise EstimatorError("item %d fits no weight class" % i)
    return WeightClassPartition(classes, g, n)


# -- class sampler construction ----------------------------------------------

def _conv_delta(dl, dr):
    return min(0.2, max(0.4 * (dl + dr), _CONV_DELTA_FLOOR))


def _level_caps(scales, cap_t):
    """Physical table bounds per level, root first.

    Each rounding node owns thresholds for all its stored cells, so the
    support a child must provide grows by one scale step per level; the
    recurrence tracks it exactly instead of guessing a flat margin.
    """
    caps = [ceil_div(cap_t, scales[0]) + 2]
    for h in range(1, len(scales)):
        caps.append(((caps[h - 1] + 1) * scales[h - 1] - 1) // scales[h] + 1)
    return caps


def _level_scales(capacity, ell, m, logpow):
    height = m.bit_length() - 1
    return [ceil_div_scaled(capacity, ell, logpow * 2.0 ** (h / 2.0))
            for h in range(height + 1)]


_COMPACT_CELLS = 2048


def _compact(smp):
    """Drop a consumed node's exact table when it is big enough to matter."""
    if smp.table.phys > _COMPACT_CELLS:
        smp.table.compact()


def _fold_levels(level, scales, caps, rng):
    h = len(scales) - 1
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            lo, hi = level[i], level[i + 1]
            merged = merge_samplers(lo, hi, _conv_delta(lo.delta, hi.delta),
                                    rng, cap=caps[h])
            _compact(lo)
            _compact(hi)
            nxt.append(round_sampler(merged, scales[h - 1], rng,
                                     cap=caps[h - 1]))
            _compact(merged)
        level = nxt
        h -= 1
    return level[0]


def _cc_cells(items, s, b, cap):
    """Predicted color-coding table length for a bin."""
    if not items:
        return 1
    max_w = max(w for _, w in items)
    big_l = b * ceil_div(max_w, s)
    phys = min(big_l, cap) + 1
    return min(b, len(items)) * (big_l + 1) + phys


def build_class_sampler(class_items, m, ell, capacity, n_total, params, rng,
                        *, cap_t=None, delta_class=None, diag=None):
    """Sampler for one weight class at the shared root scale S0.

    Case (a) hashes the items into m bins, builds a leaf per bin, and
    folds a complete binary merge/round tree down to S0.  Case (b)
    (many light items) uses a single small-items leaf rounded to S0.
    """
    if m < 2 or m & (m - 1):
        raise EstimatorError("class size parameter must be a power of two")
    logpow = params.log_pow(n_total)
    bcap = params.bin_cap(n_total)
    s0 = ceil_div_scaled(capacity, ell, logpow)
    if cap_t is None:
        cap_t = capacity + ceil_div_scaled(
            capacity, ell, params.slack_pow(n_total)) + s0
    if delta_class is None:
        delta_class = params.delta_node(n_total)

    sb = ceil_div_scaled(capacity, ell, logpow * math.sqrt(m))
    max_w = max(w for _, w in class_items)
    if m >= 20 * ell * ell * logpow and max_w <= sb:
        if diag is not None:
            diag["case_b"] = diag.get("case_b", 0) + 1
        caps = _level_caps([s0, sb], cap_t)
        leaf = small_items_build(class_items, sb, 0.0, rng, cap=caps[1])
        out = round_sampler(leaf, s0, rng, cap=caps[0])
        _compact(leaf)
        return out

    scales = _level_scales(capacity, ell, m, logpow)
    caps = _level_caps(scales, cap_t)
    height = m.bit_length() - 1
    delta_leaf = delta_class / 8.0 ** height
    bins = [[] for _ in range(m)]
    for it in class_items:
        bins[uniform_int(rng, 0, m - 1)].append(it)

    want_cc = params.leaf_variant == "cc" or (
        params.leaf_variant == "auto" and ell * ell > n_total)
    level = []
    for items in bins:
        use_cc = want_cc
        if use_cc and params.leaf_variant != "cc" and \
                _cc_cells(items, scales[-1], bcap, caps[-1]) > _CC_CELL_GUARD:
            use_cc = False
        build = leaf_cc_build if use_cc else leaf_dp_build
        if diag is not None:
            key = "cc_leaves" if use_cc else "dp_leaves"
            diag[key] = diag.get(key, 0) + 1
        level.append(build(items, scales[-1], bcap, delta_leaf, rng,
                           cap=caps[-1]))
    return _fold_levels(level, scales, caps, rng)


def build_global_sampler(class_samplers, params, rng, *, cap_t=None):
    if not class_samplers:
        raise EstimatorError("no class samplers to combine")
    s0 = class_samplers[0].S
    for smp in class_samplers:
        if smp.S != s0:
            raise EstimatorError("scale mismatch between class samplers")
    acc = class_samplers[0]
    for nxt in class_samplers[1:]:
        cap = None if cap_t is None else ceil_div(cap_t, s0) + 2
        merged = merge_samplers(acc, nxt, _conv_delta(acc.delta, nxt.delta),
                                rng, cap=cap)
        _compact(acc)
        _compact(nxt)
        acc = merged
    return acc


# -- phase one ----------------------------------------------------------------

@dataclass
class PhaseOneOutput:
    ell: int
    istar: int
    tiny_items: tuple
    partial_samples: list            # (idSet, true total weight)
    omega_prime: XReal
    ledger: float
    t: int
    scale: int
    n_samples: int
    sampler: object
    class_sizes: dict
    diag: dict


def _true_weight_sums(samples, weights):
    if not samples:
        return []
    total_ids = sum(len(ids) for ids, _ in samples)
    if weights and max(weights) * max(1, total_ids) < 2 ** 62:
        warr = np.asarray(weights, dtype=np.int64)
        flat = np.fromiter((i for ids, _ in samples for i in ids),
                           dtype=np.int64, count=total_ids)
        lens = np.fromiter((len(ids) for ids, _ in samples), dtype=np.int64,
                           count=len(samples))
        csum = np.concatenate(([0], np.cumsum(warr[flat]))) if total_ids \
            else np.zeros(1, dtype=np.int64)
        ends = np.cumsum(lens)
        starts = ends - lens
        return [int(v) for v in csum[ends] - csum[starts]]
    return [sum(weights[i] for i in ids) for ids, _ in samples]


def phase_one(inst, params, rng=None, *, timings=None, deadline=None):
    """Build the global sampler, estimate the rounded-solution mass, and
    draw the partial samples the second phase will complete."""
    if rng is None:
        rng = params.stream("phase1")
    n, capacity = inst.n, inst.capacity
    if inst.total_weight() <= capacity:
        raise EstimatorError("trivial instance reached phase one")

    t0 = time.perf_counter()
    ell, istar, _, _ = _popular_detail(inst)
    part = partition_classes(inst)
    labels = part.labels()
    logpow = params.log_pow(n)
    slackpow = params.slack_pow(n)
    s0 = ceil_div_scaled(capacity, ell, logpow)
    cap_t = capacity + ceil_div_scaled(capacity, ell, slackpow) + s0

    k = len(labels)
    delta_class = params.delta_node(n) / (2.0 * 4.0 ** k * k)
    diag = {}
    class_samplers = []
    for label in labels:
        seed = uniform_int(rng, 0, 2 ** 62)
        items = [(i, inst.weights[i]) for i in part.classes[label]]
        class_samplers.append(build_class_sampler(
            items, part.m_eff(label), ell, capacity, n, params,
            stream(seed, "class", label), cap_t=cap_t,
            delta_class=delta_class, diag=diag))
        _check_deadline(deadline)
    seed = uniform_int(rng, 0, 2 ** 62)
    root = build_global_sampler(class_samplers, params,
                                stream(seed, "global"), cap_t=cap_t)
    if timings is not None:
        timings["build_ms"] = (time.perf_counter() - t0) * 1000.0

    tq = Fraction(capacity) + Fraction(capacity) / (ell * Fraction(slackpow))
    t = ceil_div(tq.numerator, tq.denominator * s0)
    if t * s0 < capacity:
        raise EstimatorError("threshold below capacity")
    omega_prime = root.table.prefix(min(t, root.L))

    t1 = time.perf_counter()
    n_samples = params.phase1_samples(n, ell)
    seed = uniform_int(rng, 0, 2 ** 62)
    qrng = stream(seed, "queries")
    raw = []
    qcap = t * s0
    for lo in range(0, n_samples, _QUERY_CHUNK):
        hi = min(n_samples, lo + _QUERY_CHUNK)
        raw.extend(root.query_batch([qcap] * (hi - lo), qrng))
        _check_deadline(deadline)
    sums = _true_weight_sums(raw, inst.weights)
    partial = [(ids, w) for (ids, _), w in zip(raw, sums)]
    if timings is not None:
        timings["phase1_ms"] = (time.perf_counter() - t1) * 1000.0

    class_sizes = {label: len(part.classes[label]) for label in labels}
    return PhaseOneOutput(ell, istar, root.tiny, partial, omega_prime,
                          root.ledger_sum(), t, s0, n_samples, root,
                          class_sizes, diag)


# -- reports ------------------------------------------------------------------

@dataclass
class EstimateReport:
    estimate: XReal
    algorithm: str
    n: int
    capacity: int
    epsilon: float
    seed: int
    aborted: bool = False
    ell: int = 0
    istar: int = 0
    i0_size: int = 0
    n_samples: int = 0
    omega_prime: XReal = XR_ZERO
    class_sizes: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def flat_record(self):
        """Stable scalar mapping; timings stay separate so records can be
        compared net of wall-clock noise."""
        mant, exp = self.estimate.hex_parts()
        rec = {
            "algorithm": self.algorithm,
            "n": self.n,
            "capacity": str(self.capacity),
            "epsilon": repr(self.epsilon),
            "seed": self.seed,
            "estimate": self.estimate.to_string(),
            "estimate_hex_mantissa": mant,
            "estimate_exp2": exp,
            "aborted": self.aborted,
            "ell": self.ell,
            "istar": self.istar,
            "i0_size": self.i0_size,
            "n_samples": self.n_samples,
            "omega_prime": self.omega_prime.to_string(),
            "class_sizes": ";".join(
                "%d:%d" % (m, c) for m, c in self.class_sizes.items()),
        }
        for key in sorted(self.diagnostics):
            rec["diag_%s" % key] = self.diagnostics[key]
        return rec


def _check_deadline(deadline):
    if deadline is not None and time.monotonic() > deadline:
        raise _Abort


# -- the sub-quadratic pipeline ----------------------------------------------

def estimate_subquadratic(inst, params, rng=None, time_budget=None):
    params.validate(inst.n)
    deadline = None if time_budget is None else time.monotonic() + time_budget
    report = EstimateReport(XR_ZERO, "subquad", inst.n, inst.capacity,
                            params.epsilon, params.seed)
    start = time.perf_counter()
    if rng is None:
        rng = params.stream("subquad")

    if inst.total_weight() <= inst.capacity:
        report.estimate = XR_ONE.mul_pow2(inst.n)
        report.timings["total_ms"] = (time.perf_counter() - start) * 1000.0
        return report

    try:
        t0 = time.perf_counter()
        scaled, factor = scale_instance(inst, params)
        report.timings["scale_ms"] = (time.perf_counter() - t0) * 1000.0
        report.diagnostics["scale_factor"] = factor

        one = phase_one(scaled, params, rng, timings=report.timings,
                        deadline=deadline)
        report.ell = one.ell
        report.istar = one.istar
        report.i0_size = len(one.tiny_items)
        report.n_samples = one.n_samples
        report.omega_prime = one.omega_prime
        report.class_sizes = one.class_sizes
        report.diagnostics["ledger"] = one.ledger
        report.diagnostics["delta_total"] = one.sampler.delta_total
        report.diagnostics["delta_root"] = one.sampler.delta
        report.diagnostics["cc_fallbacks"] = one.sampler.fallback_count()
        for key, val in sorted(one.diag.items()):
            report.diagnostics[key] = val

        t0 = time.perf_counter()
        tiny = tuple((i, scaled.weights[i]) for i in one.tiny_items)
        sp = SecondPhaseInstance(tiny, tuple(one.partial_samples),
                                 scaled.capacity, params.epsilon,
                                 max(1, scaled.n))
        sp_diag = {}
        seed = uniform_int(rng, 0, 2 ** 62)
        total = second_phase_estimate(sp, params, stream(seed, "phase2"),
                                      diag=sp_diag)
        _check_deadline(deadline)
        report.timings["phase2_ms"] = (time.perf_counter() - t0) * 1000.0
        for key, val in sorted(sp_diag.items()):
            report.diagnostics["sp_%s" % key] = (
                val if not isinstance(val, list) else len(val))

        denom = XReal.from_int(one.n_samples).mul_pow2(len(one.tiny_items))
        report.estimate = total.mul(one.omega_prime).div(denom)
    except _Abort:
        report.aborted = True
        report.estimate = XR_ZERO
    report.timings["total_ms"] = (time.perf_counter() - start) * 1000.0
    return report


# -- rounding baseline ---------------------------------------------------------

_DP_RENORM = 2.0 ** 500
_DP_SCALE = 2.0 ** -512


def _dyer_dp(avals, top, q):
    """Table rows as block floats: row k spans subset sums of the first k
    rounded items, truncated at top.  Keeps a checkpoint every q rows and
    the total renormalization exponent."""
    row = np.zeros(top + 1)
    row[0] = 1.0
    exp = 0
    checkpoints = {0: row.copy()}
    for k, a in enumerate(avals, 1):
        if a <= top:
            new = row.copy()
            new[a:] += row[:top + 1 - a]
            row = new
        else:
            row = row.copy()
        if row.max() > _DP_RENORM:
            row *= _DP_SCALE
            exp += 512
        if k % q == 0:
            checkpoints[k] = row.copy()
    return row, exp, checkpoints


def _dyer_segment(avals, start_row, lo, hi, top):
    """Recompute rows lo..hi (inclusive) from the checkpointed row lo."""
    rows = [start_row]
    row = start_row
    for k in range(lo + 1, hi + 1):
        a = avals[k - 1]
        if a <= top:
            new = row.copy()
            new[a:] += row[:top + 1 - a]
            row = new
        else:
            row = row.copy()
        if row.max() > _DP_RENORM:
            row *= _DP_SCALE
        rows.append(row)
    return rows


def estimate_dyer(inst, params, rng=None):
    """Baseline: randomized rounding to a grid of about 2Kn cells, exact
    counting over the grid, and a sampled feasibility ratio."""
    params.validate(inst.n)
    report = EstimateReport(XR_ZERO, "dyer", inst.n, inst.capacity,
                            params.epsilon, params.seed)
    start = time.perf_counter()
    n, capacity = inst.n, inst.capacity
    if n == 0:
        report.estimate = XR_ONE
        report.timings["total_ms"] = (time.perf_counter() - start) * 1000.0
        return report
    if rng is None:
        rng = params.stream("dyer")

    k_grid = max(1, math.ceil(params.dyer_c * math.sqrt(n * math.log(n))))
    s = max(1, ceil_div(capacity, 2 * k_grid * n))
    top = capacity // s + k_grid
    report.diagnostics["K"] = k_grid
    report.diagnostics["S"] = str(s)

    t0 = time.perf_counter()
    rounded = round_weights(list(enumerate(inst.weights)), s, rng)
    avals = [a for _, _, a in rounded]
    q = max(1, math.isqrt(n))
    row_n, exp, checkpoints = _dyer_dp(avals, top, q)
    # the renormalization exponent cancels inside every backtrace ratio
    # and only matters for the total mass
    omega_round = XReal.from_float(float(row_n.sum())).mul_pow2(exp)
    report.timings["build_ms"] = (time.perf_counter() - t0) * 1000.0

    t1 = time.perf_counter()
    n_samples = params.phase1_samples(n, 1)
    report.n_samples = n_samples
    cum = np.cumsum(row_n)
    draws = rng.random(n_samples) * cum[-1]
    x = np.searchsorted(cum, draws, side="right").astype(np.int64)
    int_safe = capacity < 2 ** 62
    if int_safe:
        wsum = np.zeros(n_samples, dtype=np.int64)
    else:
        wsum = np.zeros(n_samples, dtype=object)
    seg_hi = n
    while seg_hi > 0:
        seg_lo = (seg_hi - 1) // q * q
        rows = _dyer_segment(avals, checkpoints[seg_lo], seg_lo, seg_hi, top)
        for kk in range(seg_hi, seg_lo, -1):
            prev = rows[kk - 1 - seg_lo]
            a = avals[kk - 1]
            if a > top:
                continue
            below = x - a
            ok = below >= 0
            num = np.where(ok, prev[np.where(ok, below, 0)], 0.0)
            den = num + prev[x]
            p = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
            take = rng.random(n_samples) < p
            x = np.where(take, below, x)
            if int_safe:
                wsum += np.where(take, np.int64(inst.weights[kk - 1]), 0)
            else:
                for i in np.nonzero(take)[0]:
                    wsum[i] += inst.weights[kk - 1]
        seg_hi = seg_lo
    feasible = int(np.count_nonzero(wsum <= capacity)) if int_safe else \
        sum(1 for v in wsum if v <= capacity)
    report.timings["sample_ms"] = (time.perf_counter() - t1) * 1000.0

    report.diagnostics["feasible"] = feasible
    report.omega_prime = omega_round
    if feasible:
        report.estimate = omega_round.mul(
            XReal.from_int(feasible)).div(XReal.from_int(n_samples))
    report.timings["total_ms"] = (time.perf_counter() - start) * 1000.0
    return report
