"""Second-phase counting: tiny items against the phase-one partial samples.

Given the tiny item set and N partial samples (id set, true weight), the
task is to count pairs (X0, i) with X0 a tiny subset and
W(X0) + W(X_i) <= T.  Solutions are classified by the heaviest tiny item
they contain; each class becomes a small generalized knapsack instance
solved with the same sampler machinery, truncated after r classes.
"""

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from ._rand import stream, uniform_int
from .instance import ceil_div, ceil_div_scaled
from .sampler import (
    SamplerError,
    leaf_dp_build,
    merge_samplers,
    nchoose1_build,
    round_sampler,
    small_items_build,
)
from .xfloat import XR_ONE, XR_ZERO, XReal

_CONV_DELTA_FLOOR = 2.0 ** -40
_COMPACT_CELLS = 2048


class SecondPhaseError(Exception):
    pass


@dataclass(frozen=True)
class SecondPhaseInstance:
    """Tiny items, candidate samples, and the capacity they share.

    tiny: ((id, weight), ...) kept sorted by descending weight.
    candidates: ((idSet, totalWeight), ...) as produced by phase one.
    n is the originating instance size; it only drives constants.
    """

    tiny: tuple
    candidates: tuple
    capacity: int
    epsilon: float
    n: int

    def __post_init__(self):
        if self.capacity <= 0:
            raise SecondPhaseError("capacity must be positive")
        if not (0.0 < self.epsilon <= 0.25):
            raise SecondPhaseError("epsilon must lie in (0, 1/4]")
        if self.n < 1:
            raise SecondPhaseError("n must be at least 1")
        seen = set()
        for tid, w in self.tiny:
            if not isinstance(tid, int) or tid < 0:
                raise SecondPhaseError("tiny ids must be nonnegative ints")
            if tid in seen:
                raise SecondPhaseError("duplicate tiny id %r" % (tid,))
            seen.add(tid)
            if w < 0:
                raise SecondPhaseError("tiny weights must be nonnegative")
        for ids, w in self.candidates:
            if w < 0:
                raise SecondPhaseError("candidate weights must be nonnegative")
        ordered = tuple(sorted(self.tiny, key=lambda p: (-p[1], p[0])))
        object.__setattr__(self, "tiny", ordered)
        object.__setattr__(self, "candidates", tuple(self.candidates))

    @property
    def tiny_total(self):
        return sum(w for _, w in self.tiny)


def second_phase_cleanup(inst):
    """Split candidates into removed / absorbed / retained.

    Candidates heavier than T can never pair with anything; candidates
    that fit even alongside the whole tiny set contribute exactly
    2^|I0| each and move into the returned base term.  What remains
    satisfies T - W(I0) < W <= T.
    """
    total_tiny = inst.tiny_total
    k = len(inst.tiny)
    base = XR_ZERO
    kept = []
    for ids, w in inst.candidates:
        if w > inst.capacity:
            continue
        if w + total_tiny <= inst.capacity:
            base = base.add(XR_ONE.mul_pow2(k))
        else:
            kept.append((ids, w))
    return replace(inst, candidates=tuple(kept)), base


def _truncation_depth(inst):
    k = len(inst.tiny)
    if k == 0:
        return 0
    lg = math.log2(max(2, inst.n))
    arg = max(2.0, 100000.0 * inst.n * lg * lg / inst.epsilon)
    return min(k, math.ceil(math.log2(arg)))


def _class_scales(total, m, logpow):
    """Level scales for the tiny-item tree, root first."""
    height = m.bit_length() - 1
    return [ceil_div_scaled(total, m, logpow * 2.0 ** (h / 2.0))
            for h in range(height + 1)]


def _conv_delta(dl, dr):
    return min(0.2, max(0.4 * (dl + dr), _CONV_DELTA_FLOOR))


def _level_caps(scales, cap_t):
    """Physical bounds per level; each rounding step widens the support
    its child must store by one scale step, tracked exactly."""
    caps = [ceil_div(cap_t, scales[0]) + 2]
    for h in range(1, len(scales)):
        caps.append(((caps[h - 1] + 1) * scales[h - 1] - 1) // scales[h] + 1)
    return caps


def _compact(smp):
    if smp.table.phys > _COMPACT_CELLS:
        smp.table.compact()


def _fold_tree(level, scales, caps, rng):
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


def _band_estimate(items, band_total, middle, params, n, rng, diag=None):
    """Z_j: approximate count of (subset of items, candidate) pairs whose
    combined weight stays within band_total.

    items: tiny items below the class pivot; middle: (candidateIndex,
    shiftedWeight) with shifted weights in (0, band_total].
    """
    count = len(items)
    m = 1 << max(0, (count - 1).bit_length())
    logpow = params.log_pow(n)
    slackpow = params.slack_pow(n)
    scales = _class_scales(band_total, m, logpow)
    s0 = scales[0]
    height = m.bit_length() - 1

    tq = Fraction(band_total) + Fraction(band_total) / (
        count * Fraction(slackpow))
    t = max(1, ceil_div(tq.numerator, tq.denominator * s0))
    if t * s0 < band_total:
        raise SecondPhaseError("threshold below capacity")
    slack_int = ceil_div_scaled(band_total, count, slackpow)
    cap_t = band_total + slack_int + s0
    caps = _level_caps(scales, cap_t)

    delta_leaf = params.delta_node(n) / 8.0 ** (height + 1)
    level = [leaf_dp_build([it], scales[-1], 1, delta_leaf, rng, cap=caps[-1])
             for it in items]
    level += [small_items_build([], scales[-1], 0.0, rng, cap=caps[-1])
              for _ in range(m - count)]
    tree = _fold_tree(level, scales, caps, rng)

    cands = [((-(idx + 1),), w) for idx, w in middle]
    root_cap = caps[0]
    picker = nchoose1_build(cands, s0, rng, cap=root_cap)
    merged = merge_samplers(tree, picker, _conv_delta(tree.delta, 0.0),
                            rng, cap=root_cap)
    _compact(tree)
    _compact(picker)

    omega = merged.table.prefix(min(t, merged.L))
    if omega.is_zero:
        return XR_ZERO, 0
    n_draw = params.phase2_samples(n)
    if diag is not None:
        diag.append(n_draw)
    tiny_w = {tid: w for tid, w in items}
    shifted = dict(middle)
    hits = 0
    for ids, _ in merged.query_batch([t * s0] * n_draw, rng):
        true = 0
        cand = None
        for i in ids:
            if i < 0:
                cand = -i - 1
            else:
                true += tiny_w[i]
        true += shifted[cand]
        if true <= band_total:
            hits += 1
    if hits == 0:
        return XR_ZERO, n_draw
    z = omega.mul(XReal.from_int(hits)).div(XReal.from_int(n_draw))
    return z, n_draw


def second_phase_estimate(inst, params, rng=None, diag=None):
    """Hybrid count of feasible (tiny subset, candidate) pairs.

    Cleans the instance, classifies by heaviest tiny item down to the
    truncation depth, and solves each class with a padded binary tree
    over the lighter tiny items merged against a candidate picker.
    """
    if rng is None:
        rng = params.stream("secondphase")
    reduced, base = second_phase_cleanup(inst)
    retained = len(reduced.candidates)
    total = base.add(XReal.from_int(retained))
    k = len(reduced.tiny)
    if k == 0 or retained == 0:
        return total

    depth = _truncation_depth(reduced)
    if diag is not None:
        diag["r"] = depth
        diag["retained"] = retained
        diag["draws"] = []
    cap = reduced.capacity
    for j in range(1, depth + 1):
        pivot_id, pivot_w = reduced.tiny[j - 1]
        below = reduced.tiny[j:]
        band_total = sum(w for _, w in below)
        w_low = cap - pivot_w - band_total
        always = 0
        middle = []
        for idx, (ids, w) in enumerate(reduced.candidates):
            if w <= w_low:
                always += 1
            elif w <= w_low + band_total:
                middle.append((idx, w - w_low))
        if always:
            total = total.add(XReal.from_int(always).mul_pow2(len(below)))
        if not middle or band_total == 0:
            continue
        seed = uniform_int(rng, 0, 2 ** 62)
        z, _ = _band_estimate(below, band_total, middle, params, reduced.n,
                              stream(seed, "band", j),
                              diag=None if diag is None else diag["draws"])
        total = total.add(z)
    return total
