"""Approximate knapsack samplers.

The central object pairs an approximate counting table f-hat on the
weight grid {0, S, 2S, ..., LS} with a frozen random rounding w of the
true item weights, and draws near-uniform samples from
{X : w(X) <= capacity}.  Two leaf constructions (dynamic programming
and color-coded counting), a small-items closed form and an n-choose-1
candidate list cover the base cases; round_sampler coarsens the grid
and merge_samplers takes products, carrying the (S, L, sigma^2, delta)
budget bookkeeping on every node.

Tables may be physically truncated above a caller-supplied grid cap
when the capacity regime makes the tail unreachable; reading past the
stored range raises instead of guessing.
"""

import bisect
import math
from fractions import Fraction
from itertools import accumulate, combinations

import numpy as np

from ._rand import uniform_int
from .convolution import conv_exact, sum_approx_conv
from .instance import ceil_div
from .primes import sample_prime
from .xfloat import XR_ONE, XR_ZERO, XReal, xr_add, xr_sub_nonneg

LEAF_DP = "leaf_dp"
LEAF_CC = "leaf_cc"
SMALL_ITEMS = "small_items"
N_CHOOSE_1 = "nchoose1"
ROUND = "round"
MERGE = "merge"

# f-hat distortion charged per constructor, folded into delta_total.
_XR_SLACK = 2.0 ** -90       # 96-bit mantissa arithmetic
_FLOAT_TABLE_SLACK = 2.0 ** -38  # block-float leaf tables

_I64_CELL_LIMIT = 40_000_000
_BIG_CELL_LIMIT = 200_000


class SamplerError(Exception):
    pass


def round_weights(items, S, rng):
    """Unbiased rounding of (id, weight) pairs to the grid; (id, W, a) out.

    a*S is the rounded weight: floor(W/S)*S, bumped one grid step with
    probability (W mod S)/S.  Pure integer Bernoulli; no draw is consumed
    when W is already on the grid, so construction variants that share a
    stream stay aligned.
    """
    out = []
    for iid, w in items:
        if w < 0:
            raise SamplerError("negative weight for item %r" % (iid,))
        q, r = divmod(w, S)
        if r and uniform_int(rng, 0, S - 1) < r:
            q += 1
        out.append((iid, w, q))
    return out


_NEG_EXP = -(1 << 40)    # exponent stand-in for zero-mass cells


class CountFn:
    """f-hat: XReal counts indexed by grid point on {0, S, ..., LS}."""

    __slots__ = ("S", "L", "values", "_pref", "_shadow", "_phys")

    def __init__(self, S, L, values):
        self.S = S
        self.L = L
        self.values = list(values)
        if not self.values or len(self.values) > L + 1:
            raise SamplerError("table length %d invalid for L=%d"
                               % (len(self.values), L))
        self._phys = len(self.values)
        self._pref = None
        self._shadow = None

    @property
    def phys(self):
        return self._phys

    def check(self):
        for x, v in enumerate(self.values):
            if v.m and v.cmp(XR_ONE) < 0:
                raise SamplerError("count at grid point %d lies in (0,1)" % x)

    def value(self, x):
        if x < 0 or x > self.L:
            return XR_ZERO
        if x >= self._phys:
            raise SamplerError("value index %d beyond stored table" % x)
        if self.values is None:
            raise SamplerError("exact entries were compacted away")
        return self.values[x]

    def prefix(self, x):
        """Sum of values at grid indices <= x."""
        if x < 0:
            return XR_ZERO
        x = min(x, self.L)
        if x >= self._phys:
            raise SamplerError("prefix index %d beyond stored table" % x)
        if self._pref is None:
            if self.values is None:
                raise SamplerError("exact entries were compacted away")
            acc = XR_ZERO
            pref = []
            for v in self.values:
                nxt = xr_add(acc, v)
                if nxt.cmp(acc) < 0:  # keep the prefix monotone under rounding
                    nxt = acc
                acc = nxt
                pref.append(acc)
            self._pref = pref
        return self._pref[x]

    def total_stored(self):
        return self.prefix(self._phys - 1)

    def compact(self):
        """Trade the exact entries for the float shadow.

        Queries only ever read the shadow, so a consumed interior node can
        drop its XReal lists; value/prefix raise afterwards.
        """
        if self.values is None:
            return
        self.shadow()
        self.values = None
        self._pref = None

    def shadow(self):
        """(vm, ve, pm, pe): float64 mantissa/int exponent views."""
        if self._shadow is None:
            self.prefix(0)
            n = len(self.values)
            vm = np.zeros(n)
            ve = np.zeros(n, dtype=np.int64)
            pm = np.zeros(n)
            pe = np.zeros(n, dtype=np.int64)
            for i, v in enumerate(self.values):
                if v.m:
                    vm[i], ve[i] = v.mant_float_exp()
            for i, v in enumerate(self._pref):
                if v.m:
                    pm[i], pe[i] = v.mant_float_exp()
            self._shadow = (vm, ve, pm, pe)
        return self._shadow


class Sampler:
    """One node of the sampler tree.

    Immutable after construction apart from the stats counters; queries
    draw randomness from a caller-supplied stream, so concurrent queries
    with distinct streams are safe.
    """

    def __init__(self, kind, S, L, sigma2, delta, table, tiny, children,
                 frozen, ledger, delta_total, path=""):
        self.kind = kind
        self.S = S
        self.L = L
        self.sigma2 = sigma2
        self.delta = delta
        self.table = table
        self.tiny = tuple(tiny)
        self.children = tuple(children)
        self.frozen = frozen
        self.ledger = dict(ledger)
        self.delta_total = delta_total
        self.path = path
        self.stats = {"queries": 0, "cc_rejects": 0, "cc_fallbacks": 0}
        self._universe = None

    # -- bookkeeping ---------------------------------------------------

    def ledger_sum(self):
        s = sum(self.ledger.values())
        for c in self.children:
            s += c.ledger_sum()
        return s

    def fallback_count(self):
        n = self.stats["cc_fallbacks"]
        for c in self.children:
            n += c.fallback_count()
        return n

    def recompute_params(self):
        """(L, sigma2, delta) rebuilt from the leaves by the node rules."""
        if self.kind in (LEAF_DP, LEAF_CC):
            B = self.frozen["B"]
            mw = self.frozen["max_weight"]
            L = B * ceil_div(mw, self.S) if mw else 0
            return L, Fraction(B * self.S * self.S, 4), self.delta
        if self.kind == SMALL_ITEMS:
            n = len(self.frozen["rounded"])
            return n, Fraction(n * self.S * self.S, 4), self.delta
        if self.kind == N_CHOOSE_1:
            return self.L, Fraction(self.S * self.S, 4), 0.0
        if self.kind == ROUND:
            cl, cs2, cd = self.children[0].recompute_params()
            L = ceil_div(cl * self.children[0].S, self.S) if cl else 0
            return L, cs2 + Fraction(self.S * self.S, 4), cd
        ll, ls2, ld = self.children[0].recompute_params()
        rl, rs2, rd = self.children[1].recompute_params()
        return ll + rl, ls2 + rs2, 4.0 * (ld + rd)

    def universe(self):
        """All item ids this node's solutions can mention (tiny included)."""
        if self._universe is None:
            if self.kind in (LEAF_DP, LEAF_CC, SMALL_ITEMS):
                u = set(self.frozen["rounded"])
            elif self.kind == N_CHOOSE_1:
                u = set()
                for ids, _w, _a in self.frozen["rounded"]:
                    u.update(ids)
            else:
                u = set()
                for c in self.children:
                    u.update(c.universe())
            self._universe = frozenset(u)
        return self._universe

    def rounded_weight(self, ids):
        """Replay the frozen w on an id set (tiny items contribute 0)."""
        if self.kind in (LEAF_DP, LEAF_CC):
            rnd = self.frozen["rounded"]
            return sum(rnd[i][1] for i in ids) * self.S
        if self.kind == SMALL_ITEMS:
            rnd = self.frozen["rounded"]
            return sum(rnd[i][1] for i in ids) * self.S
        if self.kind == N_CHOOSE_1:
            key = tuple(sorted(ids))
            for cids, _w, a in self.frozen["rounded"]:
                if tuple(sorted(cids)) == key:
                    return a * self.S
            raise SamplerError("id set is not a candidate")
        if self.kind == ROUND:
            w = self.children[0].rounded_weight(ids)
            thr = self.frozen["thresholds"]
            y = bisect.bisect_left(thr, w)
            if y == len(thr):
                raise SamplerError("weight beyond stored thresholds")
            return y * self.S
        left, right = self.children
        lu = left.universe()
        lids = [i for i in ids if i in lu]
        rids = [i for i in ids if i not in lu]
        return left.rounded_weight(lids) + right.rounded_weight(rids)

    def dump(self, indent=0):
        pad = "  " * indent
        out = ["%s%s[%s] S=%d L=%d phys=%d sigma2=%s delta=%.4g dtot=%.4g "
               "tiny=%d" % (pad, self.kind, self.path, self.S, self.L,
                            self.table.phys, self.sigma2, self.delta,
                            self.delta_total, len(self.tiny))]
        for label in sorted(self.ledger):
            out.append("%s  ! %s: %.4g" % (pad, label, self.ledger[label]))
        for c in self.children:
            out.append(c.dump(indent + 1))
        return "\n".join(out)

    # -- queries ---------------------------------------------------------

    def query(self, capacity, rng):
        return self.query_batch([capacity], rng)[0]

    def query_batch(self, capacities, rng):
        """One (ids, roundedWeight) sample per capacity.

        Near-uniform over {X : w(X) <= capacity}; tiny items never appear
        in the returned id tuples and the weight is a multiple of S.

        Capacities travel down the tree as int64 arrays and ids are
        collected at the leaves only, so big batches stay cheap.
        """
        caps = list(capacities)
        for c in caps:
            if c < 0:
                raise SamplerError("negative query capacity")
        if not caps:
            return []
        if max(caps) >= 1 << 62:
            raise SamplerError("query capacity too large for the batch engine")
        acc = [[] for _ in caps]
        w = self._qbv(np.asarray(caps, dtype=np.int64), rng, acc)
        return [(tuple(sorted(ids)), int(wi)) for ids, wi in zip(acc, w)]

    def _qbv(self, caps, rng, acc):
        self.stats["queries"] += len(caps)
        if self.kind == MERGE:
            return self._qv_merge(caps, rng, acc)
        if self.kind == ROUND:
            return self._qv_round(caps, rng, acc)
        if self.kind == LEAF_DP:
            return self._qv_leaf_dp(caps, rng, acc)
        if self.kind == LEAF_CC:
            return self._qv_leaf_cc(caps, rng, acc)
        if self.kind == SMALL_ITEMS:
            return self._qv_small(caps, rng, acc)
        return self._qv_nchoose1(caps, rng, acc)

    def _xcap_vec(self, caps):
        x = caps // self.S
        t = self.table
        over = x >= t.phys
        if over.any():
            if t.phys <= t.L:
                c = int(caps[int(np.argmax(over))])
                raise SamplerError("capacity %d beyond truncated table (%s)"
                                   % (c, self.path))
            x = np.minimum(x, t.phys - 1)
        return x

    # leaf, DP variant

    def _qv_leaf_dp(self, caps, rng, acc):
        out = np.zeros(len(caps), dtype=np.int64)
        if not self._ids:
            return out
        xs = self._xcap_vec(caps)
        if self._eng == "i64":
            self._dp_vec_i64(xs, rng, acc, out)
        else:
            draw = self._dp_draw_big if self._eng == "big" \
                else self._dp_draw_grp
            for xv in np.unique(xs):
                draw(int(xv), np.nonzero(xs == xv)[0], acc, out, rng)
        return out

    def _dp_vec_i64(self, xs, rng, acc, out):
        M = self._M
        n = M.shape[0] - 1
        ux, inv = np.unique(xs, return_inverse=True)
        cums = np.cumsum(M[n, ux, :], axis=1)
        draws = rng.integers(1, cums[inv, -1] + 1, dtype=np.int64)
        zq = (cums[inv] < draws[:, None]).sum(axis=1)
        for i in np.nonzero(zq)[0]:
            z = int(zq[i])
            r = int(draws[i]) - int(cums[inv[i], z - 1])
            ids = acc[i]
            w = 0
            kk, xx = n, int(xs[i])
            while z:
                col = M[:kk + 1, xx, z]
                j = int(np.searchsorted(col, r))
                r -= int(col[j - 1])
                a = self._a[j - 1]
                ids.append(self._ids[j - 1])
                w += a
                xx -= a
                z -= 1
                kk = j - 1
            out[i] = w * self.S

    def _dp_draw_big(self, x, idxs, acc, out, rng):
        Mb = self._Mb
        n = len(Mb) - 1
        cum = list(accumulate(Mb[n][x]))
        tot = cum[-1]
        for i in idxs:
            r = uniform_int(rng, 1, tot)
            z = bisect.bisect_left(cum, r)
            if z:
                r -= cum[z - 1]
            ids = acc[i]
            w = 0
            kk, xx = n, x
            while z:
                col = [Mb[j][xx][z] for j in range(kk + 1)]
                j = bisect.bisect_left(col, r)
                r -= col[j - 1]
                a = self._a[j - 1]
                ids.append(self._ids[j - 1])
                w += a
                xx -= a
                z -= 1
                kk = j - 1
            out[i] = w * self.S

    def _dp_draw_grp(self, x, idxs, acc, out, rng):
        G = self._G
        nv = G.shape[0] - 1
        zdim = G.shape[2]
        cum = np.cumsum(G[nv, x, :])
        tot = float(cum[-1])
        for i in idxs:
            target = rng.random() * tot
            z = min(int(np.searchsorted(cum, target, side="right")), zdim - 1)
            r = target - (float(cum[z - 1]) if z else 0.0)
            ids = acc[i]
            w = 0
            xx, zz = x, z
            for vi in range(nv, 0, -1):
                if not zz:
                    break
                v = self._gvals[vi - 1]
                members = self._gids[vi - 1]
                jtop = min(len(members), zz)
                if v:
                    jtop = min(jtop, xx // v)
                take = jtop
                for j in range(jtop + 1):
                    wgt = math.comb(len(members), j) * float(
                        G[vi - 1, xx - j * v, zz - j])
                    if r < wgt or j == jtop:
                        take = j
                        break
                    r -= wgt
                if take:
                    pick = rng.choice(len(members), size=take, replace=False)
                    ids.extend(members[int(t)] for t in pick)
                    xx -= take * v
                    zz -= take
                    w += take * v
            out[i] = w * self.S

    # leaf, color-coded variant

    def _qv_leaf_cc(self, caps, rng, acc):
        out = np.zeros(len(caps), dtype=np.int64)
        if not self._ids:
            return out
        xs = self._xcap_vec(caps)
        cum = self._cumfx
        for xv in np.unique(xs):
            x = int(xv)
            tot = cum[x]
            for i in np.nonzero(xs == xv)[0]:
                r = uniform_int(rng, 1, tot)
                xc = bisect.bisect_left(cum, r, 0, x + 1)
                rr = r - (cum[xc - 1] if xc else 0)
                zcum = list(accumulate(self._Mz[xc]))
                z = bisect.bisect_left(zcum, rr)
                ids, w = self._cc_draw_cell(xc, z, rng)
                acc[i].extend(ids)
                out[i] = w
        return out

    def _cc_draw_cell(self, x, z, rng):
        if z == 0:
            return ((), 0)
        if z == 1:
            members = self._aval_ids.get(x, ())
            pick = members[uniform_int(rng, 0, len(members) - 1)]
            return ((pick,), x * self.S)
        target = self._Mz[x][z]
        n = len(self._ids)
        z2 = z * z
        for _ in range(self._rcap):
            colors = rng.integers(0, z2, size=n)
            groups = [[] for _ in range(z2)]
            for idx in range(n):
                groups[int(colors[idx])].append(idx)
            tables = self._cc_round_tables(groups, x, z)
            good = tables[-1][x][z] if not self._np_ok else int(tables[-1][x, z])
            r = uniform_int(rng, 1, target)
            if r > good:
                self.stats["cc_rejects"] += 1
                continue
            return self._cc_decode(groups, tables, x, z, r)
        self.stats["cc_fallbacks"] += 1
        return self._cc_greedy(x, z)

    def _cc_round_tables(self, groups, x, z):
        if self._np_ok:
            cur = np.zeros((x + 1, z + 1), dtype=np.int64)
            cur[0, 0] = 1
            tables = [cur]
            for g in groups:
                nxt = cur.copy()
                for idx in g:
                    a = self._a[idx]
                    if a <= x:
                        if a:
                            nxt[a:, 1:] += cur[:x + 1 - a, :z]
                        else:
                            nxt[:, 1:] += cur[:, :z]
                tables.append(nxt)
                cur = nxt
            return tables
        cur = [[0] * (z + 1) for _ in range(x + 1)]
        cur[0][0] = 1
        tables = [cur]
        for g in groups:
            nxt = [row[:] for row in cur]
            for idx in g:
                a = self._a[idx]
                if a <= x:
                    for xx in range(x, a - 1, -1):
                        src = cur[xx - a]
                        dst = nxt[xx]
                        for zz in range(1, z + 1):
                            dst[zz] += src[zz - 1]
            tables.append(nxt)
            cur = nxt
        return tables

    def _cc_decode(self, groups, tables, x, z, r):
        def cell(t, xx, zz):
            return int(t[xx, zz]) if self._np_ok else t[xx][zz]

        chosen = []
        xx, zz = x, z
        for k in range(len(groups), 0, -1):
            prev = tables[k - 1]
            base = cell(prev, xx, zz)
            if r <= base:
                continue
            r -= base
            hit = False
            for idx in groups[k - 1]:
                a = self._a[idx]
                if a > xx or zz == 0:
                    continue
                wgt = cell(prev, xx - a, zz - 1)
                if r <= wgt:
                    chosen.append(idx)
                    xx -= a
                    zz -= 1
                    hit = True
                    break
                r -= wgt
            if not hit:
                raise SamplerError("rank decode walked off the table")
        if zz:
            raise SamplerError("rank decode ended with items missing")
        ids = tuple(sorted(self._ids[i] for i in chosen))
        return (ids, x * self.S)

    def _cc_greedy(self, x, z):
        """Deterministic valid cell member, used past the rejection cap."""
        n = len(self._ids)
        feas = [[[False] * (z + 1) for _ in range(x + 1)] for _ in range(n + 1)]
        feas[n][0][0] = True
        for k in range(n - 1, -1, -1):
            a = self._a[k]
            for xx in range(x + 1):
                row = feas[k][xx]
                nxt = feas[k + 1]
                for zz in range(z + 1):
                    ok = nxt[xx][zz]
                    if not ok and zz and a <= xx:
                        ok = nxt[xx - a][zz - 1]
                    row[zz] = ok
        ids = []
        xx, zz = x, z
        for k in range(n):
            if zz and self._a[k] <= xx and feas[k + 1][xx - self._a[k]][zz - 1]:
                ids.append(self._ids[k])
                xx -= self._a[k]
                zz -= 1
        if zz:
            raise SamplerError("greedy fallback found no valid subset")
        return (tuple(sorted(ids)), x * self.S)

    # small items

    def _qv_small(self, caps, rng, acc):
        out = np.zeros(len(caps), dtype=np.int64)
        i1 = self._i1
        n1 = len(i1)
        ts = np.minimum(caps // self.S, n1)
        for tv in np.unique(ts):
            tmax = int(tv)
            cum = list(accumulate(math.comb(n1, t) for t in range(tmax + 1)))
            tot = cum[-1]
            for i in np.nonzero(ts == tv)[0]:
                r = uniform_int(rng, 1, tot)
                t = bisect.bisect_left(cum, r)
                if t:
                    pick = rng.choice(n1, size=t, replace=False)
                    acc[i].extend(i1[int(j)] for j in pick)
                out[i] = t * self.S
        return out

    # n-choose-1

    def _qv_nchoose1(self, caps, rng, acc):
        out = np.zeros(len(caps), dtype=np.int64)
        xs = self._xcap_vec(caps)
        for xv in np.unique(xs):
            idxs = np.nonzero(xs == xv)[0]
            cnt = bisect.bisect_right(self._sorted_a, int(xv))
            if cnt == 0:
                raise SamplerError("no candidate fits capacity %d"
                                   % int(caps[idxs[0]]))
            picks = rng.integers(0, cnt, size=len(idxs))
            for i, p in zip(idxs, picks):
                ids, a = self._by_weight[int(p)]
                acc[i].extend(ids)
                out[i] = a * self.S
        return out

    # rounding node

    def _qv_round(self, caps, rng, acc):
        thr = self._thr_np
        ys = caps // self.S
        over = ys >= len(thr)
        if over.any():
            if len(thr) <= self.L:
                c = int(caps[int(np.argmax(over))])
                raise SamplerError("capacity %d beyond stored thresholds" % c)
            ys = np.minimum(ys, len(thr) - 1)
        w = self.children[0]._qbv(thr[ys], rng, acc)
        return np.searchsorted(thr, w, side="left").astype(np.int64) * self.S

    # merge node

    def _qv_merge(self, caps, rng, acc):
        left, right = self.children
        lvm, lve, _, _ = left.table.shadow()
        _, _, rpm, rpe = right.table.shadow()
        xs = self._xcap_vec(caps)
        ux, inv = np.unique(xs, return_inverse=True)
        nl = len(lvm)
        ymax = min(int(ux[-1]), nl - 1)
        ys = np.arange(ymax + 1)
        lv_row = lvm[ys]
        le_row = lve[ys]
        draws = rng.random(len(xs))
        yq = np.empty(len(xs), dtype=np.int64)
        # Row chunks bound the split-mass matrix; each chunk serves its own
        # queries before being dropped, so memory stays flat.
        rstep = max(1, 2_000_000 // (ymax + 1))
        qstep = max(1, 4_000_000 // (ymax + 1))
        for rlo in range(0, len(ux), rstep):
            rhi = min(len(ux), rlo + rstep)
            diff = ux[rlo:rhi, None] - ys[None, :]
            # x - y may pass the right table's stored range only when the
            # range is complete (phys = L+1), where the prefix saturates.
            ridx = np.minimum(np.maximum(diff, 0), len(rpm) - 1)
            wm = np.where(diff >= 0, lv_row[None, :] * rpm[ridx], 0.0)
            we = np.where(wm > 0.0, le_row[None, :] + rpe[ridx], _NEG_EXP)
            rowtop = we.max(axis=1)
            if rowtop.min() <= _NEG_EXP:
                raise SamplerError("merge query found no feasible split")
            shift = np.clip(we - rowtop[:, None], -1100, 0).astype(np.int32)
            cum = np.cumsum(np.ldexp(wm, shift), axis=1)
            qsel = np.nonzero((inv >= rlo) & (inv < rhi))[0]
            for qlo in range(0, len(qsel), qstep):
                qq = qsel[qlo : qlo + qstep]
                rows = cum[inv[qq] - rlo]
                targ = draws[qq] * rows[:, -1]
                yq[qq] = (rows <= targ[:, None]).sum(axis=1)
        np.minimum(yq, np.minimum(xs, nl - 1), out=yq)
        rw = right._qbv((xs - yq) * self.S, rng, acc)
        lw = left._qbv(xs * self.S - rw, rng, acc)
        return lw + rw

    # -- enumeration (test support) ---------------------------------------

    def enumerate_solutions(self, capacity, limit=1 << 16):
        """All distinct (ids, roundedWeight) outcomes with weight <= capacity.

        Ground truth for distribution tests: the query target is uniform
        over this list.  Tiny items never appear in outcomes.
        """
        if self.kind in (LEAF_DP, LEAF_CC):
            rnd = self.frozen["rounded"]
            ids = list(rnd)
            B = self.frozen["B"]
            total = sum(math.comb(len(ids), z)
                        for z in range(min(B, len(ids)) + 1))
            if total > limit:
                raise SamplerError("enumeration too large")
            out = []
            for z in range(min(B, len(ids)) + 1):
                for combo in combinations(ids, z):
                    w = sum(rnd[i][1] for i in combo) * self.S
                    if w <= capacity:
                        out.append((tuple(sorted(combo)), w))
            return out
        if self.kind == SMALL_ITEMS:
            i1 = self.frozen["i1"]
            if 2 ** len(i1) > limit:
                raise SamplerError("enumeration too large")
            out = []
            for z in range(len(i1) + 1):
                if z * self.S > capacity:
                    break
                for combo in combinations(i1, z):
                    out.append((tuple(sorted(combo)), z * self.S))
            return out
        if self.kind == N_CHOOSE_1:
            out = []
            for ids, _w, a in self.frozen["rounded"]:
                if a * self.S <= capacity:
                    out.append((tuple(sorted(ids)), a * self.S))
            return out
        if self.kind == ROUND:
            thr = self.frozen["thresholds"]
            out = []
            for ids, w in self.children[0].enumerate_solutions(
                    self.children[0].L * self.children[0].S, limit):
                y = bisect.bisect_left(thr, w)
                if y == len(thr):
                    raise SamplerError("weight beyond stored thresholds")
                if y * self.S <= capacity:
                    out.append((ids, y * self.S))
            return out
        left, right = self.children
        lo = left.enumerate_solutions(left.L * left.S, limit)
        ro = right.enumerate_solutions(right.L * right.S, limit)
        if len(lo) * len(ro) > limit:
            raise SamplerError("enumeration too large")
        out = []
        for ids1, w1 in lo:
            for ids2, w2 in ro:
                if w1 + w2 <= capacity:
                    out.append((tuple(sorted(ids1 + ids2)), w1 + w2))
        return out


# -- exact counting helper for the color-coded leaf --------------------------

def subset_sums_count_mod_p(a, t, p):
    """Subset-sum counts of a, mod prime p, truncated at degree t.

    Divide-and-conquer product of (1 + x^{a_i}) over GF(p); g[s] is the
    number of subsets of a summing to s, reduced mod p.
    """
    if p <= t:
        raise SamplerError("modulus must exceed the truncation degree")
    polys = []
    for v in a:
        if v < 1:
            raise SamplerError("packed weights must be positive")
        # weights beyond t only contribute past the truncation point
        if v <= t:
            poly = [0] * (v + 1)
            poly[0] = 1
            poly[v] = 1
        else:
            poly = [1]
        polys.append(poly)
    if not polys:
        return [1] + [0] * t
    while len(polys) > 1:
        nxt = []
        for i in range(0, len(polys) - 1, 2):
            c = conv_exact(polys[i], polys[i + 1])
            del c[t + 1:]
            nxt.append([v % p for v in c])
        if len(polys) % 2:
            nxt.append(polys[-1])
        polys = nxt
    g = [v % p for v in polys[0]]
    g += [0] * (t + 1 - len(g))
    return g


# -- constructors -------------------------------------------------------------

def _leaf_phys(L, cap):
    return L + 1 if cap is None else min(L, cap) + 1


def leaf_dp_build(items, S, B, delta, rng, *, cap=None, path="leaf_dp"):
    """Bottom-level sampler over subsets of at most B items, DP variant."""
    if B < 1 or S < 1:
        raise SamplerError("need B >= 1 and S >= 1")
    items = list(items)
    rounded = round_weights(items, S, rng)
    max_w = max((w for _, w, _ in rounded), default=0)
    L = B * ceil_div(max_w, S) if max_w else 0
    phys = _leaf_phys(L, cap)
    inc = [(iid, a) for iid, _w, a in rounded if a <= phys - 1]
    ids = [iid for iid, _ in inc]
    avals = [a for _, a in inc]
    # No mass above the bin's own reach; everything past it is zero.
    L = min(L, sum(avals))
    phys = min(phys, L + 1)
    n = len(inc)
    zmax = min(B, n)
    count_bound = sum(math.comb(n, z) for z in range(zmax + 1))
    cells = (n + 1) * phys * (zmax + 1)

    smp = Sampler(
        LEAF_DP, S, L, Fraction(B * S * S, 4), float(delta), None, (), (),
        {"rounded": {iid: (w, a) for iid, w, a in rounded},
         "B": B, "max_weight": max_w,
         "excluded": len(rounded) - n},
        {}, _XR_SLACK, path)
    smp._ids = ids
    smp._a = avals

    if count_bound < 2 ** 62 and cells <= _I64_CELL_LIMIT:
        smp._eng = "i64"
        M = np.zeros((n + 1, phys, zmax + 1), dtype=np.int64)
        M[0, :, 0] = 1
        for k, a in enumerate(avals, 1):
            M[k] = M[k - 1]
            if zmax:
                if a:
                    if phys - a > 0:
                        M[k, a:, 1:] += M[k - 1, :phys - a, :zmax]
                else:
                    M[k, :, 1:] += M[k - 1, :, :zmax]
        smp._M = M
        tots = M[n].sum(axis=1)
        values = [XReal.from_int(int(tots[0]))]
        for x in range(1, phys):
            values.append(XReal.from_int(int(tots[x] - tots[x - 1])))
    elif cells <= _BIG_CELL_LIMIT:
        smp._eng = "big"
        Mb = [[[0] * (zmax + 1) for _ in range(phys)] for _ in range(n + 1)]
        for x in range(phys):
            Mb[0][x][0] = 1
        for k, a in enumerate(avals, 1):
            prev = Mb[k - 1]
            cur = Mb[k]
            for x in range(phys):
                row = cur[x]
                prow = prev[x]
                row[0] = prow[0]
                if x >= a:
                    sub = prev[x - a]
                    for z in range(1, zmax + 1):
                        row[z] = prow[z] + sub[z - 1]
                else:
                    row[1:] = prow[1:]
        smp._Mb = Mb
        tots = [sum(Mb[n][x]) for x in range(phys)]
        values = [XReal.from_int(tots[0])]
        for x in range(1, phys):
            values.append(XReal.from_int(tots[x] - tots[x - 1]))
    else:
        smp._eng = "grp"
        groups = {}
        for iid, a in inc:
            groups.setdefault(a, []).append(iid)
        gvals = sorted(groups)
        gids = [groups[v] for v in gvals]
        nv = len(gvals)
        G = np.zeros((nv + 1, phys, zmax + 1))
        G[0, :, 0] = 1.0
        gexp = 0
        for vi in range(1, nv + 1):
            v = gvals[vi - 1]
            cnt = len(gids[vi - 1])
            prev = G[vi - 1]
            cur = prev.copy()
            for j in range(1, min(cnt, zmax) + 1):
                off = j * v
                if off >= phys:
                    break
                cur[off:, j:] += math.comb(cnt, j) * prev[:phys - off,
                                                          :zmax + 1 - j]
            if cur.max() > 2.0 ** 600:
                G[:vi] *= 2.0 ** -512
                cur *= 2.0 ** -512
                gexp += 512
            G[vi] = cur
        smp._G = G
        smp._gvals = gvals
        smp._gids = gids
        smp._gexp = gexp
        tots = G[nv].sum(axis=1)
        values = []
        prev_t = 0.0
        for x in range(phys):
            d = float(tots[x]) - prev_t
            prev_t = float(tots[x])
            if d <= 0.5:
                values.append(XR_ZERO)
            elif d < 1.0:
                values.append(XR_ONE)
            else:
                values.append(XReal.from_float(d).mul_pow2(gexp))
        smp.delta_total = _FLOAT_TABLE_SLACK

    table = CountFn(S, L, values)
    table.check()
    smp.table = table
    return smp


def leaf_cc_build(items, S, B, delta, rng, *, cap=None, path="leaf_cc"):
    """Bottom-level sampler, color-coded counting variant.

    Same external contract (and frozen rounding stream) as leaf_dp_build;
    the table comes from subset-sum residues modulo a sampled prime, and
    queries run rejection rounds over random z*z-colorings.
    """
    if B < 1 or S < 1:
        raise SamplerError("need B >= 1 and S >= 1")
    items = list(items)
    rounded = round_weights(items, S, rng)
    max_w = max((w for _, w, _ in rounded), default=0)
    L = B * ceil_div(max_w, S) if max_w else 0
    phys = _leaf_phys(L, cap)
    inc = [(iid, a) for iid, _w, a in rounded if a <= phys - 1]
    ids = [iid for iid, _ in inc]
    avals = [a for _, a in inc]
    # No mass above the bin's own reach; everything past it is zero.
    L = min(L, sum(avals))
    phys = min(phys, L + 1)
    n = len(inc)
    zmax = min(B, n)
    xtop = phys - 1

    # Prime window: the lower end is widened beyond 2|I|^B when needed so
    # that p also exceeds the packed truncation degree.
    navail = max(2, len(items))
    stride = L + 1
    t = zmax * stride + xtop
    lo = max(2 * navail ** B, t + 1)
    p = sample_prime(lo, 2 * lo, rng)

    Mz = [[0] * (zmax + 1) for _ in range(xtop + 1)]
    if n:
        degs = [a + stride for a in avals]
        g = subset_sums_count_mod_p(degs, t, p)
        for z in range(zmax + 1):
            base = z * stride
            top = min(xtop, t - base)
            for x in range(top + 1):
                Mz[x][z] = g[base + x]
    else:
        Mz[0][0] = 1
    fx = [sum(row) for row in Mz]
    values = [XReal.from_int(v) for v in fx]

    rcap = max(1, math.ceil(math.log2(10.0 / delta))) if delta > 0 else 64
    smp = Sampler(
        LEAF_CC, S, L, Fraction(B * S * S, 4), float(delta), None, (), (),
        {"rounded": {iid: (w, a) for iid, w, a in rounded},
         "B": B, "max_weight": max_w,
         "excluded": len(rounded) - n, "prime": p},
        {"prime_mr": 2.0 ** -100, "cc_reject_overflow": 2.0 ** -rcap},
        _XR_SLACK, path)
    smp._ids = ids
    smp._a = avals
    smp._Mz = Mz
    smp._fx = fx
    smp._cumfx = list(accumulate(fx))
    smp._rcap = rcap
    smp._np_ok = sum(math.comb(n, z) for z in range(zmax + 1)) < 2 ** 62
    aval_ids = {}
    for iid, a in inc:
        aval_ids.setdefault(a, []).append(iid)
    smp._aval_ids = aval_ids
    table = CountFn(S, L, values)
    table.check()
    smp.table = table
    return smp


def small_items_build(items, S, delta, rng, *, cap=None, path="small"):
    """Sampler for items no heavier than the scale; closed-form table.

    Weights round to 0 or S; the zero-rounded items become tiny items and
    are excluded from query results.
    """
    if S < 1:
        raise SamplerError("need S >= 1")
    items = list(items)
    for _iid, w in items:
        if w > S:
            raise SamplerError("small-items weight %d above scale %d" % (w, S))
    rounded = round_weights(items, S, rng)
    i0 = tuple(iid for iid, _w, a in rounded if a == 0)
    i1 = tuple(iid for iid, _w, a in rounded if a == 1)
    n = len(rounded)
    L = n
    phys = _leaf_phys(L, cap)
    two = 1 << len(i0)
    values = [XReal.from_int(two * math.comb(len(i1), x)) if x <= len(i1)
              else XR_ZERO for x in range(phys)]
    smp = Sampler(
        SMALL_ITEMS, S, L, Fraction(n * S * S, 4), float(delta), None, i0, (),
        {"rounded": {iid: (w, a) for iid, w, a in rounded},
         "i0": i0, "i1": i1},
        {}, _XR_SLACK, path)
    smp._i1 = list(i1)
    table = CountFn(S, L, values)
    table.check()
    smp.table = table
    return smp


def nchoose1_build(candidates, S, rng, *, cap=None, path="nchoose1"):
    """Sampler choosing one candidate set from an explicit list.

    Candidates are (idSet, weight) pairs with positive weight; the query
    returns a uniform candidate among those whose rounded weight fits.
    """
    if S < 1:
        raise SamplerError("need S >= 1")
    candidates = list(candidates)
    if not candidates:
        raise SamplerError("empty candidate list")
    for _ids, w in candidates:
        if w <= 0:
            raise SamplerError("candidate weight must be positive")
    rounded = round_weights(
        [(i, w) for i, (_ids, w) in enumerate(candidates)], S, rng)
    frozen_list = []
    for (ids, w), (_i, _w, a) in zip(candidates, rounded):
        frozen_list.append((tuple(sorted(ids)), w, a))
    L = max(a for _ids, _w, a in frozen_list)
    phys = _leaf_phys(L, cap)
    kept = sorted(((a, i) for i, (_ids, _w, a) in enumerate(frozen_list)
                   if a <= phys - 1))
    counts = {}
    for a, _i in kept:
        counts[a] = counts.get(a, 0) + 1
    values = [XReal.from_int(counts.get(x, 0)) for x in range(phys)]
    smp = Sampler(
        N_CHOOSE_1, S, L, Fraction(S * S, 4), 0.0, None, (), (),
        {"rounded": frozen_list,
         "excluded": len(frozen_list) - len(kept)},
        {}, _XR_SLACK, path)
    smp._sorted_a = [a for a, _i in kept]
    smp._by_weight = [(frozen_list[i][0], a) for a, i in kept]
    table = CountFn(S, L, values)
    table.check()
    smp.table = table
    return smp


def _sub_floor(cur, prev):
    if cur.cmp(prev) <= 0:
        return XR_ZERO
    return xr_sub_nonneg(cur, prev)


def round_sampler(child, Sprime, rng, *, cap=None, path="round"):
    """Coarsen a sampler's grid from child.S to Sprime.

    Thresholds r_y are drawn uniformly in [y*S', (y+1)*S'); the new table
    aggregates the child's counts so that prefix sums agree at every
    threshold, which is what makes the query mapping distribution-safe.
    """
    if Sprime < child.S:
        raise SamplerError("round scale %d below child scale %d"
                           % (Sprime, child.S))
    Lp = ceil_div(child.L * child.S, Sprime) if child.L else 0
    phys = _leaf_phys(Lp, cap)
    thr = []
    for y in range(phys):
        thr.append(y * Sprime + uniform_int(rng, 0, Sprime - 1))
    values = []
    prev = XR_ZERO
    for r in thr:
        xr = min(r // child.S, child.L)
        curp = child.table.prefix(xr)
        v = _sub_floor(curp, prev)
        if v.m and v.cmp(XR_ONE) < 0:
            v = XR_ONE  # a nonzero window holds at least one solution
        values.append(v)
        prev = curp
    smp = Sampler(
        ROUND, Sprime, Lp,
        child.sigma2 + Fraction(Sprime * Sprime, 4),
        child.delta, None, child.tiny, (child,),
        {"thresholds": thr}, {},
        (1.0 + child.delta_total) * (1.0 + _XR_SLACK) - 1.0, path)
    smp._thr_np = np.asarray(thr, dtype=np.int64)
    table = CountFn(Sprime, Lp, values)
    table.check()
    smp.table = table
    return smp


def _is_unit_table(values):
    return len(values) == 1 and values[0].cmp(XR_ONE) == 0


def merge_samplers(left, right, delta_conv, rng, *, cap=None, path="merge"):
    """Product sampler over the disjoint union of two item universes."""
    if left.S != right.S:
        raise SamplerError("scale mismatch: %d vs %d" % (left.S, right.S))
    if not (left.delta < 0.1 and right.delta < 0.1):
        raise SamplerError("merge needs both child deltas below 1/10")
    if set(left.tiny) & set(right.tiny):
        raise SamplerError("tiny item sets must be disjoint")
    L = left.L + right.L
    phys = _leaf_phys(L, cap)
    f1 = left.table.values
    f2 = right.table.values
    conv_used = False
    if _is_unit_table(f2):
        values = list(f1[:phys])
    elif _is_unit_table(f1):
        values = list(f2[:phys])
    else:
        if not 0.0 < delta_conv < 0.25:
            raise SamplerError("delta_conv must lie in (0, 1/4)")
        values = sum_approx_conv(f1, f2, delta_conv, rng)
        del values[phys:]
        conv_used = True
    dtot = ((1.0 + left.delta_total) * (1.0 + right.delta_total) *
            (1.0 + (delta_conv if conv_used else 0.0)) - 1.0)
    smp = Sampler(
        MERGE, left.S, L,
        left.sigma2 + right.sigma2,
        4.0 * (left.delta + right.delta),
        None, left.tiny + right.tiny, (left, right),
        {}, {"conv_fail": 0.0} if conv_used else {}, dtot, path)
    table = CountFn(left.S, L, values)
    table.check()
    smp.table = table
    return smp
