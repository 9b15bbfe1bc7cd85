"""Exact reference counters used to validate the estimators.

Everything here is slow and trustworthy: meet-in-the-middle
enumeration for small n, a capacity-indexed dynamic program for small
capacities, and an empirical total-variation helper for sampler tests.
"""

from bisect import bisect_right, insort

from .instance import DomainError, KnapsackInstance


def _subset_sums(weights):
    """Sorted list of all subset sums of weights."""
    sums = [0]
    for w in weights:
        merged = []
        shifted = [s + w for s in sums]
        i = j = 0
        while i < len(sums) or j < len(shifted):
            if j >= len(shifted) or (i < len(sums) and sums[i] <= shifted[j]):
                merged.append(sums[i])
                i += 1
            else:
                merged.append(shifted[j])
                j += 1
        sums = merged
    return sums


def count_le(weights, cap):
    """Exact number of subsets of weights with sum at most cap."""
    if cap < 0:
        return 0
    n = len(weights)
    left = _subset_sums(weights[: n // 2])
    right = _subset_sums(weights[n // 2 :])
    total = 0
    j = len(right)
    for s in left:
        rem = cap - s
        if rem < 0:
            break
        while j > 0 and right[j - 1] > rem:
            j -= 1
        total += j
    return total


def count_enum(inst):
    """Exact solution count by meet-in-the-middle enumeration (n <= 30)."""
    if inst.n > 30:
        raise DomainError("count_enum handles at most 30 items, got %d" % inst.n)
    return count_le(inst.weights, inst.capacity)


def count_dp(inst):
    """Exact solution count via a capacity-indexed DP (capacity <= 10**7)."""
    if inst.capacity > 10**7:
        raise DomainError(
            "count_dp handles capacities up to 10**7, got %d" % inst.capacity
        )
    t = inst.capacity
    table = [0] * (t + 1)
    table[0] = 1
    for w in inst.weights:
        for x in range(t, w - 1, -1):
            if table[x - w]:
                table[x] += table[x - w]
    return sum(table)


def count_band(inst, lo, hi):
    """Exact number of subsets with lo < weight(X) <= hi (n <= 30)."""
    if inst.n > 30:
        raise DomainError("count_band handles at most 30 items, got %d" % inst.n)
    if lo >= hi:
        raise DomainError("count_band: need lo < hi")
    return count_le(inst.weights, hi) - count_le(inst.weights, lo)


def solutions(inst):
    """All solutions as sorted tuples of item ids (n <= 22)."""
    if inst.n > 22:
        raise DomainError("solutions handles at most 22 items, got %d" % inst.n)
    out = []
    ws = inst.weights

    def rec(i, budget, picked):
        if i == len(ws):
            out.append(tuple(picked))
            return
        rec(i + 1, budget, picked)
        if ws[i] <= budget:
            picked.append(i)
            rec(i + 1, budget - ws[i], picked)
            picked.pop()

    rec(0, inst.capacity, [])
    out.sort()
    return out


def empirical_tv(samples, target):
    """Total variation distance between sample frequencies and target.

    target maps outcomes to probabilities (summing to one); any sample
    outside its support raises DomainError.
    """
    if not samples:
        raise DomainError("empirical_tv needs at least one sample")
    counts = {}
    for s in samples:
        if s not in target:
            raise DomainError("sample %r is outside the target support" % (s,))
        counts[s] = counts.get(s, 0) + 1
    n = len(samples)
    dist = 0.0
    for key, prob in target.items():
        dist += abs(counts.get(key, 0) / n - prob)
    return dist / 2.0
