"""Knapsack instances: parsing, generation, scaling, and run parameters.

The instance file format is plain decimal text: first token n, second token
the capacity T, then n item weights.  Weights are held sorted non-decreasing;
an item's id is its position in that order.
"""

from dataclasses import dataclass
from fractions import Fraction
import hashlib
import math

from ._rand import stream, uniform_int


class InstanceError(ValueError):
    """Base for instance construction and parsing problems."""


class ParseError(InstanceError):
    """Malformed text: bad token, wrong item count, trailing garbage."""


class DomainError(InstanceError):
    """Structurally valid but out of domain: T <= 0 or a weight <= 0."""


class WeightOverCapacityError(InstanceError):
    """An item weight exceeds the capacity T."""


class KnapsackInstance:
    __slots__ = ("n", "capacity", "weights")

    def __init__(self, capacity, weights):
        if capacity <= 0:
            raise DomainError("capacity must be positive, got %d" % capacity)
        ws = sorted(int(w) for w in weights)
        for w in ws:
            if w <= 0:
                raise DomainError("weights must be positive, got %d" % w)
        if ws and ws[-1] > capacity:
            raise WeightOverCapacityError(
                "weight %d exceeds capacity %d" % (ws[-1], capacity))
        self.n = len(ws)
        self.capacity = int(capacity)
        self.weights = tuple(ws)

    def total_weight(self):
        return sum(self.weights)

    def __eq__(self, other):
        return (isinstance(other, KnapsackInstance)
                and self.capacity == other.capacity
                and self.weights == other.weights)

    def __repr__(self):
        return "KnapsackInstance(n=%d, T=%d)" % (self.n, self.capacity)


def parse_instance(text):
    """Parse 'n T w1 ... wn' (any whitespace); exact token count required."""
    tokens = text.split()
    if len(tokens) < 2:
        raise ParseError("need at least n and T")
    try:
        n = int(tokens[0])
        capacity = int(tokens[1])
        weights = [int(t) for t in tokens[2:]]
    except ValueError as err:
        raise ParseError("non-integer token in instance: %s" % err) from None
    if n < 0:
        raise ParseError("negative item count")
    if len(weights) != n:
        raise ParseError("expected %d weights, found %d" % (n, len(weights)))
    return KnapsackInstance(capacity, weights)


def serialize_instance(inst):
    head = "%d %d\n" % (inst.n, inst.capacity)
    if not inst.weights:
        return head
    return head + " ".join(str(w) for w in inst.weights) + "\n"


def instance_digest(inst):
    return hashlib.sha256(serialize_instance(inst).encode()).hexdigest()


# -- parameters -------------------------------------------------------------

@dataclass
class AlgoParams:
    """Accuracy target plus the polylog-exponent knobs.

    The knobs replace the enormous literal exponents of the asymptotic
    analysis with desk-scale values; theory_mode restores the literal
    constants for documentation-grade runs on tiny inputs.
    """

    epsilon: float = 0.25
    seed: int = 0
    bin_cap_exp: float = 1.0     # B = ceil(log2(n/eps)^bin_cap_exp) + 4
    scale_exp: float = 2.0       # scale divisor log2(n/eps)^scale_exp
    delta_exp: float = 3.0       # per-node delta = (eps/n)^delta_exp
    sample_exp: float = 1.0      # sample multiplier 16*ceil(log2(n/eps)^sample_exp)
    dyer_c: float = 4.0          # K = ceil(dyer_c * sqrt(n ln n))
    leaf_variant: str = "auto"   # auto | dp | cc
    theory_mode: bool = False
    sample_cap: int = 0          # if > 0, ceiling on either phase's samples

    def validate(self, n=None):
        if not (0.0 < self.epsilon <= 0.25):
            raise InstanceError("epsilon must lie in (0, 1/4], got %r" % self.epsilon)
        if self.theory_mode:
            if self.epsilon > 1e-4:
                raise InstanceError("theory mode needs epsilon <= 1e-4")
            if n is not None and self.epsilon <= n ** -1.5:
                raise InstanceError("theory mode needs epsilon > n^-1.5")
        for name in ("bin_cap_exp", "scale_exp", "delta_exp", "sample_exp"):
            if getattr(self, name) < 0:
                raise InstanceError("%s must be nonnegative" % name)
        if self.dyer_c <= 0:
            raise InstanceError("dyer_c must be positive")
        if self.leaf_variant not in ("auto", "dp", "cc"):
            raise InstanceError("leaf_variant must be auto, dp or cc")
        if self.seed < 0:
            raise InstanceError("seed must be nonnegative")
        if self.sample_cap < 0:
            raise InstanceError("sample_cap must be nonnegative")

    # Derived quantities.  log2 uniformly, floored at 2 so tiny n stays sane.

    def _la(self, n):
        return max(2.0, math.log2(max(2, n) / self.epsilon))

    def bin_cap(self, n):
        if self.theory_mode:
            return math.ceil(self._la(n) ** 10)
        return math.ceil(self._la(n) ** self.bin_cap_exp) + 4

    def log_pow(self, n):
        """The polylog divisor appearing in every scale S."""
        exp = 50 if self.theory_mode else self.scale_exp
        return self._la(n) ** exp

    def slack_pow(self, n):
        """Divisor of the capacity headroom term in t (half the scale power)."""
        exp = 10 if self.theory_mode else self.scale_exp / 2.0
        return self._la(n) ** exp

    def delta_node(self, n):
        if self.theory_mode:
            return 2.0 ** -min(self._la(n) ** 10, 4000.0)
        return (self.epsilon / max(2, n)) ** self.delta_exp

    def sample_mult(self, n):
        if self.theory_mode:
            return 5000.0 * self._la(n) ** 10
        return 16.0 * math.ceil(self._la(n) ** self.sample_exp)

    def phase1_samples(self, n, ell):
        if self.theory_mode:
            mult = 5000.0 * max(1.0, math.log2(max(2, n))) ** 10
        else:
            mult = self.sample_mult(n)
        want = max(1, math.ceil(mult * n / (ell * self.epsilon ** 2)))
        return min(want, self.sample_cap) if self.sample_cap else want

    def phase2_samples(self, n):
        want = max(1, math.ceil(self.sample_mult(n) / self.epsilon ** 2))
        return min(want, self.sample_cap) if self.sample_cap else want

    def scale_bound(self, n):
        """Integer lower bound (n/eps)^e that T and min weight must clear."""
        exp = 50 if self.theory_mode else 3
        frac = (Fraction(max(2, n)) / Fraction(self.epsilon)) ** exp
        return math.ceil(frac)

    def stream(self, *path):
        return stream(self.seed, *path)


def ceil_div(a, b):
    return -(-a // b)


def ceil_div_scaled(value, mult, divisor_float):
    """ceil(value / (mult * divisor_float)) exactly, for big integer value."""
    f = Fraction(divisor_float)
    return max(1, ceil_div(value * f.denominator, mult * f.numerator))


def scale_instance(inst, params):
    """Multiply all weights and T by the smallest power of two clearing the
    granularity bound; returns (scaled instance, factor)."""
    bound = params.scale_bound(inst.n)
    need = 1
    if inst.weights:
        need = max(need, ceil_div(bound, inst.capacity),
                   ceil_div(bound, min(inst.weights)))
    else:
        need = max(need, ceil_div(bound, inst.capacity))
    factor = 1 << max(0, need - 1).bit_length() if need > 1 else 1
    if factor == 1:
        return inst, 1
    scaled = KnapsackInstance(inst.capacity * factor,
                              [w * factor for w in inst.weights])
    return scaled, factor


# -- generators --------------------------------------------------------------

def generate(kind, n, capacity, seed, ell=None, classes=None):
    """Random instance of one of the named families."""
    if n < 0:
        raise InstanceError("n must be nonnegative")
    if capacity <= 0:
        raise DomainError("capacity must be positive")
    rng = stream(seed, "generate", kind, n, capacity)
    if kind == "uniform":
        ws = [uniform_int(rng, 1, capacity) for _ in range(n)]
    elif kind == "bounded_ratio":
        if ell is None or ell < 2:
            raise InstanceError("bounded_ratio needs ell >= 2")
        lo, hi = capacity // ell, (2 * capacity) // ell
        if hi <= lo:
            raise InstanceError("degenerate band: floor(2T/ell) <= floor(T/ell)")
        ws = [uniform_int(rng, lo + 1, hi) for _ in range(n)]
    elif kind == "tiny_adversarial":
        if n < 2:
            raise InstanceError("tiny_adversarial needs n >= 2")
        lg = max(1, math.ceil(math.log2(n)))
        big = (capacity * (n ** 10 - 1)) // (lg * n ** 10)
        tiny = max(1, (10 * capacity) // n ** 11)
        if big < 1:
            raise InstanceError("capacity too small for tiny_adversarial")
        ws = [big] * (n - n // 2) + [tiny] * (n // 2)
    elif kind == "custom_classes":
        if not classes:
            raise InstanceError("custom_classes needs class specs")
        total = sum(c for c, _, _ in classes)
        if total != n:
            raise InstanceError("class counts sum to %d, expected %d" % (total, n))
        ws = []
        for count, lo, hi in classes:
            if not (1 <= lo <= hi <= capacity):
                raise InstanceError("class range [%d, %d] out of [1, T]" % (lo, hi))
            ws.extend(uniform_int(rng, lo, hi) for _ in range(count))
    else:
        raise InstanceError("unknown generator kind %r" % (kind,))
    return KnapsackInstance(capacity, ws)
