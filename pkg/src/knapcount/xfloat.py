"""Nonnegative extended-exponent floating point numbers.

An XReal is a pair (m, e) with m = 0 for zero, otherwise an odd-normalized
integer mantissa; the represented value is m * 2^(e - m.bit_length() + 1),
so e is always floor(log2(value)).  The exponent is an unbounded Python int,
which is the whole point: counts like 2^200000 keep full relative precision.

Arithmetic is correctly rounded (round half to even) at the active precision,
default 96 bits, so each operation has relative error at most 2^(1-p).
"""

from contextlib import contextmanager
from fractions import Fraction
import math

_PRECISION = 96


def precision():
    return _PRECISION


def set_precision(p):
    """Set the active mantissa width in bits; returns the previous value."""
    global _PRECISION
    if p < 4:
        raise ValueError("precision must be at least 4 bits")
    old, _PRECISION = _PRECISION, p
    return old


@contextmanager
def using_precision(p):
    old = set_precision(p)
    try:
        yield
    finally:
        set_precision(old)


class NegativeResultError(ArithmeticError):
    """Raised when a subtraction would produce a negative XReal."""


def _round_to(man, lsb, p, sticky=0):
    """Round man * 2^lsb to p mantissa bits, half to even.

    sticky marks discarded value strictly below the lsb; callers that pass it
    with a mantissa already within p bits must guarantee that value stays
    under half an ulp (the division and big-gap paths arrange exactly that).
    """
    nb = man.bit_length()
    if nb <= p:
        return man, lsb
    drop = nb - p
    keep = man >> drop
    rem = man - (keep << drop)
    half = 1 << (drop - 1)
    if rem > half or (rem == half and (sticky or (keep & 1))):
        keep += 1
    return keep, lsb + drop


class XReal:
    __slots__ = ("m", "e")

    def __init__(self, m, e):
        # Canonical form: m == 0 (then e == 0) or m odd.
        if m < 0:
            raise ValueError("XReal is nonnegative")
        if m == 0:
            self.m = 0
            self.e = 0
            return
        tz = (m & -m).bit_length() - 1
        if tz:
            m >>= tz
        self.m = m
        self.e = e

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls):
        return cls(0, 0)

    @classmethod
    def one(cls):
        return cls(1, 0)

    @classmethod
    def from_int(cls, v):
        """Exact when v fits the active precision, else correctly rounded."""
        if v < 0:
            raise ValueError("XReal is nonnegative")
        if v == 0:
            return cls(0, 0)
        man, lsb = _round_to(v, 0, _PRECISION)
        return cls(man, lsb + man.bit_length() - 1)

    @classmethod
    def from_int_scaled(cls, v, shift):
        """Value v * 2^shift, rounded; v a nonnegative int, shift any int."""
        if v < 0:
            raise ValueError("XReal is nonnegative")
        if v == 0:
            return cls(0, 0)
        man, lsb = _round_to(v, shift, _PRECISION)
        return cls(man, lsb + man.bit_length() - 1)

    @classmethod
    def from_float(cls, x):
        if x < 0 or math.isnan(x) or math.isinf(x):
            raise ValueError("XReal needs a finite nonnegative value")
        if x == 0.0:
            return cls(0, 0)
        f = Fraction(x)
        return cls.from_fraction(f)

    @classmethod
    def from_fraction(cls, f):
        if f < 0:
            raise ValueError("XReal is nonnegative")
        if f == 0:
            return cls(0, 0)
        num, den = f.numerator, f.denominator
        # Scale the quotient into [2^(p+1), 2^(p+2)) so one rounded division
        # yields a correctly rounded mantissa with a sticky remainder.
        shift = _PRECISION + 2 - (num.bit_length() - den.bit_length())
        if shift >= 0:
            q, r = divmod(num << shift, den)
        else:
            q, r = divmod(num, den << -shift)
        man, lsb = _round_to(q, -shift, _PRECISION, sticky=1 if r else 0)
        return cls(man, lsb + man.bit_length() - 1)

    # -- basic queries -----------------------------------------------------

    @property
    def is_zero(self):
        return self.m == 0

    def floor_log2(self):
        if self.m == 0:
            raise ValueError("log2 of zero")
        return self.e

    def to_fraction(self):
        if self.m == 0:
            return Fraction(0)
        lsb = self.e - self.m.bit_length() + 1
        if lsb >= 0:
            return Fraction(self.m << lsb)
        return Fraction(self.m, 1 << -lsb)

    def __float__(self):
        if self.m == 0:
            return 0.0
        # Keep 53 mantissa bits and apply the exponent with ldexp.
        nb = self.m.bit_length()
        top = self.m >> (nb - 54) if nb > 54 else self.m << (54 - nb)
        try:
            return math.ldexp(float(top), self.e - 53)
        except OverflowError:
            return math.inf

    def mant_float_exp(self):
        """(mantissa in [1,2) as float, binary exponent). Zero -> (0.0, 0)."""
        if self.m == 0:
            return 0.0, 0
        nb = self.m.bit_length()
        top = self.m >> (nb - 54) if nb > 54 else self.m << (54 - nb)
        return float(top) / float(1 << 53), self.e

    # -- arithmetic --------------------------------------------------------

    def add(self, other):
        if self.m == 0:
            return other
        if other.m == 0:
            return self
        a, b = self, other
        if a.e < b.e:
            a, b = b, a
        la, lb = a.m.bit_length(), b.m.bit_length()
        lsb_a, lsb_b = a.e - la + 1, b.e - lb + 1
        gap = lsb_a - lsb_b
        if a.e - b.e > _PRECISION + 2:
            # b sits entirely below half an ulp of the result.
            if la <= _PRECISION:
                return a
            man, lsb = _round_to((a.m << 2) | 1, lsb_a - 2, _PRECISION)
            return XReal(man, lsb + man.bit_length() - 1)
        if gap >= 0:
            man = (a.m << gap) + b.m
            lsb = lsb_b
        else:
            man = a.m + (b.m << -gap)
            lsb = lsb_a
        man, lsb = _round_to(man, lsb, _PRECISION)
        return XReal(man, lsb + man.bit_length() - 1)

    def mul(self, other):
        if self.m == 0 or other.m == 0:
            return XReal(0, 0)
        man = self.m * other.m
        lsb = (self.e - self.m.bit_length() + 1) + (other.e - other.m.bit_length() + 1)
        man, lsb = _round_to(man, lsb, _PRECISION)
        return XReal(man, lsb + man.bit_length() - 1)

    def sub_nonneg(self, other):
        """self - other, requiring self >= other up to one ulp of slack."""
        if other.m == 0:
            return self
        c = self.cmp(other)
        if c == 0:
            return XReal(0, 0)
        if c < 0:
            # Tolerate cancellation noise at the precision floor.
            diff = other.to_fraction() - self.to_fraction()
            if self.m != 0 and diff <= self.to_fraction() * Fraction(1, 1 << (_PRECISION - 2)):
                return XReal(0, 0)
            raise NegativeResultError("subtraction would go negative")
        a, b = self, other
        if a.e - b.e > _PRECISION + 2:
            if a.m.bit_length() <= _PRECISION:
                return a
            man = (a.m << 2) - 1
            lsb = a.e - a.m.bit_length() + 1 - 2
            man, lsb = _round_to(man, lsb, _PRECISION)
            return XReal(man, lsb + man.bit_length() - 1)
        lsb_a = a.e - a.m.bit_length() + 1
        lsb_b = b.e - b.m.bit_length() + 1
        lsb = min(lsb_a, lsb_b)
        man = (a.m << (lsb_a - lsb)) - (b.m << (lsb_b - lsb))
        man, lsb = _round_to(man, lsb, _PRECISION)
        return XReal(man, lsb + man.bit_length() - 1)

    def div(self, other):
        if other.m == 0:
            raise ZeroDivisionError("XReal division by zero")
        if self.m == 0:
            return XReal(0, 0)
        shift = _PRECISION + 2 - (self.m.bit_length() - other.m.bit_length())
        if shift >= 0:
            q, r = divmod(self.m << shift, other.m)
        else:
            q, r = divmod(self.m, other.m << -shift)
        lsb_diff = (self.e - self.m.bit_length() + 1) - (other.e - other.m.bit_length() + 1)
        man, lsb = _round_to(q, lsb_diff - shift, _PRECISION, sticky=1 if r else 0)
        return XReal(man, lsb + man.bit_length() - 1)

    def mul_pow2(self, k):
        """Exact multiplication by 2^k."""
        if self.m == 0:
            return self
        return XReal(self.m, self.e + k)

    def cmp(self, other):
        """Exact three-way comparison on representations."""
        if self.m == 0:
            return -1 if other.m != 0 else 0
        if other.m == 0:
            return 1
        if self.e != other.e:
            return -1 if self.e < other.e else 1
        la, lb = self.m.bit_length(), other.m.bit_length()
        x = self.m << (lb - la) if la < lb else self.m
        y = other.m << (la - lb) if lb < la else other.m
        return (x > y) - (x < y)

    # -- rendering ---------------------------------------------------------

    def to_string(self):
        """Decimal mantissa with a binary exponent, e.g. '1.5 e+10' for 3*2^9.

        Carries enough digits for an exact round trip at the active precision.
        """
        if self.m == 0:
            return "0"
        digits = max(17, math.ceil(_PRECISION * math.log10(2)) + 2)
        nb = self.m.bit_length()
        # mantissa-in-[1,2) * 10^(digits-1), rounded half up.
        scaled = self.m * 10 ** (digits - 1)
        d = (scaled + (1 << (nb - 2))) >> (nb - 1) if nb >= 2 else scaled
        s = str(d)
        if len(s) > digits:  # rounded up to 2.000..
            s = s[:digits]
        mant = s[0] + "." + s[1:].rstrip("0")
        if mant.endswith("."):
            mant += "0"
        return "%s e%+d" % (mant, self.e)

    @classmethod
    def from_string(cls, s):
        s = s.strip()
        if s == "0":
            return cls(0, 0)
        try:
            mant_s, exp_s = s.split("e")
            mant = Fraction(mant_s.strip())
            k = int(exp_s)
        except (ValueError, ZeroDivisionError) as err:
            raise ValueError("malformed XReal string: %r" % (s,)) from err
        if k >= 0:
            return cls.from_fraction(mant * (1 << k))
        return cls.from_fraction(mant / (1 << -k))

    def hex_parts(self):
        """Exact (mantissa hex, exponent) pair for machine round trips."""
        return hex(self.m), self.e

    @classmethod
    def from_hex_parts(cls, mhex, e):
        return cls(int(mhex, 16), e)

    def __repr__(self):
        return "XReal(%s)" % self.to_string()

    # -- operators ---------------------------------------------------------

    __add__ = add
    __mul__ = mul
    __sub__ = sub_nonneg
    __truediv__ = div

    def __eq__(self, other):
        return isinstance(other, XReal) and self.m == other.m and self.e == other.e

    def __hash__(self):
        return hash((self.m, self.e))

    def __lt__(self, other):
        return self.cmp(other) < 0

    def __le__(self, other):
        return self.cmp(other) <= 0

    def __gt__(self, other):
        return self.cmp(other) > 0

    def __ge__(self, other):
        return self.cmp(other) >= 0

    def __bool__(self):
        return self.m != 0


XR_ZERO = XReal(0, 0)
XR_ONE = XReal(1, 0)


def xr_add(a, b):
    return a.add(b)


def xr_mul(a, b):
    return a.mul(b)


def xr_cmp(a, b):
    return a.cmp(b)


def xr_sub_nonneg(a, b):
    return a.sub_nonneg(b)


def xr_sum(values):
    acc = XR_ZERO
    for v in values:
        acc = acc.add(v)
    return acc
