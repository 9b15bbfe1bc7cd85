"""Primality testing and prime sampling helpers.

Miller-Rabin is deterministic below 3.3 * 10^24 (known witness set) and
randomized above, with error below 2^-100; callers that care track that
probability in their failure ledgers.
"""

import random

# Witnesses proven sufficient for n < 3_317_044_064_679_887_385_961_981.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_MR_DETERMINISTIC_BOUND = 3_317_044_064_679_887_385_961_981
_MR_RANDOM_ROUNDS = 64

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


def _mr_round(n, d, s, a):
    x = pow(a, d, n)
    if x == 1 or x == n - 1:
        return True
    for _ in range(s - 1):
        x = x * x % n
        if x == n - 1:
            return True
    return False


def _randint(rng, lo, hi):
    """Uniform integer in [lo, hi] from either a random.Random or numpy Generator."""
    if hasattr(rng, "integers"):
        return lo + int(rng.integers(0, hi - lo + 1))
    return rng.randrange(lo, hi + 1)


def is_probable_prime(n, rng=None):
    """Miller-Rabin primality test; exact below 3.3e24."""
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    if n < _MR_DETERMINISTIC_BOUND:
        witnesses = _MR_WITNESSES
    else:
        r = rng if rng is not None else random.Random(0xC0FFEE ^ n)
        witnesses = [_randint(r, 2, n - 2) for _ in range(_MR_RANDOM_ROUNDS)]
    return all(_mr_round(n, d, s, a) for a in witnesses)


def next_prime(n):
    """Smallest prime strictly greater than n."""
    c = n + 1
    if c <= 2:
        return 2
    if c % 2 == 0:
        c += 1
    while not is_probable_prime(c):
        c += 2
    return c


def sample_prime(lo, hi, rng):
    """Random prime in [lo, hi] via Miller-Rabin over random odd candidates.

    Falls back to scanning, and then to the smallest prime above the interval,
    when sampling misses (thin or prime-free intervals).
    """
    lo = max(lo, 2)
    if hi < lo:
        return next_prime(lo - 1)
    span = hi - lo + 1
    for _ in range(4 * max(16, span.bit_length() * 8)):
        c = _randint(rng, lo, hi)
        if c > 2:
            c |= 1
        if c > hi:
            continue
        if is_probable_prime(c):
            return c
    for c in range(lo, hi + 1):
        if is_probable_prime(c):
            return c
    return next_prime(hi)
