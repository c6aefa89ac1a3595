"""Prime tables and the candidate prime sets used to split a lattice.

Primes are indexed from one (``P_1 = 2``) with the sentinel ``P_0 = 1``.
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .errors import ResourceLimitError

__all__ = [
    "PrimeIndexer",
    "nth_prime",
    "prime_index_of_least_geq",
    "next_prime",
    "is_prime",
    "ceil_log_minus_one",
    "candidate_count",
    "candidate_primes",
    "lemma2_bound",
    "C1",
    "C2",
]

C1 = 2.832
C2 = 2.3

# primes beyond this are out of scope for a desk-scale sieve
HARD_LIMIT = 2_000_000_000


def _simple_sieve(limit: int) -> np.ndarray:
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    flags[4::2] = False
    for p in range(3, math.isqrt(limit) + 1, 2):
        if flags[p]:
            flags[p * p :: 2 * p] = False
    return np.flatnonzero(flags).astype(np.int64)


def _segment(low: int, high: int, base: np.ndarray) -> np.ndarray:
    """Primes in ``[low, high)`` given all base primes up to sqrt(high)."""
    flags = np.ones(high - low, dtype=bool)
    for p in base.tolist():
        if p * p >= high:
            break
        start = max(p * p, -(-low // p) * p)
        flags[start - low :: p] = False
    if low < 2:
        flags[: 2 - low] = False
    return np.flatnonzero(flags).astype(np.int64) + low


class PrimeIndexer:
    """Cached, on-demand growing table of primes.

    The table is extended with a segmented sieve whose upper limit doubles
    until the request is covered. Reads take no lock once the cache is
    large enough; growth is serialized.
    """

    def __init__(self, initial_limit: int = 1 << 16, hard_limit: int = HARD_LIMIT):
        self.hard_limit = hard_limit
        self._lock = threading.Lock()
        self.sieve_limit = max(int(initial_limit), 16)
        self.cache = _simple_sieve(self.sieve_limit)

    def _grow_to(self, limit: int) -> None:
        with self._lock:
            if limit <= self.sieve_limit:
                return
            if limit > self.hard_limit:
                raise ResourceLimitError(f"prime sieve limit {limit} exceeds hard cap {self.hard_limit}")
            new_limit = self.sieve_limit
            while new_limit < limit:
                new_limit *= 2
            new_limit = min(new_limit, self.hard_limit)
            base = _simple_sieve(math.isqrt(new_limit) + 1)
            parts = [self.cache]
            low = self.sieve_limit + 1
            step = 1 << 24
            while low <= new_limit:
                high = min(low + step, new_limit + 1)
                parts.append(_segment(low, high, base))
                low = high
            self.cache = np.concatenate(parts)
            self.sieve_limit = new_limit

    def _ensure_count(self, count: int) -> None:
        while len(self.cache) < count:
            # Rosser-Schoenfeld upper estimate for the count-th prime, used to pre-size only
            n = max(count, 6)
            estimate = int(n * (math.log(n) + math.log(math.log(n)))) + 16
            self._grow_to(max(estimate, 2 * self.sieve_limit))

    def nth_prime(self, q: int) -> int:
        """Return ``P_q`` with ``P_0 = 1``."""
        if q < 0:
            raise ValueError("prime index must be non-negative")
        if q == 0:
            return 1
        self._ensure_count(q)
        return int(self.cache[q - 1])

    def index_of_least_geq(self, s: int) -> int:
        """Smallest ``q >= 1`` with ``s <= P_q``."""
        if s < 1:
            raise ValueError("s must be positive")
        if self.sieve_limit < 2 * s:
            self._grow_to(2 * s)
        cache = self.cache
        return int(np.searchsorted(cache, s, side="left")) + 1

    def primes_from_index(self, q: int, count: int) -> np.ndarray:
        """``count`` consecutive primes ``P_q, ..., P_{q+count-1}`` (q >= 1)."""
        if q < 1:
            raise ValueError("q must be at least 1")
        self._ensure_count(q + count - 1)
        return self.cache[q - 1 : q - 1 + count].copy()

    def primes_in_range(self, low: int, high: int) -> np.ndarray:
        """All primes ``p`` with ``low <= p < high``."""
        if high > self.sieve_limit:
            self._grow_to(high)
        cache = self.cache
        i = np.searchsorted(cache, low, side="left")
        j = np.searchsorted(cache, high, side="left")
        return cache[i:j].copy()


_DEFAULT = PrimeIndexer()


def default_indexer() -> PrimeIndexer:
    return _DEFAULT


def nth_prime(q: int) -> int:
    return _DEFAULT.nth_prime(q)


def prime_index_of_least_geq(s: int) -> int:
    return _DEFAULT.index_of_least_geq(s)


def is_prime(n: int) -> bool:
    n = int(n)
    if n < 2:
        return False
    if n <= _DEFAULT.sieve_limit:
        i = np.searchsorted(_DEFAULT.cache, n)
        return i < len(_DEFAULT.cache) and int(_DEFAULT.cache[i]) == n
    # deterministic Miller-Rabin for n < 3.3e24
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for p in small:
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime strictly greater than ``n``."""
    n = int(n)
    if n < 2:
        return 2
    if n + 1 < _DEFAULT.sieve_limit:
        i = np.searchsorted(_DEFAULT.cache, n, side="right")
        if i < len(_DEFAULT.cache):
            return int(_DEFAULT.cache[i])
    c = n + 1
    while not is_prime(c):
        c += 1
    return c


def ceil_log_minus_one(base: int, value: int) -> int:
    """Exact ``ceil(-1 + log_base(value))`` for integers ``base >= 2``, ``value >= 1``.

    Equals ``e - 1`` where ``e`` is the least non-negative integer with
    ``base**e >= value``.
    """
    if base < 2 or value < 1:
        raise ValueError("need base >= 2 and value >= 1")
    e, power = 0, 1
    while power < value:
        power *= base
        e += 1
    return e - 1


def candidate_count(s: int, tilde_m: int, p_q: int) -> int:
    return max(1, 2 * (s - 1) * ceil_log_minus_one(p_q, tilde_m))


def candidate_primes(s: int, tilde_m: int, indexer: PrimeIndexer | None = None) -> np.ndarray:
    """The ``K`` consecutive primes starting at the least prime ``>= s``.

    ``K = max(1, 2(s-1) * ceil(-1 + log_{P_q} tilde_m))``. Within this set a
    prime exists that leaves at least half of any ``s`` distinct integers of
    spread ``tilde_m`` collision free.
    """
    s, tilde_m = int(s), int(tilde_m)
    if s < 1:
        raise ValueError("s must be positive")
    if s > tilde_m:
        raise ValueError(f"s={s} exceeds tilde_M={tilde_m}; s distinct integers need spread >= s")
    ix = indexer or _DEFAULT
    q = ix.index_of_least_geq(s)
    p_q = ix.nth_prime(q)
    return ix.primes_from_index(q, candidate_count(s, tilde_m, p_q))


def lemma2_bound(s: int, tilde_m: int) -> float:
    """Upper bound on the largest candidate prime.

    ``2`` for ``s = 1``, else ``C1 s log_s(M) ln(C2 s log_s(M))``.
    """
    if s < 1 or tilde_m < s:
        raise ValueError("need 1 <= s <= tilde_M")
    if s == 1:
        return 2.0
    log_s = math.log(tilde_m) / math.log(s)
    return C1 * s * log_s * math.log(C2 * s * log_s)
