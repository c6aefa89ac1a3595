"""Single rank-1 lattices, their modulus map, and three constructors.

Generating vectors are kept as tuples of Python ints because the
mixed-radix and CRT constructions overflow 64 bits quickly. All inner
products ``k . z`` are either formed exactly with arbitrary-width integers
or reduced component by component modulo the lattice size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ResourceLimitError, SearchExhausted, ValidationError
from .freqset import FrequencySet, expansion
from .numbertheory import next_prime

__all__ = [
    "Rank1Lattice",
    "CbcPolicy",
    "InnerProducts",
    "modulus_image",
    "is_reconstructing",
    "build_mixed_radix",
    "build_crt",
    "build_cbc",
    "build_lattice",
    "tilde_M",
    "tilde_M_bound_dNM",
    "tilde_M_bound_l1",
    "lattice_nodes",
    "node_block",
    "read_lattice",
    "write_lattice",
]

INT64_SAFE = 1 << 62
# the lat2 modulus is a product of d primes; refuse products wider than this
WIDE_INT_BITS = 1 << 20
SOURCES = ("lat1", "lat2", "cbc", "user")


@dataclass(frozen=True)
class Rank1Lattice:
    z: tuple
    M: int
    source: str = "user"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(int(v) for v in self.z))
        object.__setattr__(self, "M", int(self.M))
        if self.M < 1:
            raise ValidationError("lattice size must be positive")
        if any(v < 0 for v in self.z):
            raise ValidationError("generating vector entries must be non-negative")
        if self.source not in SOURCES:
            raise ValidationError(f"unknown lattice source {self.source!r}")

    @property
    def dim(self) -> int:
        return len(self.z)


@dataclass(frozen=True)
class CbcPolicy:
    """Search settings for :func:`build_cbc`.

    ``growth`` is the factor by which the lattice size is increased after a
    failed pass once ``linear_steps`` primes have been tried one by one
    (1.0 always walks prime by prime); ``tries`` bounds the number of
    candidate values tested per component before the pass is declared failed.
    """

    growth: float = 1.2
    linear_steps: int = 32
    tries: int = 32
    seed: int = 0


ROW_CHUNK = 1 << 20


def _row_chunks(n_rows: int, n_cols: int):
    step = max(1, ROW_CHUNK // max(1, n_cols))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


def _max_abs(fs: FrequencySet) -> np.ndarray:
    return np.maximum(np.abs(fs.freqs.min(axis=0)), np.abs(fs.freqs.max(axis=0)))


def _fits_int64(fs: FrequencySet, z) -> bool:
    bound = sum(int(a) * int(b) for a, b in zip(_max_abs(fs).tolist(), z))
    return bound < INT64_SAFE


def exact_dots(fs: FrequencySet, z):
    """Exact ``k . z`` for every frequency.

    Returns an int64 array when the result provably fits, otherwise an
    object array of Python ints.
    """
    z = [int(v) for v in z]
    if len(z) != fs.dim:
        raise ValidationError(f"generating vector has length {len(z)}, frequency set has dimension {fs.dim}")
    if _fits_int64(fs, z):
        zz = np.asarray(z, dtype=np.int64)
        out = np.empty(fs.size, dtype=np.int64)
        for sl in _row_chunks(fs.size, fs.dim):
            out[sl] = fs.freqs[sl] @ zz
        return out
    acc = np.zeros(fs.size, dtype=object)
    cols = fs.freqs.T
    for t, zt in enumerate(z):
        if zt:
            acc += cols[t].astype(object) * zt
    return acc


class InnerProducts:
    """Inner products ``k . z`` of one frequency set with one generating vector.

    Provides the exact extremes (for ``tilde_M``) and fast residues modulo
    any prime. When the exact values fit into 64 bits they are stored once;
    when only their spread fits, shifted values are stored; otherwise residues
    are formed on the fly from per-component reductions.
    """

    def __init__(self, fs: FrequencySet, z):
        self.fs = fs
        self.z = tuple(int(v) for v in z)
        if len(self.z) != fs.dim:
            raise ValidationError(f"generating vector has length {len(self.z)}, frequency set has dimension {fs.dim}")
        dots = exact_dots(fs, self.z)
        if dots.dtype == object:
            self.min = int(min(dots))
            self.max = int(max(dots))
            spread = self.max - self.min
            if spread < INT64_SAFE:
                self._shifted = np.array([int(v) - self.min for v in dots], dtype=np.int64)
                self._exact = None
            else:
                self._shifted = None
                self._exact = dots
        else:
            self.min = int(dots.min())
            self.max = int(dots.max())
            self._shifted = dots - self.min
            self._exact = None

    @property
    def tilde_m(self) -> int:
        return self.max - self.min + 1

    def spread(self, indices=None) -> int:
        """``max - min + 1`` of the inner products over a subset."""
        if indices is None:
            return self.tilde_m
        if self._shifted is not None:
            vals = self._shifted[indices]
            return int(vals.max()) - int(vals.min()) + 1
        vals = [int(v) for v in self._exact[indices]]
        return max(vals) - min(vals) + 1

    def mod(self, p: int, indices=None) -> np.ndarray:
        """Non-negative residues ``(k . z) mod p`` as int64 (``p < 2**31``)."""
        p = int(p)
        if self._shifted is not None:
            vals = self._shifted if indices is None else self._shifted[indices]
            return (vals % p + self.min % p) % p
        freqs = self.fs.freqs if indices is None else self.fs.freqs[indices]
        return _residues_int64(freqs, self.z, p)

    def mod_exact(self, m: int, indices=None) -> np.ndarray:
        """Residues modulo an arbitrary-width modulus (object array if needed)."""
        m = int(m)
        if m < (1 << 31):
            return self.mod(m, indices)
        if self._shifted is not None:
            vals = self._shifted if indices is None else self._shifted[indices]
            if m < INT64_SAFE:
                return (vals % m + self.min % m) % m
            return np.array([(int(v) + self.min) % m for v in vals], dtype=object)
        vals = self._exact if indices is None else self._exact[indices]
        return np.array([int(v) % m for v in vals], dtype=object)


def _residues_int64(freqs: np.ndarray, z, p: int) -> np.ndarray:
    zr = np.array([v % p for v in z], dtype=np.int64)
    d = freqs.shape[1]
    if d * (p - 1) ** 2 < INT64_SAFE:
        out = np.empty(freqs.shape[0], dtype=np.int64)
        for sl in _row_chunks(freqs.shape[0], d):
            out[sl] = (freqs[sl] % p) @ zr % p
        return out
    acc = np.zeros(freqs.shape[0], dtype=np.int64)
    for t in range(d):
        acc = (acc + (freqs[:, t] % p) * zr[t]) % p
    return acc


def modulus_image(fs: FrequencySet, z, M: int) -> np.ndarray:
    """Residues ``k . z mod M`` aligned with the frequency order.

    Each component is reduced modulo ``M`` before accumulating, so no full
    width inner product is formed. For ``M`` beyond 31 bits the accumulation
    runs on Python integers.
    """
    z = [int(v) for v in z]
    M = int(M)
    if len(z) != fs.dim:
        raise ValidationError(f"generating vector has length {len(z)}, frequency set has dimension {fs.dim}")
    if M < 1:
        raise ValidationError("modulus must be positive")
    if M < (1 << 31):
        return _residues_int64(fs.freqs, z, M)
    zr = [v % M for v in z]
    acc = np.zeros(fs.size, dtype=object)
    for t, zt in enumerate(zr):
        if zt:
            col = np.array([int(v) % M for v in fs.freqs[:, t]], dtype=object)
            acc = (acc + col * zt) % M
    return acc


def is_reconstructing(fs: FrequencySet, z, M: int) -> bool:
    res = modulus_image(fs, z, M)
    if res.dtype == object:
        return len(set(res.tolist())) == fs.size
    return np.unique(res).size == fs.size


def build_mixed_radix(fs: FrequencySet) -> Rank1Lattice:
    """``z = (1, N+1, ..., (N+1)^(d-1))``, ``M = (N+1)^d`` with ``N`` the expansion."""
    n, _ = expansion(fs)
    b = n + 1
    z = tuple(b**t for t in range(fs.dim))
    return Rank1Lattice(z, b**fs.dim, "lat1", {"N_I": n})


def build_crt(fs: FrequencySet, max_bits: int = WIDE_INT_BITS) -> Rank1Lattice:
    """``M = q_1 ... q_d``, ``z_t = M / q_t`` with ``q_1 = dN + d + 1`` and
    each further ``q`` the next prime."""
    d = fs.dim
    n, _ = expansion(fs)
    qs = [d * n + d + 1]
    for _ in range(d - 1):
        qs.append(next_prime(qs[-1]))
    bits = sum(q.bit_length() for q in qs)
    if bits > max_bits:
        raise ResourceLimitError(f"lat2 modulus needs about {bits} bits, budget is {max_bits}")
    M = math.prod(qs)
    z = tuple(M // q for q in qs)
    return Rank1Lattice(z, M, "lat2", {"N_I": n, "q": qs})


def _rows_injective(trials: np.ndarray) -> np.ndarray:
    """Per row, whether all entries are distinct."""
    srt = np.sort(trials, axis=1)
    return ~np.any(srt[:, 1:] == srt[:, :-1], axis=1)


def _cbc_pass(fs: FrequencySet, M: int, policy: CbcPolicy):
    """One component-by-component pass at fixed prime size ``M``.

    Returns the generating vector or ``None`` if some component admits no
    tested value keeping the partial modulus map injective on the distinct
    projections seen so far. Candidates are 1 followed by pseudo-random
    values; the first admissible one in that order is kept.
    """
    rng = np.random.default_rng([policy.seed, M])
    s, d = fs.size, fs.dim
    freqs = fs.freqs
    cls = np.zeros(s, dtype=np.int64)
    n_cls = 1
    res = np.zeros(s, dtype=np.int64)
    z = []
    batch = 4
    block = np.empty((0, s), dtype=np.int64)
    for t in range(d):
        if t % 256 == 0:
            # contiguous copies of the next columns; strided reads dominate otherwise
            block = np.ascontiguousarray(freqs[:, t : t + 256].T)
        col = block[t % 256]
        colm = col % M
        if n_cls < s:
            lo = int(col.min())
            span = int(col.max()) - lo + 1
            _, cls = np.unique(cls * span + (col - lo), return_inverse=True)
            n_cls = int(cls.max()) + 1
            if n_cls > M:
                return None
        distinct = n_cls == s
        found = None
        tried = 0
        while found is None and tried < policy.tries:
            if tried == 0:
                cands = np.concatenate([[1], rng.integers(1, M, size=batch - 1)])
            else:
                cands = rng.integers(1, M, size=batch)
            tried += batch
            trials = (res[None, :] + np.multiply.outer(cands, colm)) % M
            if distinct:
                ok = _rows_injective(trials)
            else:
                ok = np.array([np.unique(row).size == n_cls for row in trials])
            hit = np.flatnonzero(ok)
            if hit.size:
                found = int(cands[hit[0]])
                res = trials[hit[0]]
        if found is None:
            return None
        z.append(found)
    return tuple(z)


def build_cbc(fs: FrequencySet, policy: CbcPolicy | None = None) -> Rank1Lattice:
    """Reconstructing lattice of prime size found component by component.

    Sizes are walked upwards from the least prime above ``max(s, N)``; the
    first size at which a full greedy pass succeeds is returned. The walk
    aborts with :class:`SearchExhausted` above ``4 max(s^2, 2(N+1))``.
    """
    policy = policy or CbcPolicy()
    n, _ = expansion(fs)
    s = fs.size
    target = max(s * s, 2 * (n + 1))
    ceiling = 4 * target
    M = next_prime(max(s, n))
    if M * M >= INT64_SAFE:
        raise ResourceLimitError("cbc lattice size too large for 64-bit residues")
    steps = 0
    while M <= ceiling:
        z = _cbc_pass(fs, M, policy)
        if z is not None:
            return Rank1Lattice(z, M, "cbc", {"N_I": n, "target": target, "within_target": M <= target})
        steps += 1
        if policy.growth > 1.0 and steps > policy.linear_steps:
            M = next_prime(int(M * policy.growth))
        else:
            M = next_prime(M)
    raise SearchExhausted(f"no reconstructing lattice of prime size <= {ceiling} for s={s}, N_I={n}")


def build_lattice(fs: FrequencySet, source: str, policy: CbcPolicy | None = None) -> Rank1Lattice:
    if source == "lat1":
        return build_mixed_radix(fs)
    if source == "lat2":
        return build_crt(fs)
    if source == "cbc":
        return build_cbc(fs, policy)
    raise ValidationError(f"unknown lattice source {source!r}")


def tilde_M(fs: FrequencySet, z) -> int:
    """Spread of the flattened frequencies, ``max k.z - min k.z + 1``."""
    return InnerProducts(fs, z).tilde_m


def tilde_M_bound_dNM(fs: FrequencySet, z, M: int) -> int:
    n, _ = expansion(fs)
    return fs.dim * n * int(M)


def tilde_M_bound_l1(fs: FrequencySet, M: int) -> int:
    return 2 * int(M) * int(np.abs(fs.freqs).sum(axis=1).max())


def node_block(z, M: int, j) -> np.ndarray:
    """Nodes ``(j z mod M) / M`` for an array of indices ``j``, shape ``(len(j), d)``."""
    M = int(M)
    j = np.asarray(j, dtype=np.int64) % M
    if M < (1 << 31):
        zr = np.array([int(v) % M for v in z], dtype=np.int64)
        return (np.multiply.outer(j, zr) % M) / M
    zr = [int(v) % M for v in z]
    rows = [[(int(jj) * zt % M) / M for zt in zr] for jj in j]
    return np.array(rows, dtype=float).reshape(len(j), len(zr))


def lattice_nodes(lattice: Rank1Lattice, chunk: int = 4096):
    """Yield the ``M`` lattice nodes in order, one ``(d,)`` array at a time."""
    for start in range(0, lattice.M, chunk):
        block = node_block(lattice.z, lattice.M, np.arange(start, min(start + chunk, lattice.M)))
        yield from block


def write_lattice(lattice: Rank1Lattice, path) -> None:
    doc = {"z": [str(v) for v in lattice.z], "M": str(lattice.M), "source": lattice.source}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def read_lattice(path) -> Rank1Lattice:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return Rank1Lattice(tuple(int(v) for v in doc["z"]), int(doc["M"]), doc.get("source", "user"))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed lattice file {path}: {exc}") from None
