"""Frequency sets: finite subsets of the integer lattice Z^d."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ResourceLimitError, ValidationError

__all__ = [
    "FrequencySet",
    "FrequencySetError",
    "hyperbolic_cross_even",
    "hyperbolic_cross_size",
    "random_cube_set",
    "expansion",
    "read_freqset",
    "write_freqset",
]

DEFAULT_MAX_SIZE = 20_000_000


class FrequencySetError(ValidationError):
    """Raised for malformed or inconsistent frequency sets."""


@dataclass(frozen=True, eq=False)
class FrequencySet:
    """Distinct integer frequency vectors in lexicographic order.

    ``freqs`` is an ``(s, d)`` int64 array; construct through
    :meth:`from_array` to get the canonical order and validation.
    """

    freqs: np.ndarray

    def __post_init__(self):
        self.freqs.setflags(write=False)

    @classmethod
    def from_array(cls, freqs, dim: int | None = None) -> "FrequencySet":
        arr = np.asarray(freqs, dtype=np.int64)
        if arr.ndim == 1 and dim is not None:
            arr = arr.reshape(-1, dim)
        if arr.ndim != 2:
            raise FrequencySetError("frequency array must be two-dimensional (s, d)")
        if dim is not None and arr.shape[1] != dim:
            raise FrequencySetError(f"expected dimension {dim}, got {arr.shape[1]}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise FrequencySetError("frequency set must contain at least one vector of positive dimension")
        width = _distinguishing_prefix(arr)
        if width is None:
            raise FrequencySetError("duplicate frequency vectors")
        # rows are pairwise distinct on the first `width` columns, so sorting
        # on that prefix yields the full lexicographic order
        order = np.lexsort(arr[:, :width].T[::-1])
        if not np.array_equal(order, np.arange(arr.shape[0])):
            arr = arr[order]
        return cls(np.ascontiguousarray(arr))

    @property
    def dim(self) -> int:
        return self.freqs.shape[1]

    @property
    def size(self) -> int:
        return self.freqs.shape[0]

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencySet) and np.array_equal(self.freqs, other.freqs)

    def __hash__(self) -> int:
        return hash(self.digest())

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.freqs.shape, dtype=np.int64).tobytes())
        h.update(self.freqs.tobytes())
        return h.hexdigest()[:16]

    def index_of(self) -> dict:
        return {tuple(row): i for i, row in enumerate(self.freqs.tolist())}

    def subset(self, indices) -> "FrequencySet":
        return FrequencySet.from_array(self.freqs[np.asarray(indices)])


def _rows_distinct(block: np.ndarray) -> bool:
    view = np.ascontiguousarray(block).view(np.dtype((np.void, block.dtype.itemsize * block.shape[1])))
    return np.unique(view.ravel()).size == block.shape[0]


def _distinguishing_prefix(arr: np.ndarray) -> int | None:
    """Smallest tested column count on which all rows differ, or None on duplicates."""
    s, d = arr.shape
    if s == 1:
        return 1
    width = min(d, 4)
    while True:
        if _rows_distinct(arr[:, :width]):
            return width
        if width == d:
            return None
        width = min(d, 2 * width)


def _hc_rows(dim: int, radius: int, limit: int) -> list[list[int]]:
    # depth-first over axes, pruning on the running product of max(1, |k_t|)
    rows: list[list[int]] = []
    prefix: list[int] = []

    def rec(axis: int, budget: int) -> None:
        if axis == dim:
            rows.append(prefix.copy())
            if len(rows) > limit:
                raise ResourceLimitError(f"hyperbolic cross exceeds size cap {limit}")
            return
        values = [0] + [v for m in range(2, budget + 1, 2) for v in (-m, m)]
        for v in sorted(values):
            prefix.append(v)
            rec(axis + 1, budget // max(1, abs(v)))
            prefix.pop()

    rec(0, radius)
    return rows


def hyperbolic_cross_even(dim: int, radius: int, max_size: int = DEFAULT_MAX_SIZE) -> FrequencySet:
    """Even-entry hyperbolic cross ``{k in (2Z)^d : prod max(1,|k_t|) <= R}``."""
    if dim < 1 or radius < 1:
        raise FrequencySetError("need dim >= 1 and radius >= 1")
    rows = _hc_rows(dim, int(radius), max_size)
    return FrequencySet.from_array(np.array(rows, dtype=np.int64).reshape(-1, dim))


def hyperbolic_cross_size(dim: int, radius: int) -> int:
    """Cardinality of the even hyperbolic cross without enumerating it."""
    cache: dict[tuple[int, int], int] = {}

    def count(d: int, r: int) -> int:
        if d == 0:
            return 1
        key = (d, r)
        if key not in cache:
            total = count(d - 1, r)
            for m in range(2, r + 1, 2):
                total += 2 * count(d - 1, r // m)
            cache[key] = total
        return cache[key]

    return count(dim, int(radius))


def random_cube_set(dim: int, radius: int, size: int, seed: int) -> FrequencySet:
    """``size`` distinct vectors drawn uniformly from ``[-R, R]^d``.

    Rejection sampling on a hash set is used when the request is a small
    fraction of the cube, otherwise a random subset of flat indices is
    decoded in base ``2R+1``.
    """
    if dim < 1 or radius < 0 or size < 1:
        raise FrequencySetError("need dim >= 1, radius >= 0, size >= 1")
    side = 2 * radius + 1
    cube = side**dim
    if size > cube:
        raise FrequencySetError(f"cannot draw {size} distinct vectors from a cube of {cube}")
    rng = np.random.default_rng(seed)
    if size * 100 > cube:
        flat = rng.choice(cube, size=size, replace=False)
        digits = np.empty((size, dim), dtype=np.int64)
        rest = flat.astype(np.int64)
        for t in range(dim):
            digits[:, t] = rest % side
            rest //= side
        return FrequencySet.from_array(digits - radius)
    dtype = np.int8 if radius <= 127 else np.int64
    rows = rng.integers(-radius, radius + 1, size=(size, dim), dtype=dtype)
    while True:
        view = rows.view(np.dtype((np.void, rows.dtype.itemsize * dim))).ravel()
        _, first = np.unique(view, return_index=True)
        if first.size == size:
            break
        keep = np.sort(first)
        fresh = rng.integers(-radius, radius + 1, size=(size - keep.size, dim), dtype=dtype)
        rows = np.concatenate([rows[keep], fresh])
    return FrequencySet.from_array(rows)


def expansion(fs: FrequencySet) -> tuple[int, np.ndarray]:
    """Return ``N_I`` and the per-axis ``(min, max)`` pairs as a ``(d, 2)`` array."""
    lo = fs.freqs.min(axis=0)
    hi = fs.freqs.max(axis=0)
    return int((hi - lo).max()), np.stack([lo, hi], axis=1)


def write_freqset(fs: FrequencySet, path) -> None:
    lines = [f"{fs.dim} {fs.size}"]
    lines.extend(" ".join(map(str, row)) for row in fs.freqs.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_freqset(path) -> FrequencySet:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise FrequencySetError("empty frequency set file")
    header = lines[0].split()
    try:
        dim, size = (int(v) for v in header)
    except ValueError:
        raise FrequencySetError(f"malformed header {lines[0]!r}; expected 'd s'") from None
    if dim < 1 or size < 1:
        raise FrequencySetError("header needs positive d and s")
    body = lines[1:]
    if len(body) != size:
        raise FrequencySetError(f"header announces {size} rows, found {len(body)}")
    rows = []
    for n, ln in enumerate(body, start=2):
        parts = ln.split()
        if len(parts) != dim:
            raise FrequencySetError(f"line {n}: expected {dim} integers, got {len(parts)}")
        try:
            rows.append([int(v) for v in parts])
        except ValueError:
            raise FrequencySetError(f"line {n}: non-integer entry") from None
    return FrequencySet.from_array(np.array(rows, dtype=np.int64), dim=dim)
