"""The tensor-product test function ``G3`` and the relative L2 error of an approximation.

``g3(x) = c (2 + sgn((x mod 1) - 1/2) sin(2 pi x)^3)`` with ``c`` chosen so
that ``||g3||_2 = 1``. The function is even with period 1/2, so its Fourier
coefficients are real and vanish at odd frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .freqset import FrequencySet, hyperbolic_cross_size

__all__ = [
    "G3_SCALE",
    "G3Spec",
    "OracleTable",
    "TailTooLarge",
    "g3",
    "eval_g3d",
    "g3_coeff_oracle",
    "g3_spec",
    "coefficients_on_set",
    "rel_l2_error",
    "hyperbolic_tail_mass",
    "write_table",
    "read_table",
    "load_or_build_table",
]

G3_SCALE = 4.0 * math.sqrt(3.0 * math.pi / (207.0 * math.pi - 256.0))
DEFAULT_K_MAX = 1 << 15


class OracleTable(NamedTuple):
    table: np.ndarray
    tail: float
    alias: float
    odd_max: float  # largest odd-index magnitude before it was zeroed


class TailTooLarge(ValidationError):
    """The truncated coefficient table misses too much of the L2 mass."""


@dataclass(frozen=True, eq=False)
class G3Spec:
    """``d``-variate ``G3`` with a 1-D coefficient table ``table[k] = ghat(k)``, ``0 <= k <= k_max``."""

    dim: int
    table: np.ndarray
    k_max: int
    tail: float = 0.0  # estimated 1-D L2 mass beyond k_max (both signs)
    alias: float = 0.0  # estimated per-coefficient error of the table
    _cache: dict = field(default_factory=dict, repr=False)

    def with_dim(self, dim: int) -> "G3Spec":
        return G3Spec(dim, self.table, self.k_max, self.tail, self.alias)


def g3(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return G3_SCALE * (2.0 + np.sign(np.mod(x, 1.0) - 0.5) * np.sin(2 * np.pi * x) ** 3)


def eval_g3d(spec_or_dim, x) -> np.ndarray:
    """Product of ``g3`` over the coordinates of ``x`` (``(d,)`` or ``(n, d)``)."""
    x = np.asarray(x, dtype=float)
    dim = spec_or_dim.dim if isinstance(spec_or_dim, G3Spec) else int(spec_or_dim)
    if x.shape[-1] != dim:
        raise ValidationError(f"point dimension {x.shape[-1]} does not match d={dim}")
    return np.prod(g3(x), axis=-1)


def g3_coeff_oracle(k_max: int = DEFAULT_K_MAX, tol: float = 1e-12) -> OracleTable:
    """One-dimensional coefficients from a length ``2 k_max`` equispaced DFT.

    Returns ``table[k]`` for ``0 <= k <= k_max`` together with an estimate of
    the L2 mass beyond ``k_max``, of the aliasing error per entry, and the
    raw magnitude of the odd entries that were forced to zero. Both
    estimates extrapolate the ``k^-4`` envelope fitted on the top octave.

    Raises
    ------
    TailTooLarge
        If the tail estimate exceeds ``tol``.
    """
    if k_max < 2:
        raise ValidationError("k_max must be at least 2")
    n = 2 * int(k_max)
    x = np.arange(n) / n
    spec = np.fft.fft(g3(x)) / n
    table = spec[: k_max + 1].real.copy()
    odd = float(np.abs(spec[1 : k_max + 1 : 2]).max())
    if odd > 1e-9:
        raise ValidationError(f"odd coefficients do not vanish numerically ({odd:.3g})")
    table[1::2] = 0.0
    if np.abs(spec.imag).max() > 1e-9:
        raise ValidationError("coefficients are not real; sampling grid is broken")
    ks = np.arange(k_max // 4, k_max + 1, 2)
    envelope = float((np.abs(table[ks]) * ks.astype(float) ** 4).max())
    # sum over even k > K of (envelope k^-4)^2 on both sides, bounded by an integral
    tail = envelope**2 * float(k_max) ** -7 / 7.0
    alias = 2.0 * envelope * float(n) ** -4 * 1.1
    if tail > tol:
        raise TailTooLarge(f"truncation mass {tail:.3g} exceeds tolerance {tol:.3g}; raise k_max")
    return OracleTable(table, tail, alias, odd)


@lru_cache(maxsize=4)
def _default_table(k_max: int):
    return g3_coeff_oracle(k_max)


def g3_spec(dim: int, k_max: int = DEFAULT_K_MAX) -> G3Spec:
    res = _default_table(int(k_max))
    return G3Spec(int(dim), res.table, int(k_max), res.tail, res.alias)


def coefficients_on_set(spec: G3Spec, fs: FrequencySet) -> np.ndarray:
    """Exact tensor coefficients ``prod_t ghat(k_t)`` for each row of ``fs``."""
    if fs.dim != spec.dim:
        raise ValidationError("frequency set and test function dimensions differ")
    a = np.abs(fs.freqs)
    if a.size and int(a.max()) > spec.k_max:
        raise ValidationError(f"frequency component {int(a.max())} outside table range {spec.k_max}")
    return np.prod(spec.table[a], axis=1)


def hyperbolic_tail_mass(spec: G3Spec, radius: int) -> float:
    """``sum |Ghat_k|^2`` over ``k`` outside the hyperbolic cross of radius ``R``.

    Recursion over the first axis avoids the cancellation in ``1 - sum_I``:
    frequencies whose first factor already exceeds ``R`` contribute their
    full remaining mass (one, by normalization); the others recurse with the
    budget ``R // max(1, |k_1|)``.
    """
    radius = int(radius)
    if radius > spec.k_max:
        raise ValidationError(f"radius {radius} exceeds table range {spec.k_max}")
    sq = spec.table**2
    # suffix[r] = sum_{k > r} ghat(k)^2 over positive k, plus the beyond-table estimate
    suffix = np.concatenate([np.cumsum(sq[::-1])[::-1][1:], [0.0]]) + spec.tail / 2.0
    key = ("hc", radius)
    memo = spec._cache.setdefault(key, {})
    weights = sq[: radius + 1]
    nz = np.flatnonzero(weights)

    def tail1(r: int) -> float:
        return 2.0 * float(suffix[r])

    def c(d: int, r: int) -> float:
        if d == 1:
            return tail1(r)
        hit = memo.get((d, r))
        if hit is not None:
            return hit
        total = tail1(r)
        for k in nz[nz <= r].tolist():
            w = max(1, k)
            mult = 1.0 if k == 0 else 2.0
            total += mult * float(weights[k]) * c(d - 1, r // w)
        memo[(d, r)] = total
        return total

    return c(spec.dim, radius)


def rel_l2_error(fs: FrequencySet, recovered, spec: G3Spec, *, radius: int | None = None) -> float:
    """Relative L2 distance between ``G3`` and an approximation supported on ``fs``.

    ``sqrt(1 - sum_I |Ghat_k|^2 + sum_I |Ghat_k - c_k|^2)``. When ``fs`` is the
    even hyperbolic cross of ``radius``, the first part is computed as a tail
    sum, which keeps accuracy far below ``1e-8``.
    """
    c = np.asarray(getattr(recovered, "coeffs", recovered), dtype=complex).reshape(-1)
    if c.size != fs.size:
        raise ValidationError(f"expected {fs.size} coefficients, got {c.size}")
    exact = coefficients_on_set(spec, fs)
    approx = float(np.sum(np.abs(exact - c) ** 2))
    if radius is not None:
        if hyperbolic_cross_size(fs.dim, radius) != fs.size:
            raise ValidationError(f"frequency set is not the even hyperbolic cross of radius {radius}")
        trunc = hyperbolic_tail_mass(spec, radius)
    else:
        trunc = max(0.0, 1.0 - math.fsum((exact**2).tolist()))
    return math.sqrt(trunc + approx)


def write_table(table: np.ndarray, path) -> None:
    Path(path).write_text("".join(f"{k} {v!r}\n" for k, v in enumerate(table.tolist())), encoding="utf-8")


def read_table(path) -> np.ndarray:
    rows = [ln.split() for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln.strip()]
    try:
        ks = [int(r[0]) for r in rows]
        vals = [float(r[1]) for r in rows]
    except (IndexError, ValueError):
        raise ValidationError(f"malformed coefficient table {path}") from None
    if ks != list(range(len(ks))):
        raise ValidationError("coefficient table must list k = 0, 1, 2, ... in order")
    return np.array(vals)


def load_or_build_table(path, k_max: int = DEFAULT_K_MAX) -> G3Spec:
    """One-dimensional spec backed by a text cache; rebuilt when the cache is too short."""
    p = Path(path)
    if p.exists():
        table = read_table(p)
        if len(table) >= k_max + 1:
            res = _default_table(k_max)
            return G3Spec(1, table[: k_max + 1], k_max, res.tail, res.alias)
    res = _default_table(k_max)
    write_table(res.table, p)
    return G3Spec(1, res.table, k_max, res.tail, res.alias)
