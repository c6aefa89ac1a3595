"""Sampling on multiple rank-1 lattices, prime-length DFTs and reconstruction."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .freqset import FrequencySet
from .mr1l import MultiLatticePlan, total_samples
from .rank1 import InnerProducts

__all__ = [
    "TrigPolynomial",
    "SampleSet",
    "SamplingError",
    "eval_poly",
    "fft",
    "ifft",
    "naive_dft",
    "lattice_dft",
    "aliasing_oracle",
    "sample_on_plan",
    "reconstruct_direct",
    "reconstruct_average",
    "reconstruct_peeling",
    "reconstruct",
    "write_samples",
    "read_samples",
    "write_coefficients",
    "read_coefficients",
    "max_relative_error",
    "count_evaluations",
]


class SamplingError(RuntimeError):
    """The sampled function failed; carries lattice and offset context."""


@dataclass(frozen=True, eq=False)
class TrigPolynomial:
    """Sparse trigonometric polynomial ``sum_k c_k exp(2 pi i k.x)``.

    ``freqs`` is ``(n, d)`` int64 and ``coeffs`` a matching complex vector.
    """

    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.int64)
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if f.ndim != 2 or f.shape[0] != c.size:
            raise ValidationError("freqs must be (n, d) with one coefficient per row")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.freqs.shape[1]

    @classmethod
    def from_dict(cls, terms: dict, dim: int | None = None) -> "TrigPolynomial":
        keys = list(terms)
        if not keys:
            if dim is None:
                raise ValidationError("empty polynomial needs an explicit dimension")
            return cls(np.zeros((0, dim), dtype=np.int64), np.zeros(0, dtype=complex))
        return cls(np.array(keys, dtype=np.int64).reshape(len(keys), -1), np.array([terms[k] for k in keys]))

    @classmethod
    def on_set(cls, fs: FrequencySet, coeffs) -> "TrigPolynomial":
        return cls(fs.freqs, coeffs)

    def as_dict(self) -> dict:
        return {tuple(k): complex(c) for k, c in zip(self.freqs.tolist(), self.coeffs)}

    def __call__(self, x) -> np.ndarray:
        return eval_poly(self, x)


def eval_poly(p: TrigPolynomial, x):
    """Evaluate at one point ``(d,)`` or a batch ``(n, d)``.

    Each product ``k_t x_t`` is reduced mod 1 before summation so large
    frequencies do not destroy the phase.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(1, -1) if single else x
    if pts.ndim != 2 or pts.shape[1] != p.dim:
        raise ValidationError(f"point dimension {pts.shape[-1]} does not match polynomial dimension {p.dim}")
    out = np.zeros(pts.shape[0], dtype=complex)
    step = max(1, (1 << 22) // max(1, pts.shape[0] * p.dim))
    for start in range(0, p.freqs.shape[0], step):
        k = p.freqs[start : start + step].astype(float)
        phase = np.zeros((pts.shape[0], k.shape[0]))
        for t in range(p.dim):
            phase += np.mod(np.multiply.outer(pts[:, t], k[:, t]), 1.0)
        out += np.exp(2j * np.pi * np.mod(phase, 1.0)) @ p.coeffs[start : start + step]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# transforms


def naive_dft(x) -> np.ndarray:
    """Reference ``X_k = sum_j x_j exp(-2 pi i jk/n)`` in O(n^2), exact index arithmetic."""
    x = np.asarray(x, dtype=complex)
    n = x.size
    j = np.arange(n)
    out = np.empty(n, dtype=complex)
    step = max(1, (1 << 21) // max(1, n))
    for a in range(0, n, step):
        jk = np.multiply.outer(j[a : a + step], j) % n
        out[a : a + step] = np.exp(-2j * np.pi * jk / n) @ x
    return out


_CHIRPS: dict[int, tuple] = {}


def _chirp(n: int):
    got = _CHIRPS.get(n)
    if got is None:
        k = np.arange(n, dtype=np.int64)
        # k^2 mod 2n keeps the chirp argument small and exact
        w = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
        m = 1 << (2 * n - 2).bit_length()
        b = np.zeros(m, dtype=complex)
        b[:n] = w.conj()
        b[m - n + 1 :] = w.conj()[1:][::-1]
        got = (w, m, np.fft.fft(b))
        if n <= 1 << 20:
            if len(_CHIRPS) > 64:
                _CHIRPS.clear()
            _CHIRPS[n] = got
    return got


def fft(x) -> np.ndarray:
    """Forward DFT of any length via Bluestein's chirp-z convolution."""
    x = np.asarray(x, dtype=complex)
    n = x.size
    if n <= 1:
        return x.copy()
    w, m, fb = _chirp(n)
    conv = np.fft.ifft(np.fft.fft(x * w, m) * fb)[:n]
    return w * conv


def ifft(x) -> np.ndarray:
    """Inverse DFT, normalized by ``1/n``."""
    x = np.asarray(x, dtype=complex)
    return fft(x.conj()).conj() / max(1, x.size)


def _bins(fs: FrequencySet, z, p: int, ip: InnerProducts | None = None) -> np.ndarray:
    ip = ip if ip is not None else InnerProducts(fs, z)
    return ip.mod(p)


def lattice_dft(samples, fs: FrequencySet, z, p: int, *, ip: InnerProducts | None = None) -> np.ndarray:
    """Aliased coefficients ``DFT(samples)[k.z mod P] / P`` for every ``k`` in ``fs``."""
    samples = np.asarray(samples, dtype=complex)
    if samples.size != p:
        raise ValidationError(f"expected {p} samples, got {samples.size}")
    spec = fft(samples) / p
    return spec[_bins(fs, z, p, ip)]


def aliasing_oracle(poly: TrigPolynomial, fs: FrequencySet, z, p: int) -> np.ndarray:
    """Brute-force sum of all coefficients of ``poly`` aliasing onto each ``k`` of ``fs``."""
    rk = _bins(fs, z, p)
    rh = InnerProducts(FrequencySet(poly.freqs.copy()), z).mod(p) if poly.freqs.shape[0] else np.zeros(0, np.int64)
    out = np.zeros(fs.size, dtype=complex)
    for i, r in enumerate(rk.tolist()):
        out[i] = poly.coeffs[rh == r].sum()
    return out


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SampleSet:
    primes: tuple
    values: list
    plan_digest: str = ""

    def __post_init__(self):
        self.primes = tuple(int(p) for p in self.primes)
        self.values = [np.asarray(v, dtype=complex) for v in self.values]
        if len(self.values) != len(self.primes):
            raise ValidationError("one sample vector per lattice required")
        for p, v in zip(self.primes, self.values):
            if v.size != p:
                raise ValidationError(f"lattice of size {p} carries {v.size} samples")


def _poly_on_lattice(poly: TrigPolynomial, z, p: int) -> np.ndarray:
    """Exact-phase values of ``poly`` at ``j z / P``; bins accumulated then inverse DFT."""
    acc = np.zeros(p, dtype=complex)
    if poly.freqs.shape[0]:
        r = InnerProducts(FrequencySet(poly.freqs.copy()), z).mod(p)
        np.add.at(acc, r, poly.coeffs)
    return ifft(acc) * p


def _poly_on_lattice_direct(poly: TrigPolynomial, z, p: int) -> np.ndarray:
    out = np.zeros(p, dtype=complex)
    if not poly.freqs.shape[0]:
        return out
    r = InnerProducts(FrequencySet(poly.freqs.copy()), z).mod(p)
    j = np.arange(p, dtype=np.int64)
    step = max(1, (1 << 22) // p)
    for a in range(0, r.size, step):
        idx = np.multiply.outer(j, r[a : a + step]) % p
        out += np.exp(2j * np.pi * idx / p) @ poly.coeffs[a : a + step]
    return out


def _nodes(z, p: int, j: np.ndarray) -> np.ndarray:
    zr = np.array([int(v) % p for v in z], dtype=np.int64)
    return (np.multiply.outer(j, zr) % p) / p


def sample_on_plan(f, plan: MultiLatticePlan, *, method: str = "auto", chunk: int = 1 << 14) -> SampleSet:
    """Sample ``f`` on every lattice of ``plan``; the origin is evaluated once.

    ``f`` is either a :class:`TrigPolynomial` or a callable mapping an
    ``(n, d)`` float array to ``n`` values. For polynomials ``method`` picks
    between exact direct summation (``"direct"``) and bin accumulation plus
    an inverse DFT (``"fft"``); ``"auto"`` uses the cheaper one.
    """
    values = []
    if isinstance(f, TrigPolynomial):
        if f.dim != len(plan.z):
            raise ValidationError("polynomial and plan dimensions differ")
        for p in plan.primes:
            use_direct = method == "direct" or (method == "auto" and f.freqs.shape[0] * p <= 1 << 16)
            values.append(_poly_on_lattice_direct(f, plan.z, p) if use_direct else _poly_on_lattice(f, plan.z, p))
        return SampleSet(plan.primes, values, plan.digest())
    if not callable(f):
        raise ValidationError("f must be a TrigPolynomial or a callable")
    d = len(plan.z)
    try:
        origin = complex(np.asarray(f(np.zeros((1, d))), dtype=complex).reshape(-1)[0])
    except Exception as exc:
        raise SamplingError(f"evaluation failed at the shared origin node: {exc}") from exc
    for ell, p in enumerate(plan.primes):
        v = np.empty(p, dtype=complex)
        v[0] = origin
        for start in range(1, p, chunk):
            j = np.arange(start, min(p, start + chunk), dtype=np.int64)
            try:
                got = np.asarray(f(_nodes(plan.z, p, j)), dtype=complex).reshape(-1)
            except Exception as exc:
                raise SamplingError(f"evaluation failed on lattice {ell} (P={p}) at offsets {j[0]}..{j[-1]}: {exc}") from exc
            if got.size != j.size:
                raise SamplingError(f"lattice {ell} (P={p}): function returned {got.size} values for {j.size} nodes")
            v[start : start + j.size] = got
        values.append(v)
    return SampleSet(plan.primes, values, plan.digest())


def count_evaluations(plan: MultiLatticePlan) -> int:
    """Number of distinct function evaluations :func:`sample_on_plan` performs."""
    return total_samples(plan)


# ---------------------------------------------------------------------------
# reconstruction


def _check(samples: SampleSet, plan: MultiLatticePlan, fs: FrequencySet, variant: str) -> None:
    if plan.variant != variant:
        raise ValidationError(f"this reconstruction needs a {variant!r} plan, got {plan.variant!r}")
    if tuple(samples.primes) != tuple(plan.primes):
        raise ValidationError("sample set does not belong to this plan")
    if fs.size != plan.size or fs.dim != len(plan.z):
        raise ValidationError("frequency set does not match the plan")


def _spectra(samples: SampleSet, threads: int = 1) -> list:
    def one(pv):
        p, v = pv
        return fft(v) / p

    pairs = list(zip(samples.primes, samples.values))
    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, pairs))
    return [one(pv) for pv in pairs]


def reconstruct_direct(samples: SampleSet, plan: MultiLatticePlan, fs: FrequencySet, *, threads: int = 1) -> TrigPolynomial:
    """Read each coefficient from the lattice that resolves it."""
    _check(samples, plan, fs, "full")
    ip = InnerProducts(fs, plan.z)
    coeffs = np.zeros(fs.size, dtype=complex)
    for p, spec, cls in zip(plan.primes, _spectra(samples, threads), plan.classes()):
        coeffs[cls] = spec[ip.mod(p, cls)]
    return TrigPolynomial.on_set(fs, coeffs)


def reconstruct_average(samples: SampleSet, plan: MultiLatticePlan, fs: FrequencySet, *, threads: int = 1) -> TrigPolynomial:
    """Mean over all lattices on which a coefficient does not collide."""
    _check(samples, plan, fs, "full")
    ip = InnerProducts(fs, plan.z)
    total = np.zeros(fs.size, dtype=complex)
    count = np.zeros(fs.size, dtype=np.int64)
    for p, spec, adm in zip(plan.primes, _spectra(samples, threads), plan.admissible_sets(fs)):
        total[adm] += spec[ip.mod(p, adm)]
        count[adm] += 1
    if np.any(count == 0):
        raise ValidationError("plan leaves some frequency without an admissible lattice")
    return TrigPolynomial.on_set(fs, total / count)


def reconstruct_peeling(samples, plan: MultiLatticePlan, fs: FrequencySet) -> TrigPolynomial:
    """Round-by-round recovery for reduction plans.

    Before reading lattice ``l``, the already recovered terms are evaluated
    at its nodes and subtracted from the samples. ``samples`` may also be a
    callable or polynomial, which is then sampled on the plan first.
    """
    if not isinstance(samples, SampleSet):
        samples = sample_on_plan(samples, plan)
    _check(samples, plan, fs, "reduction")
    ip = InnerProducts(fs, plan.z)
    coeffs = np.zeros(fs.size, dtype=complex)
    done = np.zeros(fs.size, dtype=bool)
    for p, v, cls in zip(plan.primes, samples.values, plan.classes()):
        if done.any():
            known = np.flatnonzero(done)
            acc = np.zeros(p, dtype=complex)
            np.add.at(acc, ip.mod(p, known), coeffs[known])
            v = v - ifft(acc) * p
        spec = fft(v) / p
        coeffs[cls] = spec[ip.mod(p, cls)]
        done[cls] = True
    return TrigPolynomial.on_set(fs, coeffs)


def reconstruct(samples, plan: MultiLatticePlan, fs: FrequencySet, method: str = "auto", **kw) -> TrigPolynomial:
    if method == "auto":
        method = "direct" if plan.variant == "full" else "peeling"
    if method == "direct":
        return reconstruct_direct(samples, plan, fs, **kw)
    if method == "average":
        return reconstruct_average(samples, plan, fs, **kw)
    if method == "peeling":
        return reconstruct_peeling(samples, plan, fs)
    raise ValidationError(f"unknown reconstruction method {method!r}")


# ---------------------------------------------------------------------------
# files


def _fmt(c: complex) -> str:
    return f"{c.real!r} {c.imag!r}"


def _parse_pair(line: str, where: str) -> complex:
    parts = line.split()
    if len(parts) != 2:
        raise ValidationError(f"{where}: expected 're im'")
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        raise ValidationError(f"{where}: non-numeric value") from None


def write_samples(samples: SampleSet, path) -> None:
    lines = [f"plan {samples.plan_digest or '-'}", f"L {len(samples.primes)}", "primes " + " ".join(map(str, samples.primes))]
    for ell, (p, v) in enumerate(zip(samples.primes, samples.values)):
        lines.append(f"lattice {ell} {p}")
        lines.extend(_fmt(complex(c)) for c in v)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_samples(path) -> SampleSet:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln.strip()]
    try:
        tag, digest = lines[0].split()
        assert tag == "plan"
        tag, n = lines[1].split()
        assert tag == "L"
        L = int(n)
        head = lines[2].split()
        assert head[0] == "primes"
        primes = [int(v) for v in head[1:]]
    except (IndexError, ValueError, AssertionError):
        raise ValidationError(f"malformed sample file header in {path}") from None
    if len(primes) != L:
        raise ValidationError("prime list length disagrees with L")
    values, pos = [], 3
    for ell, p in enumerate(primes):
        if pos >= len(lines) or lines[pos].split() != ["lattice", str(ell), str(p)]:
            raise ValidationError(f"missing block header for lattice {ell}")
        block = lines[pos + 1 : pos + 1 + p]
        if len(block) != p:
            raise ValidationError(f"lattice {ell}: expected {p} samples, found {len(block)}")
        values.append(np.array([_parse_pair(ln, f"lattice {ell}") for ln in block]))
        pos += 1 + p
    if pos != len(lines):
        raise ValidationError("trailing data after last lattice block")
    return SampleSet(primes, values, "" if digest == "-" else digest)


def write_coefficients(coeffs, path) -> None:
    c = np.asarray(coeffs.coeffs if isinstance(coeffs, TrigPolynomial) else coeffs, dtype=complex)
    Path(path).write_text("".join(_fmt(complex(v)) + "\n" for v in c), encoding="utf-8")


def read_coefficients(path, size: int | None = None) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln.strip()]
    out = np.array([_parse_pair(ln, f"line {i + 1}") for i, ln in enumerate(lines)], dtype=complex)
    if size is not None and out.size != size:
        raise ValidationError(f"expected {size} coefficients, found {out.size}")
    return out


def max_relative_error(recovered, truth) -> float:
    """``max |c - c*| / max |c*|`` (absolute when the truth is zero)."""
    a = np.asarray(recovered.coeffs if isinstance(recovered, TrigPolynomial) else recovered)
    b = np.asarray(truth.coeffs if isinstance(truth, TrigPolynomial) else truth)
    scale = float(np.abs(b).max()) if b.size else 0.0
    err = float(np.abs(a - b).max()) if a.size else 0.0
    return err / scale if scale > 0 else err
