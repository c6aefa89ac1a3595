"""Splitting a reconstructing rank-1 lattice into several small prime-size lattices.

Two strategies share the same generating vector ``z``:

``full``
    Each chosen prime must leave at least half of the still-unresolved
    frequencies free of collisions against the *whole* frequency set.
    Every coefficient is then readable from a single lattice DFT.
``reduction``
    Each round only needs collision freedom inside the residual set; the
    resolved frequencies are peeled off before the next round, so the
    primes shrink with the residual.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CandidateExhausted, NotReconstructing, ValidationError
from .freqset import FrequencySet, expansion
from .numbertheory import C1, C2, candidate_primes
from .rank1 import InnerProducts, Rank1Lattice

__all__ = [
    "RoundInfo",
    "MultiLatticePlan",
    "survivors",
    "build_full",
    "build_reduction",
    "build_plan",
    "total_samples",
    "theorem1_bound",
    "theorem2_bound",
    "theorem3_bound",
    "check_plan",
    "write_plan",
    "read_plan",
]

VARIANTS = ("full", "reduction")


@dataclass(frozen=True)
class RoundInfo:
    prime: int
    active: int  # unresolved frequencies entering the round
    resolved: int  # of those, resolved by this prime
    scanned: int  # candidate primes evaluated before the pick (inclusive)
    candidates: int  # size of the candidate set used in this round
    tilde_m: int


@dataclass
class MultiLatticePlan:
    z: tuple
    primes: list
    nu: np.ndarray
    variant: str
    source_M: int
    source: str
    tilde_m: int
    candidate_count: int
    rounds: list = field(default_factory=list)
    admissible: list | None = None

    @property
    def L(self) -> int:
        return len(self.primes)

    @property
    def size(self) -> int:
        return len(self.nu)

    def classes(self) -> list:
        """Frequency indices assigned to each lattice."""
        order = np.argsort(self.nu, kind="stable")
        bounds = np.searchsorted(self.nu[order], np.arange(self.L + 1))
        return [order[bounds[i] : bounds[i + 1]] for i in range(self.L)]

    def admissible_sets(self, fs: FrequencySet) -> list:
        """Per lattice, the indices whose residue is unique within the whole set."""
        if self.admissible is None:
            ip = InnerProducts(fs, self.z)
            self.admissible = [np.flatnonzero(_unique_mask(ip.mod(p), p)) for p in self.primes]
        return self.admissible

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.z, tuple(self.primes), self.variant)).encode())
        h.update(np.asarray(self.nu, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


def _unique_mask(residues: np.ndarray, p: int) -> np.ndarray:
    """True where a residue occurs exactly once."""
    n = residues.size
    if p <= 8 * n + 64:
        counts = np.bincount(residues, minlength=p)
        return counts[residues] == 1
    _, inverse, counts = np.unique(residues, return_inverse=True, return_counts=True)
    return counts[inverse] == 1


def survivors(active, all_residues, p: int):
    """Split ``active`` positions by whether their residue mod ``p`` is unique in ``all_residues``.

    ``active`` indexes into ``all_residues``; positions, not values, are returned.

    Returns ``(noncolliding, colliding)`` index arrays into ``all_residues``.
    """
    all_res = np.asarray(all_residues)
    all_mod = np.array([int(v) % p for v in all_res], dtype=np.int64) if all_res.dtype == object else all_res % p
    active = np.asarray(active, dtype=np.int64)
    mask = _unique_mask(all_mod, int(p))[active]
    return active[mask], active[~mask]


def _reconstructing_check(ip: InnerProducts, single: Rank1Lattice) -> None:
    if tuple(single.z) != ip.z:
        raise ValidationError("lattice and inner products disagree on z")
    res = ip.mod_exact(single.M)
    if res.dtype == object:
        ok = len(set(res.tolist())) == res.size
    else:
        ok = np.unique(res).size == res.size
    if not ok:
        raise NotReconstructing(f"lattice (M={single.M}, source={single.source}) is not reconstructing for this set")


def build_full(fs: FrequencySet, single: Rank1Lattice, *, check: bool = True, threads: int = 1) -> MultiLatticePlan:
    """Deterministic multiple lattice whose classes are collision free against the whole set.

    Candidate primes are scanned in ascending order, skipping primes already
    taken; the first prime leaving at most half of the unresolved frequencies
    colliding is selected. With ``threads > 1`` several candidates are
    evaluated speculatively, but the earliest qualifying one still wins.
    """
    if single.dim != fs.dim:
        raise ValidationError("lattice and frequency set dimensions differ")
    ip = InnerProducts(fs, single.z)
    if check:
        _reconstructing_check(ip, single)
    s = fs.size
    tm = ip.tilde_m
    cands = candidate_primes(s, tm)
    masks: dict[int, np.ndarray] = {}

    def mask_for(p: int) -> np.ndarray:
        m = masks.get(p)
        if m is None:
            m = _unique_mask(ip.mod(p), p)
            masks[p] = m
        return m

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    nu = np.full(s, -1, dtype=np.int64)
    active = np.arange(s)
    primes: list[int] = []
    admissible: list[np.ndarray] = []
    rounds: list[RoundInfo] = []
    try:
        while active.size:
            chosen = set(primes)
            pick = None
            scanned = 0
            i = 0
            while pick is None and i < len(cands):
                window = []
                while i < len(cands) and len(window) < max(1, threads):
                    p = int(cands[i])
                    i += 1
                    if p not in chosen:
                        window.append(p)
                if pool is not None:
                    todo = [p for p in window if p not in masks]
                    for p, m in zip(todo, pool.map(lambda q: _unique_mask(ip.mod(q), q), todo)):
                        masks[p] = m
                for p in window:
                    scanned += 1
                    ok = mask_for(p)[active]
                    if 2 * int((~ok).sum()) <= active.size:
                        pick = (p, ok)
                        break
            if pick is None:
                raise CandidateExhausted(
                    f"no candidate prime halves {active.size} unresolved frequencies",
                    {"s": s, "tilde_m": tm, "K": len(cands), "primes": primes, "active": int(active.size)},
                )
            p, ok = pick
            ell = len(primes)
            nu[active[ok]] = ell
            primes.append(p)
            admissible.append(np.flatnonzero(masks[p]))
            rounds.append(RoundInfo(p, int(active.size), int(ok.sum()), scanned, len(cands), tm))
            active = active[~ok]
    finally:
        if pool is not None:
            pool.shutdown()
    return MultiLatticePlan(
        z=ip.z,
        primes=primes,
        nu=nu,
        variant="full",
        source_M=single.M,
        source=single.source,
        tilde_m=tm,
        candidate_count=len(cands),
        rounds=rounds,
        admissible=admissible,
    )


def build_reduction(fs: FrequencySet, single: Rank1Lattice, *, check: bool = True, threads: int = 1) -> MultiLatticePlan:
    """Multiple lattice resolving at least half of the residual set per round.

    Each round recomputes the residual size, its spread ``tilde_M`` and a fresh
    candidate set; collisions are only counted inside the residual.
    """
    if single.dim != fs.dim:
        raise ValidationError("lattice and frequency set dimensions differ")
    ip = InnerProducts(fs, single.z)
    if check:
        _reconstructing_check(ip, single)
    s = fs.size
    nu = np.full(s, -1, dtype=np.int64)
    residual = np.arange(s)
    primes: list[int] = []
    rounds: list[RoundInfo] = []
    first_k = None
    while residual.size:
        s_r = int(residual.size)
        tm_r = ip.spread(residual)
        cands = candidate_primes(s_r, tm_r)
        if first_k is None:
            first_k = len(cands)
        chosen = set(primes)
        pick = None
        scanned = 0
        for p in cands.tolist():
            if p in chosen:
                continue
            scanned += 1
            ok = _unique_mask(ip.mod(p, residual), p)
            if 2 * int(ok.sum()) >= s_r:
                pick = (p, ok)
                break
        if pick is None:
            raise CandidateExhausted(
                f"no candidate prime resolves half of {s_r} residual frequencies",
                {"s": s, "s_round": s_r, "tilde_m": tm_r, "K": len(cands), "primes": primes},
            )
        p, ok = pick
        nu[residual[ok]] = len(primes)
        primes.append(p)
        rounds.append(RoundInfo(p, s_r, int(ok.sum()), scanned, len(cands), tm_r))
        residual = residual[~ok]
    return MultiLatticePlan(
        z=ip.z,
        primes=primes,
        nu=nu,
        variant="reduction",
        source_M=single.M,
        source=single.source,
        tilde_m=ip.tilde_m,
        candidate_count=first_k,
        rounds=rounds,
    )


def build_plan(fs: FrequencySet, single: Rank1Lattice, variant: str, **kw) -> MultiLatticePlan:
    if variant == "full":
        return build_full(fs, single, **kw)
    if variant == "reduction":
        return build_reduction(fs, single, **kw)
    raise ValidationError(f"unknown variant {variant!r}")


def total_samples(plan: MultiLatticePlan) -> int:
    """Distinct sampling nodes; the origin is shared by all lattices."""
    return 1 - plan.L + sum(plan.primes)


def theorem2_bound(s: int, tilde_m: int) -> float:
    if s == 1:
        return 2.0
    log_s = math.log(tilde_m) / math.log(s)
    return 2 * C1 * s * math.log2(tilde_m) * math.log(C2 * s * log_s)


def theorem3_bound(s: int, tilde_m: int) -> float:
    if s == 1:
        return 2.0
    lg = math.log2(tilde_m)
    return 8 * s * lg * math.log(2 * lg)


def theorem1_bound(s: int, d: int, n_i: int, M: int) -> float:
    if s == 1:
        return 2.0
    lg = math.log2(d * n_i * M)
    return 6 * s * lg * math.log(3 * s / math.log2(s) * lg)


def check_plan(fs: FrequencySet, plan: MultiLatticePlan) -> dict:
    """Recompute every structural guarantee of a plan from scratch.

    Returns a dict of booleans: coverage, certificate (collision freedom of
    each class in the set it has to be resolved from), halving, distinct
    primes, L bound and the sample bound for the plan's variant.
    """
    s = fs.size
    ip = InnerProducts(fs, plan.z)
    nu = np.asarray(plan.nu)
    coverage = nu.shape == (s,) and nu.min() >= 0 and nu.max() == plan.L - 1
    coverage = coverage and all(np.any(nu == ell) for ell in range(plan.L))
    certificate = True
    resolved_before = np.zeros(s, dtype=bool)
    for ell, p in enumerate(plan.primes):
        cls = nu == ell
        if plan.variant == "full":
            pool = np.ones(s, dtype=bool)
        else:
            pool = ~resolved_before
        idx = np.flatnonzero(pool)
        res = ip.mod(p, idx)
        uniq = _unique_mask(res, p)
        in_cls = cls[idx]
        certificate &= bool(np.all(uniq[in_cls]))
        resolved_before |= cls
    sizes = [r.active for r in plan.rounds] + [0]
    halving = all(2 * sizes[i + 1] <= sizes[i] for i in range(len(sizes) - 1))
    bound = theorem2_bound(s, plan.tilde_m) if plan.variant == "full" else theorem3_bound(s, plan.tilde_m)
    return {
        "coverage": bool(coverage),
        "certificate": bool(certificate),
        "halving": bool(halving),
        "distinct_primes": len(set(plan.primes)) == plan.L,
        "L_bound": plan.L <= int(math.floor(math.log2(s))) + 1,
        "sample_bound": sum(plan.primes) <= bound,
    }


def plan_to_dict(plan: MultiLatticePlan) -> dict:
    return {
        "z": [str(v) for v in plan.z],
        "source_M": str(plan.source_M),
        "source": plan.source,
        "tilde_M": str(plan.tilde_m),
        "candidate_count": plan.candidate_count,
        "variant": plan.variant,
        "primes": [int(p) for p in plan.primes],
        "nu": [int(v) for v in plan.nu],
        "rounds": [
            {
                "prime": r.prime,
                "active": r.active,
                "resolved": r.resolved,
                "scanned": r.scanned,
                "candidates": r.candidates,
                "tilde_M": str(r.tilde_m),
            }
            for r in plan.rounds
        ],
    }


def plan_from_dict(doc: dict) -> MultiLatticePlan:
    try:
        rounds = [
            RoundInfo(int(r["prime"]), int(r["active"]), int(r["resolved"]), int(r["scanned"]), int(r["candidates"]), int(r["tilde_M"]))
            for r in doc.get("rounds", [])
        ]
        variant = doc["variant"]
        if variant not in VARIANTS:
            raise ValidationError(f"unknown variant {variant!r}")
        return MultiLatticePlan(
            z=tuple(int(v) for v in doc["z"]),
            primes=[int(p) for p in doc["primes"]],
            nu=np.asarray([int(v) for v in doc["nu"]], dtype=np.int64),
            variant=variant,
            source_M=int(doc["source_M"]),
            source=doc.get("source", "user"),
            tilde_m=int(doc["tilde_M"]),
            candidate_count=int(doc.get("candidate_count", 0)),
            rounds=rounds,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed plan: {exc}") from None


def write_plan(plan: MultiLatticePlan, path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan)) + "\n", encoding="utf-8")


def read_plan(path) -> MultiLatticePlan:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed plan file {path}: {exc}") from None
    return plan_from_dict(doc)


def plan_summary(fs: FrequencySet, plan: MultiLatticePlan) -> dict:
    n_i, _ = expansion(fs)
    n = total_samples(plan)
    return {
        "d": fs.dim,
        "s": fs.size,
        "N_I": n_i,
        "L": plan.L,
        "primes": list(plan.primes),
        "sum_P": sum(plan.primes),
        "total_samples": n,
        "oversampling": n / fs.size,
        "tilde_M": plan.tilde_m,
    }
