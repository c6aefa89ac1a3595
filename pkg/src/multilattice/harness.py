"""Experiment runner producing deterministic CSV tables.

Each experiment expands its configuration into grid points, runs them in a
thread pool and sorts the rows by grid key, so the body of the output does
not depend on the thread count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .freqset import hyperbolic_cross_even, hyperbolic_cross_size, random_cube_set
from .mr1l import build_plan, check_plan, theorem2_bound, theorem3_bound, total_samples
from .rank1 import SOURCES, CbcPolicy, build_lattice
from .spectral import TrigPolynomial, max_relative_error, reconstruct, sample_on_plan
from .testfn import eval_g3d, g3_spec, rel_l2_error

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "format_result",
    "resolve_threads",
    "THREADS_ENV",
]

EXPERIMENTS = ("oversampling-full", "oversampling-reduction", "sample-ratio", "approx-g3", "roundtrip")
FAMILIES = ("hc", "random")
THREADS_ENV = "MULTILATTICE_THREADS"

_OVERSAMPLING_COLS = [
    "family", "d", "R_or_s", "size", "L", "sum_P", "total_samples", "oversampling",
    "theorem_bound", "bound_ok", "source", "variant", "M", "tilde_M", "rep_samples",
]
COLUMNS = {
    "oversampling-full": _OVERSAMPLING_COLS,
    "oversampling-reduction": _OVERSAMPLING_COLS,
    "sample-ratio": _OVERSAMPLING_COLS + ["samples_over_M"],
    "approx-g3": ["d", "R", "size", "total_samples", "rel_l2_error", "method", "source"],
    "roundtrip": ["family", "d", "R_or_s", "size", "variant", "source", "repetitions", "max_rel_error", "pass"],
}


@dataclass
class ExperimentConfig:
    """Parameters of one experiment; see ``EXPERIMENTS`` for the ids."""

    experiment: str
    family: str = "hc"
    dims: list = field(default_factory=lambda: [2])
    radii: list = field(default_factory=lambda: [2, 4, 8, 16])
    sizes: list = field(default_factory=lambda: [10, 100])
    radius: int = 64
    repetitions: int = 10
    seed: int = 0
    source: str = "lat1"
    variant: str = "full"
    method: str = "average"
    max_size: int = 100_000
    k_max: int = 1 << 15
    tolerance: float = 1e-10
    output: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown frequency family {self.family!r}")
        if self.source not in SOURCES or self.source == "user":
            raise ValidationError(f"lattice source must be lat1, lat2 or cbc, got {self.source!r}")
        if self.variant not in ("full", "reduction"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.experiment == "oversampling-full":
            self.variant = "full"
        elif self.experiment == "oversampling-reduction":
            self.variant = "reduction"
        elif self.experiment == "approx-g3":
            self.variant, self.family = "full", "hc"
        if self.method not in ("average", "direct"):
            raise ValidationError(f"unknown approximation method {self.method!r}")
        self.dims = [int(v) for v in self.dims]
        self.radii = [int(v) for v in self.radii]
        self.sizes = [int(v) for v in self.sizes]
        if not self.dims or min(self.dims) < 1:
            raise ValidationError("dims must be a non-empty list of positive integers")
        if self.family == "hc" and (not self.radii or min(self.radii) < 1):
            raise ValidationError("radii must be a non-empty list of positive integers")
        if self.family == "random":
            if not self.sizes or min(self.sizes) < 1:
                raise ValidationError("sizes must be a non-empty list of positive integers")
            if self.radius < 1:
                raise ValidationError("radius must be positive")
        if self.repetitions < 1:
            raise ValidationError("repetitions must be at least 1")

    def canonical(self) -> dict:
        doc = dataclasses.asdict(self)
        doc.pop("output")
        return doc

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()[:16]


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config; non-None ``overrides`` win over file values."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed config file {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "experiment" not in doc:
        raise ValidationError("config needs an 'experiment' id")
    return ExperimentConfig(**doc)


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        n = flag
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError("thread count must be positive")
    return n


def _rep_seed(cfg: ExperimentConfig, *key) -> int:
    return int(np.random.SeedSequence([cfg.seed, *key]).generate_state(1)[0])


def _grid(cfg: ExperimentConfig) -> list[tuple]:
    if cfg.family == "hc":
        pts = [(d, r) for d in cfg.dims for r in cfg.radii if hyperbolic_cross_size(d, r) <= cfg.max_size]
    else:
        pts = []
        for d in cfg.dims:
            for s in cfg.sizes:
                if math.log(s) > d * math.log(2 * cfg.radius + 1):
                    raise ValidationError(f"cannot draw {s} distinct vectors in d={d} with R={cfg.radius}")
                pts.append((d, s))
    if not pts:
        raise ValidationError("grid is empty after applying max_size")
    return pts


def _instances(cfg: ExperimentConfig, point: tuple):
    """Frequency sets of a grid point: one for hyperbolic crosses, ``repetitions`` for random sets."""
    d, v = point
    if cfg.family == "hc":
        yield hyperbolic_cross_even(d, v, max_size=cfg.max_size)
        return
    for rep in range(cfg.repetitions):
        yield random_cube_set(d, cfg.radius, v, _rep_seed(cfg, d, v, rep))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _oversampling_point(cfg: ExperimentConfig, point: tuple) -> dict:
    policy = CbcPolicy(seed=cfg.seed)
    best = None
    ok_all = True
    reps = []
    for fs in _instances(cfg, point):
        lat = build_lattice(fs, cfg.source, policy)
        plan = build_plan(fs, lat, cfg.variant)
        n = total_samples(plan)
        checks = check_plan(fs, plan)
        ok_all &= all(checks.values())
        reps.append(n)
        if best is None or n > best[0]:
            bound = theorem2_bound(fs.size, plan.tilde_m) if cfg.variant == "full" else theorem3_bound(fs.size, plan.tilde_m)
            best = (n, fs, lat, plan, bound)
    n, fs, lat, plan, bound = best
    row = {
        "family": cfg.family,
        "d": point[0],
        "R_or_s": point[1],
        "size": fs.size,
        "L": plan.L,
        "sum_P": sum(plan.primes),
        "total_samples": n,
        "oversampling": n / fs.size,
        "theorem_bound": bound,
        "bound_ok": bool(ok_all),
        "source": lat.source,
        "variant": cfg.variant,
        "M": lat.M,
        "tilde_M": plan.tilde_m,
        "rep_samples": ";".join(map(str, reps)),
    }
    if cfg.experiment == "sample-ratio":
        row["samples_over_M"] = n / lat.M
    return row


def _approx_point(cfg: ExperimentConfig, point: tuple) -> dict:
    d, r = point
    fs = hyperbolic_cross_even(d, r, max_size=cfg.max_size)
    lat = build_lattice(fs, cfg.source, CbcPolicy(seed=cfg.seed))
    plan = build_plan(fs, lat, "full")
    spec = g3_spec(d, cfg.k_max)
    samples = sample_on_plan(lambda x: eval_g3d(d, x), plan)
    rec = reconstruct(samples, plan, fs, cfg.method)
    return {
        "d": d,
        "R": r,
        "size": fs.size,
        "total_samples": total_samples(plan),
        "rel_l2_error": rel_l2_error(fs, rec, spec, radius=r),
        "method": cfg.method,
        "source": lat.source,
    }


def _roundtrip_point(cfg: ExperimentConfig, point: tuple) -> dict:
    worst = 0.0
    count = 0
    size = 0
    for rep, fs in enumerate(_instances(cfg, point)):
        lat = build_lattice(fs, cfg.source, CbcPolicy(seed=cfg.seed))
        plan = build_plan(fs, lat, cfg.variant)
        rng = np.random.default_rng(_rep_seed(cfg, 7, *point, rep))
        truth = np.exp(2j * np.pi * rng.random(fs.size))
        samples = sample_on_plan(TrigPolynomial.on_set(fs, truth), plan)
        method = ("direct" if cfg.method == "direct" else "average") if cfg.variant == "full" else "peeling"
        rec = reconstruct(samples, plan, fs, method)
        worst = max(worst, max_relative_error(rec, truth))
        count += 1
        size = max(size, fs.size)
    return {
        "family": cfg.family,
        "d": point[0],
        "R_or_s": point[1],
        "size": size,
        "variant": cfg.variant,
        "source": cfg.source,
        "repetitions": count,
        "max_rel_error": worst,
        "pass": worst <= cfg.tolerance,
    }


_RUNNERS = {
    "oversampling-full": _oversampling_point,
    "oversampling-reduction": _oversampling_point,
    "sample-ratio": _oversampling_point,
    "approx-g3": _approx_point,
    "roundtrip": _roundtrip_point,
}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    columns: list
    rows: list

    def provenance(self, timestamp: bool = True) -> list[str]:
        lines = [
            f"# experiment={self.config.experiment}",
            f"# config_hash={self.config.digest()}",
            f"# version={__version__}",
        ]
        if timestamp:
            lines.append("# generated=" + datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))
        return lines


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    points = _grid(cfg)
    runner = _RUNNERS[cfg.experiment]
    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(lambda p: runner(cfg, p), points))
    else:
        rows = [runner(cfg, p) for p in points]
    order = sorted(range(len(points)), key=lambda i: points[i])
    return ExperimentResult(cfg, COLUMNS[cfg.experiment], [rows[i] for i in order])


def format_result(result: ExperimentResult, fmt: str = "csv", timestamp: bool = True) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("\n".join(result.provenance(timestamp)) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([_fmt(row[c]) for c in result.columns])
        return buf.getvalue()
    if fmt == "structured":
        doc = {
            "experiment": result.config.experiment,
            "config_hash": result.config.digest(),
            "version": __version__,
            "config": result.config.canonical(),
            "columns": result.columns,
            "rows": [{c: (r[c] if isinstance(r[c], (bool, float, str)) or abs(r[c]) < 1 << 53 else str(r[c])) for c in result.columns} for r in result.rows],
        }
        if timestamp:
            doc["generated"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        return json.dumps(doc, indent=1) + "\n"
    raise ValidationError(f"unknown output format {fmt!r}")


def csv_body(text: str) -> str:
    """Drop ``#`` provenance lines."""
    return "".join(ln for ln in text.splitlines(keepends=True) if not ln.startswith("#"))
