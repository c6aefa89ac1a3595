"""Acceptance criteria, each reported as one PASS/FAIL line in the summary.

Expensive fixtures (random round-trip instances and the hyperbolic-cross
grid) are cached at module level so the bound-compliance check reuses every
plan built by the other criteria.
"""

import csv
import io
import math
import time
from functools import lru_cache

import numpy as np
import pytest

from multilattice.cli import main
from multilattice.freqset import hyperbolic_cross_even, hyperbolic_cross_size, random_cube_set
from multilattice.harness import ExperimentConfig, csv_body, format_result, run_experiment
from multilattice.mr1l import MultiLatticePlan, build_full, build_plan, check_plan, total_samples
from multilattice.numbertheory import default_indexer
from multilattice.rank1 import build_cbc, build_lattice, build_mixed_radix
from multilattice.spectral import (
    TrigPolynomial,
    aliasing_oracle,
    fft,
    lattice_dft,
    max_relative_error,
    naive_dft,
    reconstruct,
    sample_on_plan,
)
from multilattice.testfn import eval_g3d, g3_coeff_oracle, g3_spec, rel_l2_error

HC_DIMS = range(2, 10)
HC_RADII = [2**n for n in range(15)]
HC_MAX = 100_000

_CHECKS: list[tuple[str, dict]] = []


def _record_plan(tag, fs, plan):
    _CHECKS.append((tag, check_plan(fs, plan)))


@lru_cache(maxsize=None)
def roundtrip_errors(variant):
    """Max relative error over the 100 random instances for one variant, plus timing."""
    dims, sizes, sources = (2, 3, 6, 10), (10, 100, 1000), ("lat1", "cbc")
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        d, s, src = dims[i % 4], sizes[(i // 4) % 3], sources[(i // 12) % 2]
        fs = random_cube_set(d, 64, s, 1000 + i)
        lat = build_lattice(fs, src)
        plan = build_plan(fs, lat, variant)
        _record_plan(f"roundtrip-{variant}-{i}", fs, plan)
        rng = np.random.default_rng(i)
        truth = np.exp(2j * np.pi * rng.random(s))
        samples = sample_on_plan(TrigPolynomial.on_set(fs, truth), plan)
        rec = reconstruct(samples, plan, fs, "direct" if variant == "full" else "peeling")
        worst = max(worst, max_relative_error(rec, truth))
    return worst, time.perf_counter() - t0


@lru_cache(maxsize=None)
def hc_grid(variant):
    """(d, R, |I|, oversampling) for lat1 plans on the even hyperbolic cross grid."""
    out = []
    for d in HC_DIMS:
        for r in HC_RADII:
            if hyperbolic_cross_size(d, r) > HC_MAX:
                break
            fs = hyperbolic_cross_even(d, r)
            plan = build_plan(fs, build_mixed_radix(fs), variant)
            _record_plan(f"hc-{variant}-{d}-{r}", fs, plan)
            out.append((d, r, fs.size, total_samples(plan) / fs.size))
    return out


@lru_cache(maxsize=None)
def random_reduction_grid():
    """Max oversampling over 10 seeds for CBC lattices on random sets, R=64."""
    cfg = ExperimentConfig(
        "oversampling-reduction",
        family="random",
        source="cbc",
        dims=[2, 3, 4, 6, 10, 100, 1000, 10000],
        sizes=[10, 100, 1000, 10000],
        radius=64,
        repetitions=10,
    )
    rows = list(csv.DictReader(io.StringIO(csv_body(format_result(run_experiment(cfg), timestamp=False)))))
    return rows


def test_c1_exactness_full(verdict):
    worst, secs = roundtrip_errors("full")
    ok = worst <= 1e-10
    assert verdict("C1 exactness, full variant", ok, f"max rel error {worst:.2e} over 100 instances in {secs:.1f}s")


def test_c2_exactness_reduction(verdict):
    worst, secs = roundtrip_errors("reduction")
    ok = worst <= 1e-10
    assert verdict("C2 exactness, reduction variant with peeling", ok, f"max rel error {worst:.2e} over 100 instances in {secs:.1f}s")


def test_c3_bound_compliance(verdict):
    roundtrip_errors("full")
    roundtrip_errors("reduction")
    hc_grid("full")
    hc_grid("reduction")
    bad = [(tag, [k for k, v in c.items() if not v]) for tag, c in _CHECKS if not all(c.values())]
    ok = not bad
    assert verdict("C3 bound compliance", ok, f"{len(_CHECKS)} plans, {len(bad)} violations {bad[:5]}")


def test_c4_aliasing_oracle(verdict):
    rng = np.random.default_rng(44)
    primes = default_indexer().primes_in_range(2, 998)
    worst = 0.0
    for i in range(500):
        d = int(rng.integers(1, 6))
        r = int(rng.integers(1, 30))
        cube = (2 * r + 1) ** d
        s = int(min(rng.integers(1, 60), cube))
        fs = random_cube_set(d, r, s, i)
        support = random_cube_set(d, r, int(min(cube, 2 * s + 5)), 10_000 + i)
        coeffs = rng.normal(size=support.size) + 1j * rng.normal(size=support.size)
        poly = TrigPolynomial.on_set(support, coeffs / np.abs(coeffs).max())
        p = int(rng.choice(primes))
        z = rng.integers(0, 10**9, size=d)
        one = MultiLatticePlan(tuple(int(v) for v in z), [p], np.zeros(fs.size, dtype=np.int64), "full", p, "user", 1, 1)
        samples = sample_on_plan(poly, one, method="direct").values[0]
        worst = max(worst, float(np.abs(lattice_dft(samples, fs, z, p) - aliasing_oracle(poly, fs, z, p)).max()))
    ok = worst <= 1e-12
    assert verdict("C4 aliasing identity", ok, f"max discrepancy {worst:.2e} over 500 instances")


def test_c5_oversampling_full(verdict):
    rows = [row for row in hc_grid("full") if row[2] > 1]
    viol = [(d, r, n, round(o, 2)) for d, r, n, o in rows if o > 1.7 * math.log(n) + 3]
    frac = 1 - len(viol) / len(rows)
    ok = frac >= 0.95
    assert verdict("C5 full-variant oversampling <= 1.7 ln|I| + 3", ok, f"{frac:.1%} of {len(rows)} grid points; violations {viol}")


def test_c6_oversampling_reduction(verdict):
    hc = [row for row in hc_grid("reduction") if row[2] >= 100]
    worst_hc = max(hc, key=lambda row: row[3])
    ok_hc = worst_hc[3] < 3
    verdict("C6a reduction oversampling < 3 on hyperbolic crosses", ok_hc,
            f"max {worst_hc[3]:.3f} at d={worst_hc[0]}, |I|={worst_hc[2]} over {len(hc)} points")
    rows = random_reduction_grid()
    worst = max(rows, key=lambda r: float(r["oversampling"]))
    ok_rand = float(worst["oversampling"]) < 4 and all(r["bound_ok"] == "true" for r in rows)
    verdict("C6b reduction oversampling < 4 on random sets (max of 10 seeds)", ok_rand,
            f"max {float(worst['oversampling']):.3f} at d={worst['d']}, s={worst['R_or_s']} over {len(rows)} points")
    assert ok_hc and ok_rand


def _g3_series():
    out = []
    spec = g3_spec(2)
    for n in range(1, 11):
        r = 2**n
        fs = hyperbolic_cross_even(2, r)
        plan = build_full(fs, build_mixed_radix(fs))
        samples = sample_on_plan(lambda x: eval_g3d(2, x), plan)
        rec = reconstruct(samples, plan, fs, "average")
        out.append((r, fs.size, total_samples(plan), rel_l2_error(fs, rec, spec, radius=r)))
    return out


def test_c7_figure_values(verdict):
    targets = {5: 7, 65: 215, 1633: 15495}
    got = {}
    for n in range(1, 10):
        fs = hyperbolic_cross_even(2, 2**n)
        if fs.size in targets:
            got[fs.size] = total_samples(build_full(fs, build_mixed_radix(fs)))
    ok_a = all(abs(got[k] - v) <= 0.25 * v for k, v in targets.items())
    verdict("C7a sample counts for d=2 within 25%", ok_a, ", ".join(f"|I|={k}: {got[k]} vs {v}" for k, v in targets.items()))

    series = _g3_series()
    at801 = next(e for r, n, smp, e in series if smp == 801)
    ok_b = 3.45e-5 / 3 <= at801 <= 3 * 3.45e-5
    verdict("C7b G3 error at the 801-sample configuration (|I|=145) within 3x of 3.45e-05", ok_b, f"{at801:.4e}")

    ratios = [series[i][3] / series[i + 1][3] for i in range(len(series) - 1)]
    from32 = [q for (r, *_), q in zip(series, ratios) if r >= 32]
    ok_c = min(from32) >= 10
    verdict("C7c error drops >= 10x per refinement from R=32 on", ok_c, " ".join(f"{q:.2f}" for q in from32))
    assert ok_a and ok_b and ok_c


@pytest.mark.xfail(strict=True, reason="reference series itself drops only 6-8x between its first refinements")
def test_c7c_strict_every_refinement(verdict):
    series = _g3_series()
    ratios = [series[i][3] / series[i + 1][3] for i in range(len(series) - 1)]
    ok = min(ratios) >= 10
    verdict("C7c' error drops >= 10x between all consecutive refinements", ok, " ".join(f"{q:.2f}" for q in ratios))
    assert ok


def test_c8_transform_equivalence(verdict):
    rng = np.random.default_rng(8)
    primes = default_indexer().primes_in_range(2, 10_001)
    chosen = np.sort(rng.choice(primes, size=50, replace=False))
    worst = 0.0
    for p in chosen.tolist():
        x = rng.normal(size=p) + 1j * rng.normal(size=p)
        ref = naive_dft(x)
        worst = max(worst, float(np.abs(fft(x) - ref).max() / np.abs(ref).max()))
    ok = worst <= 1e-11
    assert verdict("C8 chirp-z vs naive DFT", ok, f"max rel discrepancy {worst:.2e} over 50 primes up to {chosen[-1]}")


def test_c9_determinism(tmp_path, verdict):
    suite = [
        ["--id", "oversampling-full", "--dims", "2,3,4", "--radii", "1,2,4,8,16,32,64"],
        ["--id", "oversampling-reduction", "--family", "random", "--source", "cbc", "--dims", "3,10,100", "--sizes", "10,100,1000", "--repetitions", "3"],
        ["--id", "sample-ratio", "--family", "random", "--source", "cbc", "--dims", "2,6", "--sizes", "50,200", "--repetitions", "2"],
        ["--id", "approx-g3", "--dims", "2,3", "--radii", "2,4,8,16,32,64"],
        ["--id", "roundtrip", "--family", "random", "--source", "lat2", "--variant", "reduction", "--dims", "2,6", "--sizes", "10,100", "--repetitions", "3"],
    ]
    same = []
    for i, args in enumerate(suite):
        bodies = []
        for threads in (1, 8):
            out = tmp_path / f"{i}-{threads}.csv"
            assert main(["experiment", *args, "--threads", str(threads), "--no-timestamp", "-o", str(out)]) == 0
            bodies.append(csv_body(out.read_text()))
        same.append(bodies[0] == bodies[1] and len(bodies[0].splitlines()) > 1)
    ok = all(same)
    assert verdict("C9 identical CSV with 1 and 8 threads", ok, f"{sum(same)}/{len(same)} experiments identical")


def test_c10_g3_normalization(verdict):
    res = g3_coeff_oracle(1 << 15)
    total = 2 * float(np.sum(res.table**2)) - float(res.table[0] ** 2)
    ok = abs(total - 1) <= 1e-8 and res.odd_max <= 1e-9
    assert verdict("C10 G3 table normalization", ok, f"sum |g|^2 - 1 = {total - 1:.1e}, max odd |g| = {res.odd_max:.1e}")


def test_soft_scaling(verdict):
    sizes = [1000, 2000, 4000, 8000]
    times = []
    for s in sizes:
        fs = random_cube_set(10, 64, s, 5)
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            build_full(fs, build_cbc(fs))
            best = min(best, time.perf_counter() - t0)
        times.append(max(best, 1e-2))
    ratios = [b / a for a, b in zip(times, times[1:])]
    ok = all(q <= 8 for q in ratios)
    assert verdict("Soft: construction time grows at most cubically when |I| doubles", ok,
                   " ".join(f"{q:.2f}" for q in ratios))
