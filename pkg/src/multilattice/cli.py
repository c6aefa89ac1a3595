"""Command line interface: ``multilattice <subcommand> ...``.

Exit status is 0 on success, 2 for invalid input and 3 when an internal
guarantee fails (for example no candidate prime achieves the halving).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .errors import InternalConsistencyError, ValidationError
from .freqset import expansion, hyperbolic_cross_even, random_cube_set, read_freqset, write_freqset
from .harness import EXPERIMENTS, format_result, load_config, resolve_threads, run_experiment
from .mr1l import build_plan, plan_summary, read_plan, write_plan
from .rank1 import CbcPolicy, build_lattice, read_lattice, write_lattice
from .spectral import (
    TrigPolynomial,
    read_coefficients,
    read_samples,
    reconstruct,
    sample_on_plan,
    write_coefficients,
    write_samples,
)
from .testfn import eval_g3d

EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 2, 3


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated integer list, got {text!r}") from None


def _emit(doc: dict, fmt: str) -> None:
    if fmt == "structured":
        print(json.dumps(doc, default=str))
        return
    w = csv.writer(sys.stdout, lineterminator="\n")
    keys = list(doc)
    w.writerow(keys)
    w.writerow([";".join(map(str, v)) if isinstance(v, list) else v for v in doc.values()])


def cmd_genfreq(args) -> None:
    if args.family == "hc":
        fs = hyperbolic_cross_even(args.dim, args.radius)
    else:
        if args.size is None:
            raise ValidationError("--size is required for random sets")
        fs = random_cube_set(args.dim, args.radius, args.size, args.seed)
    write_freqset(fs, args.output)
    n_i, _ = expansion(fs)
    _emit({"d": fs.dim, "s": fs.size, "N_I": n_i, "digest": fs.digest()}, args.format)


def cmd_lattice(args) -> None:
    fs = read_freqset(args.freq)
    lat = build_lattice(fs, args.source, CbcPolicy(seed=args.seed))
    write_lattice(lat, args.output)
    _emit({"source": lat.source, "M": lat.M, "z": list(lat.z)}, args.format)


def cmd_plan(args) -> None:
    fs = read_freqset(args.freq)
    lat = read_lattice(args.lattice)
    plan = build_plan(fs, lat, args.variant, threads=args.threads)
    write_plan(plan, args.output)
    _emit(plan_summary(fs, plan), args.format)


def cmd_sample(args) -> None:
    plan = read_plan(args.plan)
    if args.function == "g3":
        d = len(plan.z)
        f = lambda x: eval_g3d(d, x)  # noqa: E731
    else:
        if not (args.freq and args.coeffs):
            raise ValidationError("--function poly needs --freq and --coeffs")
        fs = read_freqset(args.freq)
        f = TrigPolynomial.on_set(fs, read_coefficients(args.coeffs, fs.size))
    samples = sample_on_plan(f, plan)
    write_samples(samples, args.output)
    _emit({"lattices": plan.L, "evaluations": 1 - plan.L + sum(plan.primes), "plan": samples.plan_digest}, args.format)


def cmd_reconstruct(args) -> None:
    fs = read_freqset(args.freq)
    plan = read_plan(args.plan)
    samples = read_samples(args.samples)
    if samples.plan_digest and samples.plan_digest != plan.digest():
        raise ValidationError("sample file was produced for a different plan")
    rec = reconstruct(samples, plan, fs, args.method)
    write_coefficients(rec, args.output)
    _emit({"s": fs.size, "method": args.method, "max_abs": float(np.abs(rec.coeffs).max())}, args.format)


def cmd_experiment(args) -> None:
    overrides = {
        "experiment": args.id,
        "family": args.family,
        "dims": args.dims,
        "radii": args.radii,
        "sizes": args.sizes,
        "radius": args.radius,
        "repetitions": args.repetitions,
        "seed": args.seed,
        "source": args.source,
        "variant": args.variant,
        "method": args.method,
        "max_size": args.max_size,
        "output": args.output,
    }
    cfg = load_config(args.config, overrides)
    result = run_experiment(cfg, threads=args.threads)
    text = format_result(result, args.format, timestamp=not args.no_timestamp)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "structured"), default="csv", help="stdout/report format")
    common.add_argument("--threads", type=int, default=None, help="worker threads (env MULTILATTICE_THREADS otherwise)")

    p = argparse.ArgumentParser(prog="multilattice", description="Multiple rank-1 lattice sampling and reconstruction.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("genfreq", parents=[common], help="generate a frequency set")
    g.add_argument("--family", choices=("hc", "random"), default="hc")
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--radius", type=int, required=True)
    g.add_argument("--size", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_genfreq)

    g = sub.add_parser("lattice", parents=[common], help="build a reconstructing single rank-1 lattice")
    g.add_argument("--freq", required=True)
    g.add_argument("--source", choices=("lat1", "lat2", "cbc"), default="lat1")
    g.add_argument("--seed", type=int, default=0, help="seed for the component-by-component search")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_lattice)

    g = sub.add_parser("plan", parents=[common], help="split a single lattice into multiple prime lattices")
    g.add_argument("--freq", required=True)
    g.add_argument("--lattice", required=True)
    g.add_argument("--variant", choices=("full", "reduction"), default="full")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_plan)

    g = sub.add_parser("sample", parents=[common], help="sample a function on a plan")
    g.add_argument("--plan", required=True)
    g.add_argument("--function", choices=("g3", "poly"), default="g3")
    g.add_argument("--freq", help="frequency set of the polynomial (poly)")
    g.add_argument("--coeffs", help="coefficient file aligned with --freq (poly)")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_sample)

    g = sub.add_parser("reconstruct", parents=[common], help="recover coefficients from samples")
    g.add_argument("--freq", required=True)
    g.add_argument("--plan", required=True)
    g.add_argument("--samples", required=True)
    g.add_argument("--method", choices=("auto", "direct", "average", "peeling"), default="auto")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_reconstruct)

    g = sub.add_parser("experiment", parents=[common], help="run an experiment grid and write CSV")
    g.add_argument("--config", help="JSON config file; flags override its values")
    g.add_argument("--id", choices=EXPERIMENTS)
    g.add_argument("--family", choices=("hc", "random"))
    g.add_argument("--dims", type=_ints)
    g.add_argument("--radii", type=_ints)
    g.add_argument("--sizes", type=_ints)
    g.add_argument("--radius", type=int)
    g.add_argument("--repetitions", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--source", choices=("lat1", "lat2", "cbc"))
    g.add_argument("--variant", choices=("full", "reduction"))
    g.add_argument("--method", choices=("average", "direct"))
    g.add_argument("--max-size", type=int)
    g.add_argument("--no-timestamp", action="store_true", help="omit the generated-at provenance line")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.threads = resolve_threads(args.threads)
        args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InternalConsistencyError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(json.dumps(diag, default=str), file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
