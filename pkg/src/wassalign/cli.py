"""Command-line front end: emd, compress, align, bench and gen subcommands.

Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
failures (non-convergence, infeasible flow, broken invariants).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .alignment import AlignmentConfig, align_with_compression, alternate_minimize
from .compression import compress, gonzalez_adaptive
from .core import NumericalError
from .experiment import load_experiment_config, rate_to_k, run_experiment
from .fileio import (
    compression_to_text,
    load_pointset,
    report_to_json,
    save_pointset,
)
from .generators import generate_planted
from .transport import TransportConfig, fractional_wasserstein, solve_plain

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


def _write_text(out_path, text: str) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _transport_config(args) -> TransportConfig:
    return TransportConfig(
        backend=args.backend,
        sinkhorn_regularization=getattr(args, "reg", None),
    )


def _cmd_emd(args) -> int:
    a = load_pointset(args.file_a)
    b = load_pointset(args.file_b)
    cfg = _transport_config(args)
    if args.fraction == 1.0:
        plan = solve_plain(a, b, cfg)
    else:
        plan = fractional_wasserstein(a, b, args.fraction, cfg)
    print(repr(plan.normalized_distance))
    return EXIT_OK


def _cmd_compress(args) -> int:
    points = load_pointset(args.file)
    if (args.k is None) == (args.epsilon is None):
        raise ValueError("pass exactly one of --k and --epsilon")
    if args.epsilon is not None:
        if args.method != "kcenter":
            raise ValueError("--epsilon only applies to --method kcenter")
        result = gonzalez_adaptive(
            points, args.epsilon, args.k_cap or points.n, seed=args.seed
        )
    else:
        result = compress(points, args.method, args.k, seed=args.seed)
    _write_text(args.out, compression_to_text(result))
    return EXIT_OK


def _cmd_align(args) -> int:
    a = load_pointset(args.file_a)
    b = load_pointset(args.file_b)
    align_cfg = AlignmentConfig(
        max_rounds=args.max_rounds,
        objective_tolerance=args.tol,
        fraction=args.fraction,
        transport=_transport_config(args),
        restarts=args.restarts,
        seed=args.seed,
    )
    if args.method == "original":
        if args.k is not None or args.rate is not None:
            raise ValueError("--k and --rate do not apply to --method original")
        report = alternate_minimize(a, b, align_cfg)
    else:
        if (args.k is None) == (args.rate is None):
            raise ValueError("pass exactly one of --k and --rate")
        k = args.k if args.k is not None else rate_to_k(args.rate, a.n, b.n)
        report = align_with_compression(a, b, args.method, align_cfg, k=k)
    text = report_to_json(report, include_timings=args.timings) + "\n"
    _write_text(args.out, text)
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = load_experiment_config(args.config)
    result = run_experiment(cfg)
    _write_text(args.out, result.to_csv())
    print(result.summary_text(), file=sys.stderr)
    failures = result.failures()
    if failures:
        for row in failures:
            print(
                f"failed cell method={row.method} gamma={row.gamma} "
                f"lambda={row.fraction} trial={row.trial}: {row.error}",
                file=sys.stderr,
            )
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_gen(args) -> int:
    a, b, truth = generate_planted(
        args.n,
        args.d,
        args.intrinsic_dim,
        noise=args.noise,
        outlier_fraction=args.outlier_fraction,
        seed=args.seed,
    )
    save_pointset(args.out_a, a)
    save_pointset(args.out_b, b)
    if args.transform_out is not None:
        doc = {
            "rotation": [float(x) for x in np.asarray(truth.rotation).ravel()],
            "translation": [float(x) for x in np.asarray(truth.translation)],
            "d": args.d,
        }
        with open(args.transform_out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


_METHOD_CHOICES = ("original", "kcenter", "kcenter+", "kmeans", "random", "random+")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wassalign",
        description="Rigid alignment of weighted point sets under (fractional) Wasserstein distance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    emd = sub.add_parser("emd", help="distance between two point-set files")
    emd.add_argument("file_a")
    emd.add_argument("file_b")
    emd.add_argument("--lambda", dest="fraction", type=float, default=1.0, help="fraction of mass to ship, in (0, 1]")
    emd.add_argument("--backend", choices=("exact", "sinkhorn"), default="exact")
    emd.add_argument("--reg", type=float, default=None, help="sinkhorn regularization override")
    emd.set_defaults(func=_cmd_emd)

    comp = sub.add_parser("compress", help="compress a point-set file")
    comp.add_argument("file")
    comp.add_argument("--method", choices=_METHOD_CHOICES[1:], default="kcenter")
    comp.add_argument("--k", type=int, default=None, help="number of centers")
    comp.add_argument("--epsilon", type=float, default=None, help="adaptive radius target (kcenter only)")
    comp.add_argument("--k-cap", type=int, default=None, help="center cap for the adaptive rule")
    comp.add_argument("--seed", type=int, default=0)
    comp.add_argument("--out", default=None)
    comp.set_defaults(func=_cmd_compress)

    align = sub.add_parser("align", help="align two point-set files")
    align.add_argument("file_a")
    align.add_argument("file_b")
    align.add_argument("--method", choices=_METHOD_CHOICES, default="original")
    align.add_argument("--k", type=int, default=None, help="number of centers per side")
    align.add_argument("--rate", type=float, default=None, help="compression rate; k = round(rate * (n1 + n2) / 2)")
    align.add_argument("--lambda", dest="fraction", type=float, default=1.0)
    align.add_argument("--max-rounds", type=int, default=10)
    align.add_argument("--tol", type=float, default=1e-6, help="relative objective-decrease stop")
    align.add_argument("--restarts", type=int, default=0)
    align.add_argument("--seed", type=int, default=0)
    align.add_argument("--backend", choices=("exact", "sinkhorn"), default="exact")
    align.add_argument("--reg", type=float, default=None)
    align.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
    align.add_argument("--out", default=None)
    align.set_defaults(func=_cmd_align)

    bench = sub.add_parser("bench", help="run a benchmark sweep from a config file")
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", default=None, help="CSV path; stdout when omitted")
    bench.set_defaults(func=_cmd_bench)

    gen = sub.add_parser("gen", help="emit a planted synthetic instance")
    gen.add_argument("out_a")
    gen.add_argument("out_b")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--intrinsic-dim", type=int, required=True)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--outlier-fraction", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--transform-out", default=None, help="write the planted transform as JSON")
    gen.set_defaults(func=_cmd_gen)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
