"""Command-line front end: flow estimation, benchmarks and self-checks."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import backend, benchmark, gradcheck
from .costvolume import LookupSchedule, RepresentationKind
from .flowio import read_flo, write_flo
from .images import crop_to_multiple, load_gray_image, save_rgb_png
from .solver import SolverConfig, estimate_flow, evaluate
from .visualize import flow_to_rgb

_SCHEDULES = {
    "default": LookupSchedule.default,
    "level0-only": LookupSchedule.level0_only,
}


def _add_solver_flags(parser):
    parser.add_argument("--iterations", type=int, default=24, help="solver iterations")
    parser.add_argument(
        "--radius-schedule",
        choices=sorted(_SCHEDULES),
        default="default",
        help="lookup offset schedule",
    )
    parser.add_argument("--beta", type=float, default=20.0, help="softmax inverse temperature")
    parser.add_argument("--alpha", type=float, default=0.8, help="update damping")
    parser.add_argument("--seed", type=int, default=0, help="seed for seeded components")


def _add_common_flags(parser):
    parser.add_argument("--threads", type=int, default=None, help="kernel worker threads")
    parser.add_argument("--verbose", action="store_true", help="chatty progress output")


def _apply_threads(args):
    if args.threads is not None:
        effective = backend.set_threads(args.threads)
        if args.verbose:
            print(f"threads: {effective} ({backend.active_backend()} backend)")


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        iterations=args.iterations,
        beta=args.beta,
        alpha=args.alpha,
        schedule=_SCHEDULES[args.radius_schedule](),
        seed=args.seed,
    )


def cmd_flow(args) -> int:
    _apply_threads(args)
    source = crop_to_multiple(load_gray_image(args.source))
    target = crop_to_multiple(load_gray_image(args.target))
    if (source.height, source.width) != (target.height, target.width):
        raise ValueError(
            f"image sizes differ after cropping: "
            f"{source.width}x{source.height} vs {target.width}x{target.height}"
        )
    config = _solver_config(args)
    flow, sequence = estimate_flow(source, target, config)
    if args.verbose:
        print(f"backend: {backend.active_backend()}")
        print(f"iterations recorded: {len(sequence)}")
        mags = flow.magnitude()
        print(f"flow magnitude: mean {mags.mean():.3f}px  max {mags.max():.3f}px")
    write_flo(flow, args.output)
    print(f"wrote {args.output}")
    if args.viz:
        save_rgb_png(flow_to_rgb(flow), args.viz)
        print(f"wrote {args.viz}")
    if args.gt:
        gt = read_flo(args.gt)
        if (gt.height, gt.width) != (flow.height, flow.width):
            raise ValueError("ground-truth flow size does not match the estimate")
        report = evaluate(flow, gt, np.ones((flow.height, flow.width), dtype=bool))
        print(f"EPE: {report.epe:.4f}px  F1-all: {report.f1_all:.2f}%")
    return 0


def _parse_resolution(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"resolution must look like 1080x1920, got {text!r}"
        ) from None


def cmd_bench(args) -> int:
    _apply_threads(args)
    if args.representations == "all":
        kinds = tuple(RepresentationKind)
    else:
        kinds = tuple(RepresentationKind(k) for k in args.representations.split(","))
    rows = benchmark.run_benchmark(
        resolutions=args.resolutions,
        kinds=kinds,
        repeats=args.repeats,
        cap=args.cap,
        measure_estimate=not args.skip_estimate,
        iterations=args.iterations,
        seed=args.seed,
    )
    print(benchmark.summarize(rows), end="")
    if args.output:
        text = (
            benchmark.rows_to_json(rows)
            if args.format == "json"
            else benchmark.rows_to_csv(rows)
        )
        with open(args.output, "w") as fh:
            fh.write(text)
        print(f"wrote {args.output}")
    return 0


def cmd_gradcheck(args) -> int:
    _apply_threads(args)
    results, ok = gradcheck.run_suite(args.seeds, args.tolerance)
    worst = max(results, key=lambda r: r.max_rel_error)
    for r in results:
        if args.verbose or not r.passed(args.tolerance):
            status = "ok" if r.passed(args.tolerance) else "FAIL"
            print(f"{status}  {r.operator} seed={r.seed}  max rel err {r.max_rel_error:.3e}")
    print(
        f"worst: {worst.operator} seed={worst.seed} "
        f"max rel err {worst.max_rel_error:.3e} (tolerance {args.tolerance:g})"
    )
    if not ok:
        failing = [r for r in results if not r.passed(args.tolerance)]
        print(
            "gradient check FAILED: "
            + ", ".join(f"{r.operator}@seed{r.seed}" for r in failing),
            file=sys.stderr,
        )
        return 1
    print("gradient check passed")
    return 0


def cmd_bench_kernels(args) -> int:
    _apply_threads(args)
    h, w = args.size
    rows = benchmark.kernel_backend_benchmark(h, w, repeats=args.repeats, seed=args.seed)
    print(f"{'kernel':<22}{'backend':<10}{'median ms':>12}{'max |diff|':>14}")
    for kernel, name, ms, diff in rows:
        diff_txt = "-" if name == "numpy" else f"{diff:.2e}"
        print(f"{kernel:<22}{name:<10}{ms:>12.3f}{diff_txt:>14}")
    numpy_ms = {k: ms for k, n, ms, _ in rows if n == "numpy"}
    for kernel, name, ms, _ in rows:
        if name == "numba" and ms > 0:
            print(f"{kernel}: numba speedup {numpy_ms[kernel] / ms:.1f}x")
    return 0


def cmd_selftest(args) -> int:
    _apply_threads(args)
    from .solver import TextureSpec, Translation, make_synthetic_pair

    failures = []
    source, target, gt, valid = make_synthetic_pair(
        TextureSpec(seed=args.seed), Translation(16.0, 8.0), (224, 512)
    )
    flow, _ = estimate_flow(source, target, SolverConfig())
    margin = 32
    interior = np.zeros(valid.shape, dtype=bool)
    interior[margin:-margin, margin:-margin] = True
    report = evaluate(flow, gt, valid & interior)
    print(f"translation (16, 8): interior EPE {report.epe:.3f}px")
    if report.epe > 2.0:
        failures.append("translation EPE above 2px")

    from .costvolume import element_count

    if element_count(RepresentationKind.LOCAL_ORTHOGONAL, 1, 1) != 34:
        failures.append("orthogonal channel count is not 34")
    if element_count(RepresentationKind.LOCAL_2D, 1, 1) != 243:
        failures.append("local-2d channel count is not 243")

    if failures:
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return 1
    print("selftest passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthoflow",
        description="Optical flow via local orthogonal cost volumes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="estimate flow between two images")
    p.add_argument("source", help="source image (PNG/PPM/PGM)")
    p.add_argument("target", help="target image")
    p.add_argument("output", help="output .flo path")
    p.add_argument("--viz", help="also write a color-wheel PNG here")
    p.add_argument("--gt", help="ground-truth .flo to report EPE against")
    _add_solver_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("bench", help="benchmark cost-volume representations")
    p.add_argument(
        "--resolutions",
        type=lambda s: [_parse_resolution(r) for r in s.split(",")],
        default=list(benchmark.STANDARD_RESOLUTIONS),
        help="comma-separated HxW list (default 448x1024,1080x1920,2160x3840)",
    )
    p.add_argument(
        "--representations",
        default="all",
        help="comma-separated kinds or 'all' "
        f"({', '.join(k.value for k in RepresentationKind)})",
    )
    p.add_argument("--repeats", type=int, default=5, help="construction repeats")
    p.add_argument("--cap", type=int, default=benchmark.DEFAULT_CAP,
                   help="max elements to actually construct")
    p.add_argument("--skip-estimate", action="store_true",
                   help="skip the full estimate_flow timing")
    p.add_argument("--iterations", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="report path")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_common_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--seeds", type=int, default=20, help="seeds per operator")
    p.add_argument("--tolerance", type=float, default=1e-4)
    _add_common_flags(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench-kernels", help="compare numba and numpy kernels")
    p.add_argument("--size", type=_parse_resolution, default=(32, 64),
                   help="feature grid HxW")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    _add_common_flags(p)
    p.set_defaults(func=cmd_bench_kernels)

    p = sub.add_parser("selftest", help="quick end-to-end smoke test")
    p.add_argument("--seed", type=int, default=0)
    _add_common_flags(p)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
