"""Memory and timing benchmark across cost-volume representations.

Element counts come from the closed-form complexity model; constructed
representations additionally report the peak bytes allocated during
construction (tracked with tracemalloc, scoped to the construction call)
and the median wall time over repeats.  Representations whose element
count exceeds the construction cap are reported analytically and marked
modeled (empty measured columns).
"""

from __future__ import annotations

import csv
import gc
import io
import json
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from . import backend
from .attention import attend_pyramid
from .costvolume import (
    LookupSchedule,
    RepresentationKind,
    build_global1d_volume,
    build_local2d_volume,
    build_orthogonal_volume,
    element_count,
)
from .features import build_pyramid
from .grids import FeatureMap, FlowField, GrayImage
from .solver import SolverConfig, estimate_flow

BYTES_PER_ELEMENT = 4  # float32 cost volumes
DEFAULT_CAP = 2**28

STANDARD_RESOLUTIONS = ((448, 1024), (1080, 1920), (2160, 3840))

CSV_HEADER = (
    "representation,input_res,feat_h,feat_w,elements,bytes,"
    "peak_bytes,construct_ms,estimate_ms"
)


@dataclass(frozen=True)
class BenchmarkRow:
    """One (representation, resolution) measurement."""

    representation: str
    input_res: str
    feat_h: int
    feat_w: int
    elements: int
    bytes: int
    peak_bytes: int | None
    construct_ms: float | None
    estimate_ms: float | None

    @property
    def modeled(self) -> bool:
        return self.peak_bytes is None

    def as_dict(self):
        return {
            "representation": self.representation,
            "input_res": self.input_res,
            "feat_h": self.feat_h,
            "feat_w": self.feat_w,
            "elements": self.elements,
            "bytes": self.bytes,
            "peak_bytes": self.peak_bytes,
            "construct_ms": self.construct_ms,
            "estimate_ms": self.estimate_ms,
        }


def _synthetic_features(height, width, dim, rng) -> FeatureMap:
    data = rng.standard_normal((height, width, dim)).astype(np.float32)
    data /= np.linalg.norm(data, axis=-1, keepdims=True)
    return FeatureMap(data)


def _measure(construct, repeats):
    """Median wall time (ms) and peak traced bytes of ``construct()``."""
    construct()  # warm-up: JIT compilation and allocator pools stay out
    times = []
    peak = 0
    started = tracemalloc.is_tracing()
    if not started:
        tracemalloc.start()
    try:
        for _ in range(max(repeats, 1)):
            gc.collect()
            tracemalloc.reset_peak()
            before, _ = tracemalloc.get_traced_memory()
            t0 = time.perf_counter()
            result = construct()
            times.append((time.perf_counter() - t0) * 1000.0)
            _, high = tracemalloc.get_traced_memory()
            peak = max(peak, high - before)
            del result
    finally:
        if not started:
            tracemalloc.stop()
    return float(np.median(times)), int(peak)


def run_benchmark(
    resolutions=STANDARD_RESOLUTIONS,
    kinds=tuple(RepresentationKind),
    repeats: int = 5,
    radius: int = 8,
    local2d_radius: int = 4,
    feature_dim: int = 32,
    cap: int = DEFAULT_CAP,
    measure_estimate: bool = True,
    iterations: int = 24,
    seed: int = 0,
):
    """Benchmark every (resolution, representation) pair.

    Feature grids are floor(H/8) x floor(W/8).  The orthogonal and local-2D
    volumes are rebuilt per solver iteration in practice, so their
    construction time is the per-iteration cost; the global-1D volume is
    static.  ``estimate_ms`` is the wall time of one full flow estimate
    (orthogonal representation only).
    """
    rng = np.random.default_rng(seed)
    schedule = LookupSchedule.default()
    rows = []
    for height, width in resolutions:
        fh, fw = height // 8, width // 8
        label = f"{height}x{width}"
        source = _synthetic_features(fh, fw, feature_dim, rng)
        target = _synthetic_features(fh, fw, feature_dim, rng)
        # a grid too small for a three-level pyramid still gets its
        # element-count rows; only the pyramid-based builds are skipped
        has_pyramid = fh % 4 == 0 and fw % 4 == 0 and fh >= 4 and fw >= 4
        if has_pyramid:
            pyramid = build_pyramid(target)
            attended = attend_pyramid(pyramid, radius=16)
        flow = FlowField.zeros(fh, fw)

        for kind in kinds:
            kind = RepresentationKind(kind)
            count = element_count(kind, fh, fw, radius, local2d_radius)
            size_bytes = count * BYTES_PER_ELEMENT
            construct = None
            if count <= cap:
                if kind is RepresentationKind.LOCAL_ORTHOGONAL:
                    if has_pyramid:
                        construct = lambda: build_orthogonal_volume(
                            source, attended, flow, schedule
                        )
                elif kind is RepresentationKind.LOCAL_2D:
                    if has_pyramid:
                        construct = lambda: build_local2d_volume(
                            source, pyramid, flow, local2d_radius
                        )
                elif kind is RepresentationKind.GLOBAL_1D:
                    construct = lambda: build_global1d_volume(source, target)
                else:
                    construct = lambda: _all_pairs_scores(source, target)
            if construct is None:
                rows.append(
                    BenchmarkRow(kind.value, label, fh, fw, count, size_bytes, None, None, None)
                )
                continue
            ms, peak = _measure(construct, repeats)
            estimate_ms = None
            if kind is RepresentationKind.LOCAL_ORTHOGONAL and measure_estimate:
                estimate_ms = _estimate_wall_ms(height, width, iterations, seed)
            rows.append(
                BenchmarkRow(
                    kind.value, label, fh, fw, count, size_bytes, peak, ms, estimate_ms
                )
            )
    return rows


def _all_pairs_scores(source: FeatureMap, target: FeatureMap) -> np.ndarray:
    """Dense all-pairs correlation, used only under the construction cap."""
    a = source.data.reshape(-1, source.channels)
    b = target.data.reshape(-1, target.channels)
    return (a @ b.T) / np.float32(np.sqrt(source.channels))


def _estimate_wall_ms(height, width, iterations, seed) -> float:
    """One full estimate_flow wall time on a synthetic pair (cropped /32)."""
    h = max(height - height % 32, 32)
    w = max(width - width % 32, 32)
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, 1.0, (h, w))
    src = GrayImage(base)
    tgt = GrayImage(np.clip(base + rng.uniform(-0.01, 0.01, (h, w)), 0.0, 1.0))
    config = SolverConfig(iterations=iterations)
    t0 = time.perf_counter()
    estimate_flow(src, tgt, config)
    return (time.perf_counter() - t0) * 1000.0


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for row in rows:
        d = row.as_dict()
        writer.writerow(_format_cell(d[key]) for key in CSV_HEADER.split(","))
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps([row.as_dict() for row in rows], indent=2) + "\n"


def summarize(rows) -> str:
    """Human-readable table plus the cost-volume-only ratio footer."""
    lines = []
    header = f"{'representation':<18}{'input':<12}{'grid':<10}{'elements':>16}{'MiB':>10}{'peak MiB':>10}{'build ms':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in rows:
        peak = f"{r.peak_bytes / 2**20:.1f}" if r.peak_bytes is not None else "modeled"
        ms = f"{r.construct_ms:.1f}" if r.construct_ms is not None else "-"
        lines.append(
            f"{r.representation:<18}{r.input_res:<12}{r.feat_h}x{r.feat_w:<7}"
            f"{r.elements:>16,}{r.bytes / 2**20:>10.1f}{peak:>10}{ms:>10}"
        )
    by_res = {}
    for r in rows:
        by_res.setdefault(r.input_res, {})[r.representation] = r.elements
    lines.append("")
    lines.append(
        "note: counts cover the cost-volume buffers only; end-to-end network"
    )
    lines.append(
        "memory (activations, weights) is out of scope for this model."
    )
    ortho = RepresentationKind.LOCAL_ORTHOGONAL.value
    for res, counts in by_res.items():
        if ortho not in counts:
            continue
        parts = []
        for kind, n in counts.items():
            if kind == ortho:
                continue
            parts.append(f"{kind}: {n / counts[ortho]:.1f}x")
        if parts:
            lines.append(f"{res}: elements vs {ortho} -> " + ", ".join(parts))
    return "\n".join(lines) + "\n"


def kernel_backend_benchmark(height=32, width=64, dim=32, repeats=5, seed=0):
    """Time each hot kernel on the numba and numpy backends.

    Returns rows of (kernel, backend, median ms, max |diff| vs numpy).
    """
    rng = np.random.default_rng(seed)
    source = _synthetic_features(height, width, dim, rng)
    target = _synthetic_features(height, width, dim, rng)
    pyramid = build_pyramid(target)
    flow = FlowField(
        rng.uniform(-2, 2, (height, width)).astype(np.float32),
        rng.uniform(-2, 2, (height, width)).astype(np.float32),
    )
    schedule = LookupSchedule.default()
    upstream = rng.standard_normal((2 * schedule.bin_count, height, width)).astype(
        np.float32
    )
    from .attention import AttentionConfig, VERTICAL, attention_backward, local_axial_attention
    from .costvolume import orthogonal_volume_backward

    att_cfg = AttentionConfig(axis=VERTICAL, radius=8)
    upstream_att = FeatureMap(rng.standard_normal((height, width, dim)).astype(np.float32))

    def tasks(attended):
        return {
            "attention_forward": lambda: local_axial_attention(target, att_cfg),
            "attention_backward": lambda: attention_backward(target, att_cfg, upstream_att),
            "volume_forward": lambda: build_orthogonal_volume(source, attended, flow, schedule),
            "volume_backward": lambda: orthogonal_volume_backward(
                source, attended, flow, schedule, upstream
            ),
            "local2d_forward": lambda: build_local2d_volume(source, pyramid, flow),
            "global1d_forward": lambda: build_global1d_volume(source, target),
        }

    results = []
    outputs = {}
    previous = backend.active_backend()
    try:
        for name in ("numpy", "numba"):
            backend.set_backend(name)
            attended = attend_pyramid(pyramid, radius=8)
            for kernel, fn in tasks(attended).items():
                fn()  # warm up (JIT compile on numba)
                times = []
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    out = fn()
                    times.append((time.perf_counter() - t0) * 1000.0)
                key = (kernel, name)
                outputs[key] = out
                results.append([kernel, name, float(np.median(times)), None])
    finally:
        backend.set_backend(previous)

    def flatten(out):
        if isinstance(out, np.ndarray):
            return [out]
        if isinstance(out, FlowField):
            return [out.u, out.v]
        if isinstance(out, tuple):
            arrays = []
            for part in out:
                arrays.extend(flatten(part))
            return arrays
        return [out.data]

    for row in results:
        kernel, name = row[0], row[1]
        if name == "numpy":
            row[3] = 0.0
            continue
        ref = flatten(outputs[(kernel, "numpy")])
        got = flatten(outputs[(kernel, "numba")])
        row[3] = max(
            float(np.max(np.abs(a - b))) if a.size else 0.0
            for a, b in zip(ref, got)
        )
    return results
