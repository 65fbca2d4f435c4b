"""Finite-difference verification of the analytic backward passes.

The scalar probe loss is L = <upstream, forward(inputs)>; every input
entry is perturbed centrally and compared against the analytic gradient.
All checks run in float64 with the default step 1e-5.  Flow entries are
kept at least a quarter cell away from the integer lattice where the
bilinear sampler has kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionConfig, VERTICAL, attention_backward, local_axial_attention
from .costvolume import (
    LookupSchedule,
    build_orthogonal_volume,
    orthogonal_volume_backward,
)
from .features import build_pyramid
from .attention import attend_pyramid
from .grids import FeatureMap, FlowField

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class GradCheckResult:
    """Worst relative error of one operator's gradient check."""

    operator: str
    seed: int
    max_rel_error: float

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_rel_error < tolerance


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|, 1e-3) elementwise.

    The floor keeps near-zero entries, whose finite differences are pure
    round-off, from dominating the ratio.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
    return np.abs(analytic - numeric) / denom


def finite_difference(loss_fn, array: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central finite-difference gradient of ``loss_fn`` w.r.t. ``array``.

    The array is perturbed in place and restored; ``loss_fn`` takes no
    arguments and must observe the mutation.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = loss_fn()
        flat[i] = orig - step
        lo = loss_fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def attention_gradcheck(
    seed: int,
    shape=(6, 6, 4),
    radius: int = 2,
    projection: str = "identity",
    step: float = DEFAULT_STEP,
) -> GradCheckResult:
    """Check attention_backward against finite differences on one instance."""
    rng = np.random.default_rng(seed)
    data = rng.standard_normal(shape)
    upstream = rng.standard_normal(shape)
    config = AttentionConfig(axis=VERTICAL, radius=radius, projection=projection, seed=seed)

    analytic = attention_backward(FeatureMap(data), config, FeatureMap(upstream)).data

    def loss():
        out = local_axial_attention(FeatureMap(data), config).data
        return float(np.sum(upstream * out))

    numeric = finite_difference(loss, data, step)
    return GradCheckResult("attention_backward", seed, float(relative_errors(analytic, numeric).max()))


def volume_gradcheck(
    seed: int,
    shape=(8, 8, 4),
    flow_offset: float = 0.4,
    step: float = DEFAULT_STEP,
    schedule: LookupSchedule | None = None,
) -> GradCheckResult:
    """Check orthogonal_volume_backward (source, attended maps, flow)."""
    schedule = schedule or LookupSchedule.default()
    rng = np.random.default_rng(seed)
    h, w, d = shape
    source = FeatureMap(rng.standard_normal(shape))
    pyramid = build_pyramid(FeatureMap(rng.standard_normal(shape)))
    attended = attend_pyramid(pyramid, radius=2)
    # mutable copies of the attended maps so finite differences can probe them
    att_arrays = [m.data.copy() for m in attended.vertical] + [
        m.data.copy() for m in attended.horizontal
    ]

    from .attention import AttendedPyramid

    def rebuild():
        return AttendedPyramid(
            vertical=tuple(FeatureMap(a) for a in att_arrays[:3]),
            horizontal=tuple(FeatureMap(a) for a in att_arrays[3:]),
        )

    # flow stays a safe distance from the sampler's lattice kinks
    u = np.full((h, w), flow_offset) + rng.uniform(-0.1, 0.1, (h, w))
    v = np.full((h, w), -flow_offset) + rng.uniform(-0.1, 0.1, (h, w))
    flow = FlowField(u, v)
    nbins = schedule.bin_count
    upstream = rng.standard_normal((2 * nbins, h, w))

    att = rebuild()
    d_source, dav, dah, d_flow = orthogonal_volume_backward(
        source, att, flow, schedule, upstream
    )

    def loss():
        vol = build_orthogonal_volume(source, rebuild(), flow, schedule)
        return float(np.sum(upstream * vol.data))

    worst = 0.0
    worst = max(worst, float(relative_errors(d_source, finite_difference(loss, source.data, step)).max()))
    for analytic, probe in zip(list(dav) + list(dah), att_arrays):
        numeric = finite_difference(loss, probe, step)
        worst = max(worst, float(relative_errors(analytic, numeric).max()))
    worst = max(worst, float(relative_errors(d_flow.u, finite_difference(loss, u, step)).max()))
    worst = max(worst, float(relative_errors(d_flow.v, finite_difference(loss, v, step)).max()))
    return GradCheckResult("orthogonal_volume_backward", seed, worst)


def run_suite(seeds: int = 20, tolerance: float = DEFAULT_TOLERANCE):
    """Run both gradient suites; returns (results, all_passed)."""
    results = []
    for seed in range(seeds):
        results.append(attention_gradcheck(seed))
    for seed in range(seeds):
        results.append(volume_gradcheck(seed))
    ok = all(r.passed(tolerance) for r in results)
    return results, ok
