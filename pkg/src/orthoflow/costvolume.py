"""Orthogonal cost volume construction and baseline representations.

The orthogonal volume scores, for every source cell, a set of 1D offsets
along each axis centered at the cell's current flow target.  Offsets follow
a radius-distribution multi-scale table: small offsets sample the finest
attended map, large offsets sample pooled maps at half/quarter resolution,
so a fixed bin budget reaches far.  Baselines (full 2D windows, static
global 1D rows/columns, all-pairs) exist for the memory benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import backend
from .attention import AttendedPyramid
from .features import FeaturePyramid
from .grids import FeatureMap, FlowField

DEFAULT_LOCAL2D_RADIUS = 4
LOCAL2D_SCALES = 3


class RepresentationKind(str, Enum):
    LOCAL_ORTHOGONAL = "local_orthogonal"
    LOCAL_2D = "local_2d"
    GLOBAL_1D = "global_1d"
    ALL_PAIRS_4D = "all_pairs_4d"


@dataclass(frozen=True)
class LookupEntry:
    """Offsets (in level-0 cell units) looked up at one pyramid level."""

    level: int
    divisor: int
    offsets: tuple[int, ...]

    def __post_init__(self):
        if self.level not in (0, 1, 2):
            raise ValueError("lookup level must be 0, 1 or 2")
        if self.divisor != 2**self.level:
            raise ValueError("scale divisor must be 2**level")
        if not self.offsets:
            raise ValueError("lookup entry needs at least one offset")
        nonzero = [o for o in self.offsets if o != 0]
        if sorted(nonzero) != sorted(-o for o in nonzero):
            raise ValueError("offsets must be symmetric about 0")


@dataclass(frozen=True)
class LookupSchedule:
    """Radius-distribution table mapping pyramid level to offset sets."""

    entries: tuple[LookupEntry, ...]

    def __post_init__(self):
        all_offsets = [o for e in self.entries for o in e.offsets]
        if len(set(all_offsets)) != len(all_offsets):
            raise ValueError("offsets must be unique across levels")
        if all_offsets.count(0) != 1:
            raise ValueError("offset 0 must appear exactly once")
        if len(all_offsets) % 2 != 1:
            raise ValueError("total bin count must be odd")

    @classmethod
    def default(cls) -> "LookupSchedule":
        """9 fine bins at level 0, 4 each at levels 1 and 2 (radius 8)."""
        return cls(
            (
                LookupEntry(0, 1, (-4, -3, -2, -1, 0, 1, 2, 3, 4)),
                LookupEntry(1, 2, (-8, -6, 6, 8)),
                LookupEntry(2, 4, (-16, -12, 12, 16)),
            )
        )

    @classmethod
    def level0_only(cls) -> "LookupSchedule":
        """Fine bins only: reach limited to 4 cells (ablation schedule)."""
        return cls((LookupEntry(0, 1, (-4, -3, -2, -1, 0, 1, 2, 3, 4)),))

    def fine_subset(self) -> "LookupSchedule":
        """The level-0 entries of this schedule (used for refinement)."""
        fine = tuple(e for e in self.entries if e.level == 0)
        if not fine:
            raise ValueError("schedule has no level-0 entries")
        return LookupSchedule(fine)

    def bins(self):
        """(offset, level, divisor) triples sorted by ascending offset."""
        triples = [
            (o, e.level, e.divisor) for e in self.entries for o in e.offsets
        ]
        triples.sort()
        return triples

    @property
    def bin_count(self) -> int:
        return sum(len(e.offsets) for e in self.entries)

    @property
    def radius(self) -> int:
        """Derived total radius: bin count is 2R+1."""
        return (self.bin_count - 1) // 2

    @property
    def max_offset(self) -> int:
        return max(abs(o) for e in self.entries for o in e.offsets)

    def bin_arrays(self):
        """Kernel-ready (level, offset, divisor) arrays in bin order."""
        triples = self.bins()
        level = np.array([t[1] for t in triples], dtype=np.int64)
        offset = np.array([t[0] for t in triples], dtype=np.float64)
        divisor = np.array([t[2] for t in triples], dtype=np.float64)
        return level, offset, divisor


@dataclass(frozen=True, eq=False)
class OrthogonalCostVolume:
    """(4R+2, H, W) correlation tensor over two 1D offset axes.

    Channel layout: all horizontal bins in ascending offset order, then all
    vertical bins in ascending offset order.
    """

    data: np.ndarray
    offsets: tuple[int, ...]

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("cost volume data must have shape (C, H, W)")
        if self.data.shape[0] != 2 * len(self.offsets):
            raise ValueError("channel count must be twice the bin count")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError("bin offsets must be strictly increasing")
        if self.offsets.count(0) != 1:
            raise ValueError("offset 0 must appear exactly once per axis")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def bin_count(self) -> int:
        return len(self.offsets)

    def horizontal(self) -> np.ndarray:
        return self.data[: self.bin_count]

    def vertical(self) -> np.ndarray:
        return self.data[self.bin_count :]


def _check_flow_grid(source: FeatureMap, flow: FlowField):
    if (flow.height, flow.width) != (source.height, source.width):
        raise ValueError("flow grid must match the source feature grid")


def _attended_arrays(attended: AttendedPyramid):
    av = tuple(m.data for m in attended.vertical)
    ah = tuple(m.data for m in attended.horizontal)
    return av, ah


def build_orthogonal_volume(
    source: FeatureMap,
    attended: AttendedPyramid,
    flow: FlowField,
    schedule: LookupSchedule | None = None,
) -> OrthogonalCostVolume:
    """Correlate source features against flow-indexed attended features.

    For a source cell (h, w) with flow target (h', w') = (h+fy, w+fx), the
    horizontal bin at offset r from level l (divisor s) samples the
    vertically-attended level-l map bilinearly at (h'/s, (w'+r)/s) and
    stores the dot product with the source vector scaled by 1/sqrt(D).
    Vertical bins mirror this over horizontally-attended maps.  Out-of-image
    targets are clamped by the sampler.
    """
    schedule = schedule or LookupSchedule.default()
    _check_flow_grid(source, flow)
    av, ah = _attended_arrays(attended)
    level, offset, divisor = schedule.bin_arrays()
    nbins = schedule.bin_count
    out = np.empty(
        (2 * nbins, source.height, source.width), dtype=source.data.dtype
    )
    backend.kernels().orthogonal_volume_forward(
        source.data, av[0], av[1], av[2], ah[0], ah[1], ah[2],
        level, offset, divisor,
        flow.u, flow.v,
        1.0 / np.sqrt(source.channels),
        out,
    )
    return OrthogonalCostVolume(out, tuple(t[0] for t in schedule.bins()))


def orthogonal_volume_backward(
    source: FeatureMap,
    attended: AttendedPyramid,
    flow: FlowField,
    schedule: LookupSchedule | None,
    upstream: np.ndarray,
):
    """Gradients of <upstream, volume> w.r.t. source, attended maps, flow.

    Returns ``(d_source, d_attended_vertical, d_attended_horizontal,
    d_flow)`` where the attended gradients are 3-tuples of arrays matching
    the pyramid levels.  The flow gradient uses the sampler's piecewise
    linear derivative (right-hand at lattice points, zero under the clamp).
    """
    schedule = schedule or LookupSchedule.default()
    _check_flow_grid(source, flow)
    av, ah = _attended_arrays(attended)
    level, offset, divisor = schedule.bin_arrays()
    nbins = schedule.bin_count
    if upstream.shape != (2 * nbins, source.height, source.width):
        raise ValueError("upstream gradient shape must match the cost volume")
    d_source = np.empty_like(source.data)
    dav = tuple(np.empty_like(a) for a in av)
    dah = tuple(np.empty_like(a) for a in ah)
    du = np.empty_like(flow.u)
    dv = np.empty_like(flow.v)
    backend.kernels().orthogonal_volume_backward(
        source.data, av[0], av[1], av[2], ah[0], ah[1], ah[2],
        level, offset, divisor,
        flow.u, flow.v,
        1.0 / np.sqrt(source.channels),
        upstream,
        d_source, dav[0], dav[1], dav[2], dah[0], dah[1], dah[2], du, dv,
    )
    return d_source, dav, dah, FlowField(du, dv, flow.resolution)


def build_local2d_volume(
    source: FeatureMap,
    target_pyramid: FeaturePyramid,
    flow: FlowField,
    radius: int = DEFAULT_LOCAL2D_RADIUS,
) -> np.ndarray:
    """Full (2r+1)^2 window correlation per scale on raw pyramid features.

    Offsets are in each level's own cell units, so the window is centered
    at (h'/s, w'/s) per scale.  Channels are scale-major, then dy, then dx.
    """
    if radius < 0:
        raise ValueError("window radius must be >= 0")
    _check_flow_grid(source, flow)
    side = 2 * radius + 1
    out = np.empty(
        (LOCAL2D_SCALES * side * side, source.height, source.width),
        dtype=source.data.dtype,
    )
    levels = target_pyramid.levels
    backend.kernels().local2d_volume_forward(
        source.data,
        levels[0].data, levels[1].data, levels[2].data,
        radius,
        flow.u, flow.v,
        1.0 / np.sqrt(source.channels),
        out,
    )
    return out


def build_global1d_volume(source: FeatureMap, target: FeatureMap) -> np.ndarray:
    """Static row/column correlations: W horizontal then H vertical bins.

    A simplified stand-in for global 1D search representations, used for
    memory benchmarking; it is not a full reimplementation of any of them.
    """
    if (source.height, source.width) != (target.height, target.width):
        raise ValueError("source and target grids must match")
    h, w = source.height, source.width
    out = np.empty((h + w, h, w), dtype=source.data.dtype)
    backend.kernels().global1d_volume_forward(
        source.data, target.data, 1.0 / np.sqrt(source.channels), out
    )
    return out


def element_count(
    kind: RepresentationKind,
    height: int,
    width: int,
    radius: int = 8,
    local2d_radius: int = DEFAULT_LOCAL2D_RADIUS,
) -> int:
    """Cost-volume element count for a feature grid, in exact integers.

    local orthogonal: H*W*(4R+2); local 2D: H*W*(2r+1)^2*3;
    global 1D: H*W*(H+W); all-pairs 4D: (H*W)^2.
    """
    if height < 1 or width < 1:
        raise ValueError("grid dimensions must be positive")
    hw = height * width
    kind = RepresentationKind(kind)
    if kind is RepresentationKind.LOCAL_ORTHOGONAL:
        return hw * (4 * radius + 2)
    if kind is RepresentationKind.LOCAL_2D:
        return hw * (2 * local2d_radius + 1) ** 2 * LOCAL2D_SCALES
    if kind is RepresentationKind.GLOBAL_1D:
        return hw * (height + width)
    return hw * hw
