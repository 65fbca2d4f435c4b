"""Non-learned iterative flow estimation over orthogonal cost volumes.

Each iteration rebuilds the cost volume at the current flow and applies a
damped soft-argmax over the offset bins of each axis: the flow increment is
the softmax-weighted expectation of the full-scale offsets.  Also holds the
sequence loss, evaluation metrics and synthetic ground-truth generation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import IDENTITY, SCALED_IDENTITY, attend_pyramid
from .costvolume import LookupSchedule, OrthogonalCostVolume, build_orthogonal_volume
from .features import build_pyramid, extract_features
from .grids import FULL_SCALE, FlowField, GrayImage, sample_bilinear, upsample_flow


@dataclass(frozen=True)
class SolverConfig:
    """Iteration count, soft-argmax temperature/damping and lookup setup.

    The aggregation fields configure the deterministic stand-in for the
    learned recurrent update operator: per-level scale equalization of the
    cost volume, spatial box smoothing of the costs, and box smoothing of
    the flow increment (excluding a border ring polluted by clamped
    lookups).  Without them the per-pixel soft-argmax cannot capture
    displacements whose matching signal sits below the per-pixel noise of
    mismatched correlations.
    """

    iterations: int = 24
    beta: float = 20.0
    alpha: float = 0.8
    schedule: LookupSchedule = field(default_factory=LookupSchedule.default)
    attention_radius: int = 16
    projection: str = IDENTITY
    seed: int = 0
    upsample_factor: int = 8
    feature_dim: int = 32
    normalize_features: bool = True
    dtype: np.dtype = np.float32
    refine_iterations: int = 2
    cost_smooth_radius: int = 3
    delta_smooth_radius: int = 2
    border_ring: int = 6
    capture_z_gain: float = 10.0
    refine_z_gain: float = 2.0
    refine_qk_scale: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iteration count must be >= 1")
        if self.beta <= 0:
            raise ValueError("inverse temperature must be > 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("damping must be in (0, 1]")
        if min(self.cost_smooth_radius, self.delta_smooth_radius, self.border_ring) < 0:
            raise ValueError("aggregation radii must be >= 0")
        if self.refine_iterations < 0:
            raise ValueError("refine iteration count must be >= 0")

    @property
    def capture_count(self) -> int:
        """Iterations spent in the global-consensus capture phase."""
        return max(self.iterations - self.refine_iterations, 0)

    @property
    def refine_sharpness(self) -> float:
        """Query/key scale for the refinement pyramid.

        Defaults to sqrt(D), which lifts unit-norm score gaps to
        O(sqrt(D)) so the refinement attention concentrates near the
        matching cell the way a trained projection would.
        """
        if self.refine_qk_scale is not None:
            return self.refine_qk_scale
        return float(np.sqrt(self.feature_dim))


@dataclass(frozen=True)
class EvalReport:
    """End-point-error summary over the valid pixels.

    ``f1_all`` is the percentage of valid pixels whose end-point error
    exceeds both 3 px and 5% of the ground-truth magnitude (the standard
    outlier rule).  Range EPEs are NaN when no pixel falls in the range.
    """

    epe: float
    f1_all: float
    epe_0_10: float
    epe_10_40: float


def soft_argmax_update(
    cost: OrthogonalCostVolume, beta: float, alpha: float
) -> FlowField:
    """Damped softmax-expectation of the offset bins, per axis per pixel.

    The increment magnitude is bounded by alpha times the largest schedule
    offset by construction.  Symmetric offset pairs are accumulated as
    differences so that a cost profile symmetric in the offset yields an
    exactly zero increment.
    """
    dtype = cost.data.dtype
    offsets = cost.offsets
    n = len(offsets)
    mirrored = all(offsets[i] == -offsets[n - 1 - i] for i in range(n))
    beta = dtype.type(beta)
    alpha = dtype.type(alpha)

    def expectation(block):
        logits = beta * block
        logits = logits - logits.max(axis=0)
        e = np.exp(logits)
        weights = e / e.sum(axis=0)
        if not mirrored:
            offs = np.array(offsets, dtype=dtype)
            return np.tensordot(offs, weights, axes=(0, 0))
        acc = np.zeros(block.shape[1:], dtype=dtype)
        for i in range(n // 2):
            j = n - 1 - i
            acc += dtype.type(offsets[j]) * (weights[j] - weights[i])
        return acc

    du = alpha * expectation(cost.horizontal())
    dv = alpha * expectation(cost.vertical())
    return FlowField(du, dv)


def _box_mean_2d(a: np.ndarray, radius: int) -> np.ndarray:
    """Box filter with replicate border over the trailing two axes."""
    if radius < 1:
        return a
    size = 2 * radius + 1
    pad = [(0, 0)] * (a.ndim - 2) + [(radius, radius), (radius, radius)]
    p = np.pad(a, pad, mode="edge")
    h, w = a.shape[-2], a.shape[-1]
    acc = np.zeros_like(a)
    for dy in range(size):
        for dx in range(size):
            acc += p[..., dy : dy + h, dx : dx + w]
    return acc / a.dtype.type(size * size)


def _trusted_lookup_mask(flow: FlowField, reach: float) -> np.ndarray:
    """1.0 where all lookups within ``reach`` of the flow target stay
    in frame, else 0.0."""
    h, w = flow.height, flow.width
    xs = np.arange(w, dtype=flow.u.dtype)[None, :] + flow.u
    ys = np.arange(h, dtype=flow.u.dtype)[:, None] + flow.v
    ok = (
        (xs - reach >= 0)
        & (xs + reach <= w - 1)
        & (ys - reach >= 0)
        & (ys + reach <= h - 1)
    )
    return ok.astype(flow.u.dtype)


def _smooth_interior(a: np.ndarray, radius: int, ring: int) -> np.ndarray:
    """Box-smooth ignoring a border ring; ring cells copy the interior edge.

    Cells within reach of the image border carry junk updates (clamped
    lookups duplicate the peak value across bins), so they are excluded
    from the average and follow the interior field instead.
    """
    ring = min(ring, (a.shape[0] - 1) // 2, (a.shape[1] - 1) // 2)
    if ring <= 0:
        return _box_mean_2d(a, radius)
    core = _box_mean_2d(a[ring:-ring, ring:-ring], radius)
    return np.pad(core, ring, mode="edge")


def _interior_slice(shape_hw, ring: int):
    h, w = shape_hw
    r = min(ring, (h - 1) // 2, (w - 1) // 2)
    return r, (slice(r, h - r) if r else slice(None), slice(r, w - r) if r else slice(None))


# softmax temperature rescale for the 3-bin sub-cell interpolation in the
# capture phase; calibrated on synthetic translation sweeps
_CAPTURE_INTERP_GAIN = 3.0


def _pooled_logits(cost, schedule, beta, ring, z_gain):
    """Interior-mean per-bin evidence, level-equalized, in logit units."""
    data = cost.data
    r, inner = _interior_slice(data.shape[1:], ring)
    interior = data[:, inner[0], inner[1]]
    levels = np.array([b[1] for b in schedule.bins()] * 2)
    pooled = interior.reshape(data.shape[0], -1).mean(axis=1).astype(np.float64)
    for lvl in range(3):
        sel = interior[levels == lvl]
        if sel.size == 0:
            continue
        med = np.median(sel)
        mad = np.median(np.abs(sel - med))
        scale = max(1.4826 * float(mad), 1e-12)
        pooled[levels == lvl] *= z_gain / (beta * scale)
    return beta * pooled


def capture_increment(
    costs,
    schedule: LookupSchedule,
    beta: float,
    alpha: float,
    ring: int,
    z_gain: float,
):
    """Global-consensus flow increment for the capture phase.

    Per-pixel correlations of mismatched positions carry more noise than
    the coarse lookup levels carry signal, so a per-pixel soft-argmax
    cannot reach displacements beyond the finest offsets.  Averaging each
    bin over the interior pools that evidence; rescaling every lookup
    level by a robust dispersion estimate (median absolute deviation) to a
    common reference ``z_gain / beta`` makes fine and coarse bins
    commensurable in one softmax.  ``costs`` may hold several volumes of
    the same layout (e.g. built from differently attended targets); their
    pooled evidence is summed.  The returned (du, dv) scalars are the
    damped soft-argmax of the pooled bins, applied field-wide.
    """
    if isinstance(costs, OrthogonalCostVolume):
        costs = (costs,)
    logits = sum(_pooled_logits(c, schedule, beta, ring, z_gain) for c in costs)
    offsets = np.array(costs[0].offsets, dtype=np.float64)
    nbins = costs[0].bin_count

    def expectation(lg):
        # the strongly scaled logits pick the winning bin with the far
        # bins' noise suppressed; the sub-bin position is then
        # interpolated over the winner's immediate neighbors at a softer
        # temperature (a distant bin must not lever the expectation)
        peak = int(np.argmax(lg))
        lo, hi = max(peak - 1, 0), min(peak + 2, lg.shape[0])
        local = lg[lo:hi] * (_CAPTURE_INTERP_GAIN / z_gain)
        e = np.exp(local - local.max())
        return float(np.dot(offsets[lo:hi], e) / e.sum())

    du = alpha * expectation(logits[:nbins])
    dv = alpha * expectation(logits[nbins:])
    return du, dv


def equalize_costs(
    cost: OrthogonalCostVolume,
    schedule: LookupSchedule,
    beta: float,
    ring: int,
    z_gain: float,
) -> OrthogonalCostVolume:
    """Rescale each lookup level to a common reference dispersion.

    Pooling shrinks both the signal and the mismatch noise of coarse
    levels, so raw dot products are not commensurable across levels in a
    single softmax.  Each level is scaled so its interior median absolute
    deviation maps to ``z_gain / beta``, making mismatched bins produce
    unit-order softmax logits independent of level and feature scale.
    """
    data = cost.data
    r, inner = _interior_slice(data.shape[1:], ring)
    interior = data[:, inner[0], inner[1]]
    levels = np.array([b[1] for b in schedule.bins()] * 2)
    gains = np.ones(len(levels), dtype=np.float64)
    for lvl in range(3):
        sel = interior[levels == lvl]
        if sel.size == 0:
            continue
        med = np.median(sel)
        mad = np.median(np.abs(sel - med))
        scale = max(1.4826 * float(mad), 1e-12)
        gains[levels == lvl] = z_gain / (beta * scale)
    data = data * gains[:, None, None].astype(data.dtype)
    return OrthogonalCostVolume(np.ascontiguousarray(data), cost.offsets)


def smooth_costs(
    cost: OrthogonalCostVolume, smooth_radius: int, ring: int
) -> OrthogonalCostVolume:
    """Box-smooth every cost channel over the interior.

    Cells within reach of the image border carry clamp junk (out-of-range
    lookups duplicate the peak value across bins), so the ring is excluded
    and later follows the interior.  Smoothing trades spatial resolution
    for per-pixel mismatch noise, standing in for the spatial aggregation
    a learned recurrent operator provides.
    """
    if smooth_radius < 1:
        return cost
    data = cost.data
    r, inner = _interior_slice(data.shape[1:], ring)
    if r > 0:
        core = _box_mean_2d(data[:, inner[0], inner[1]], smooth_radius)
        data = np.pad(core, ((0, 0), (r, r), (r, r)), mode="edge")
    else:
        data = _box_mean_2d(data, smooth_radius)
    return OrthogonalCostVolume(np.ascontiguousarray(data), cost.offsets)


def estimate_flow(
    source: GrayImage, target: GrayImage, config: SolverConfig | None = None
):
    """Estimate dense flow from source to target.

    Returns ``(flow, sequence)``: the final full-resolution flow and the
    per-iteration list of full-resolution estimates (recorded after each
    update, bilinearly upsampled).
    """
    config = config or SolverConfig()
    if (source.height, source.width) != (target.height, target.width):
        raise ValueError("source and target images must have the same size")
    if source.height % 32 or source.width % 32:
        raise ValueError("image dimensions must be multiples of 32")

    f_s = extract_features(
        source, config.feature_dim, config.normalize_features, config.dtype
    )
    f_t = extract_features(
        target, config.feature_dim, config.normalize_features, config.dtype
    )
    pyramid = build_pyramid(f_t)
    # two attended views of the target: the configured (by default identity,
    # near-uniform) attention tolerates large cross-axis error during
    # capture; a sharpened view concentrates on the matching cell for
    # per-pixel refinement
    attended_wide = attend_pyramid(
        pyramid, config.attention_radius, config.projection, config.seed
    )
    attended_sharp = attend_pyramid(
        pyramid,
        config.attention_radius,
        SCALED_IDENTITY,
        config.seed,
        qk_scale=config.refine_sharpness,
    )

    flow = FlowField.zeros(f_s.height, f_s.width, dtype=config.dtype)
    refine_schedule = config.schedule.fine_subset()
    sequence = []
    for iteration in range(config.iterations):
        if iteration < config.capture_count:
            costs = (
                build_orthogonal_volume(f_s, attended_wide, flow, config.schedule),
                build_orthogonal_volume(f_s, attended_sharp, flow, config.schedule),
            )
            gu, gv = capture_increment(
                costs,
                config.schedule,
                config.beta,
                config.alpha,
                config.border_ring,
                config.capture_z_gain,
            )
            du = np.full_like(flow.u, gu)
            dv = np.full_like(flow.v, gv)
        else:
            # refinement searches the fine offsets only; the coarse levels'
            # reach has served its purpose during capture
            cost = build_orthogonal_volume(
                f_s, attended_sharp, flow, refine_schedule
            )
            # smoothing first: the level scales are then set by the noise
            # that actually survives aggregation
            cost = smooth_costs(cost, config.cost_smooth_radius, config.border_ring)
            cost = equalize_costs(
                cost,
                refine_schedule,
                config.beta,
                config.border_ring,
                config.refine_z_gain,
            )
            delta = soft_argmax_update(cost, config.beta, config.alpha)
            du = _smooth_interior(delta.u, config.delta_smooth_radius, config.border_ring)
            dv = _smooth_interior(delta.v, config.delta_smooth_radius, config.border_ring)
            # cells whose fine lookups would leave the frame see clamped
            # junk; they hold the captured flow instead of refining
            trust = _trusted_lookup_mask(flow, refine_schedule.max_offset + 1)
            du = du * trust
            dv = dv * trust
        flow = FlowField(flow.u + du, flow.v + dv)
        full = upsample_flow(flow, config.upsample_factor)
        sequence.append(FlowField(full.u, full.v, FULL_SCALE))
    return sequence[-1], sequence


def sequence_loss(sequence, gt: FlowField, gamma: float = 0.8) -> float:
    """Exponentially weighted L1 loss over a prediction sequence.

    Later predictions weigh more: sum_i gamma^(N-i) * mean_p(|u_i - u_gt| +
    |v_i - v_gt|).
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    if not sequence:
        raise ValueError("empty prediction sequence")
    n = len(sequence)
    total = 0.0
    for i, pred in enumerate(sequence, start=1):
        if (pred.height, pred.width) != (gt.height, gt.width):
            raise ValueError("prediction grid must match the ground truth")
        l1 = np.abs(pred.u - gt.u) + np.abs(pred.v - gt.v)
        total += gamma ** (n - i) * float(l1.mean())
    return total


def evaluate(flow: FlowField, gt: FlowField, valid: np.ndarray) -> EvalReport:
    """EPE / outlier-rate report over the pixels marked valid."""
    if (flow.height, flow.width) != (gt.height, gt.width):
        raise ValueError("flow grids must match")
    if valid.shape != (gt.height, gt.width):
        raise ValueError("valid mask must match the flow grid")
    valid = valid.astype(bool)
    if not valid.any():
        raise ValueError("no valid pixels")
    du = flow.u.astype(np.float64) - gt.u.astype(np.float64)
    dv = flow.v.astype(np.float64) - gt.v.astype(np.float64)
    epe_map = np.sqrt(du * du + dv * dv)[valid]
    mag = gt.magnitude().astype(np.float64)[valid]
    outlier = (epe_map > 3.0) & (epe_map > 0.05 * mag)

    def range_epe(lo, hi):
        sel = (mag >= lo) & (mag < hi)
        return float(epe_map[sel].mean()) if sel.any() else float("nan")

    return EvalReport(
        epe=float(epe_map.mean()),
        f1_all=float(outlier.mean() * 100.0),
        epe_0_10=range_epe(0.0, 10.0),
        epe_10_40=range_epe(10.0, 40.0),
    )


@dataclass(frozen=True)
class TextureSpec:
    """Seeded smoothed-noise texture: uniform noise box-filtered in place.

    The default radius-2 box filter guarantees dense texture so correlation
    peaks stay unambiguous.
    """

    seed: int = 0
    smooth_radius: int = 2


@dataclass(frozen=True)
class Translation:
    dx: float
    dy: float


@dataclass(frozen=True, eq=False)
class AffineWarp:
    """Row-major 2x3 matrix mapping (x, y, 1) to warped (x, y)."""

    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.shape != (2, 3):
            raise ValueError("affine warp needs a 2x3 matrix")


def _box_filter(img: np.ndarray, radius: int) -> np.ndarray:
    if radius < 1:
        return img
    size = 2 * radius + 1
    p = np.pad(img, radius, mode="edge")
    acc = np.zeros_like(img)
    for dy in range(size):
        for dx in range(size):
            acc += p[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return acc / (size * size)


def _forward_displacement(warp, height, width):
    """Ground-truth displacement of each source pixel under the warp."""
    xs = np.arange(width, dtype=np.float64)[None, :]
    ys = np.arange(height, dtype=np.float64)[:, None]
    if isinstance(warp, Translation):
        gx = np.full((height, width), float(warp.dx))
        gy = np.full((height, width), float(warp.dy))
        return gx, gy
    if isinstance(warp, AffineWarp):
        m = warp.matrix.astype(np.float64)
        if np.linalg.det(m[:, :2]) <= 0:
            raise ValueError("degenerate affine warp (determinant <= 0)")
        tx = m[0, 0] * xs + m[0, 1] * ys + m[0, 2]
        ty = m[1, 0] * xs + m[1, 1] * ys + m[1, 2]
        zeros = np.zeros((height, width), dtype=np.float64)
        return tx - xs + zeros, ty - ys + zeros
    raise TypeError(f"unsupported warp: {warp!r}")


def _inverse_positions(warp, height, width):
    """Source position whose warped image lands on each target pixel."""
    xs = np.arange(width, dtype=np.float64)[None, :] + np.zeros((height, 1))
    ys = np.arange(height, dtype=np.float64)[:, None] + np.zeros((1, width))
    if isinstance(warp, Translation):
        return xs - warp.dx, ys - warp.dy
    m = warp.matrix.astype(np.float64)
    inv = np.linalg.inv(m[:, :2])
    rx = xs - m[0, 2]
    ry = ys - m[1, 2]
    return inv[0, 0] * rx + inv[0, 1] * ry, inv[1, 0] * rx + inv[1, 1] * ry


def make_synthetic_pair(texture: TextureSpec, warp, size):
    """Build a (source, target, ground-truth flow, valid mask) tuple.

    The target is the bilinear warp of the source with replicate fill; the
    mask marks pixels whose warped position stays in frame.  Warps that
    keep fewer than 25% of the pixels in frame are rejected.
    """
    height, width = size
    rng = np.random.default_rng(texture.seed)
    noise = rng.uniform(0.0, 1.0, size=(height, width))
    src = _box_filter(noise, texture.smooth_radius)
    source = GrayImage(src)

    gx, gy = _forward_displacement(warp, height, width)
    xs = np.arange(width, dtype=np.float64)[None, :]
    ys = np.arange(height, dtype=np.float64)[:, None]
    tx = xs + gx
    ty = ys + gy
    valid = (tx >= 0) & (tx <= width - 1) & (ty >= 0) & (ty <= height - 1)
    if valid.mean() < 0.25:
        raise ValueError("warp keeps fewer than 25% of pixels in frame")

    # target(q) holds the source content whose warped position lands on q
    sx, sy = _inverse_positions(warp, height, width)
    target = sample_bilinear(src, sx, sy)
    gt = FlowField(gx, gy, FULL_SCALE)
    return source, GrayImage(np.clip(target, 0.0, 1.0)), gt, valid
