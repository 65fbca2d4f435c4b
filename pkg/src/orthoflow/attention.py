"""1D local axial attention over feature maps.

Each cell scores its neighbors along one axis (dot product scaled by
1/sqrt(D)), softmax-normalizes the in-bounds scores, and aggregates the
original feature vectors with those weights.  Applying it vertically and
horizontally propagates 2D neighborhood information into each axis, so a
later 1D correlation search can still see 2D context.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .features import FeaturePyramid
from .grids import FeatureMap

VERTICAL = "vertical"
HORIZONTAL = "horizontal"

IDENTITY = "identity"
RANDOM_ORTHONORMAL = "random_orthonormal"
SCALED_IDENTITY = "scaled_identity"


@dataclass(frozen=True)
class AttentionConfig:
    """Axis, unfold radius and query/key projection for axial attention.

    ``radius`` counts cells at the map's own resolution.  The projection is
    the identity (default: deterministic, preserves the raw score
    structure), a pair of fixed random orthonormal matrices derived from
    ``seed`` (exercises the projection path without learning; orthonormal
    matrices leave well-formed scores score-preserving in norm), or a
    scaled identity which multiplies the scores by ``qk_scale**2`` --
    the deterministic stand-in for the score sharpening a trained 1x1
    query/key convolution provides.
    """

    axis: str
    radius: int = 16
    projection: str = IDENTITY
    seed: int = 0
    qk_scale: float = 1.0

    def __post_init__(self):
        if self.axis not in (VERTICAL, HORIZONTAL):
            raise ValueError(f"axis must be {VERTICAL!r} or {HORIZONTAL!r}")
        if self.radius < 0:
            raise ValueError("attention radius must be >= 0")
        if self.projection not in (IDENTITY, RANDOM_ORTHONORMAL, SCALED_IDENTITY):
            raise ValueError(f"unknown projection: {self.projection!r}")
        if self.qk_scale <= 0:
            raise ValueError("qk_scale must be > 0")

    def qk_matrices(self, dim: int, dtype):
        """Projection matrices (Wq, Wk), or None for plain/scaled identity."""
        if self.projection in (IDENTITY, SCALED_IDENTITY):
            return None
        rng = np.random.default_rng(self.seed)
        wq, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        wk, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return wq.astype(dtype), wk.astype(dtype)


@dataclass(frozen=True, eq=False)
class AttendedPyramid:
    """Per-axis attended target features at the three pyramid levels."""

    vertical: tuple[FeatureMap, FeatureMap, FeatureMap]
    horizontal: tuple[FeatureMap, FeatureMap, FeatureMap]

    def axis_levels(self, axis: str):
        if axis == VERTICAL:
            return self.vertical
        if axis == HORIZONTAL:
            return self.horizontal
        raise ValueError(f"unknown axis: {axis!r}")


def level_radius(base_radius: int, level: int) -> int:
    """Radius at a pyramid level: halved per level, floor 2, capped at base."""
    return min(base_radius, max(base_radius // (2**level), 2))


def _project(data: np.ndarray, config: AttentionConfig):
    mats = config.qk_matrices(data.shape[2], data.dtype)
    if mats is not None:
        wq, wk = mats
        return data @ wq, data @ wk, mats
    if config.projection == SCALED_IDENTITY and config.qk_scale != 1.0:
        scaled = data * data.dtype.type(config.qk_scale)
        return scaled, scaled, None
    return data, data, None


def local_axial_attention(target: FeatureMap, config: AttentionConfig) -> FeatureMap:
    """Attend a feature map along one axis.

    With radius 0 the softmax collapses to the single self score and the
    output is bit-identical to the input.
    """
    q, k, mats = _project(target.data, config)
    out = np.empty_like(target.data)
    backend.kernels().axial_attention_forward(
        q,
        k,
        target.data,
        config.radius,
        config.axis == VERTICAL,
        1.0 / np.sqrt(target.channels),
        out,
    )
    return FeatureMap(out)


def attention_backward(
    target: FeatureMap, config: AttentionConfig, upstream: FeatureMap
) -> FeatureMap:
    """Gradient of <upstream, local_axial_attention(target)> w.r.t. target.

    The query, key and value paths all flow back into the same input; with
    a projection the query/key contributions are mapped through the
    transposed matrices.
    """
    if upstream.data.shape != target.data.shape:
        raise ValueError("upstream gradient shape must match the target map")
    q, k, mats = _project(target.data, config)
    dq = np.empty_like(target.data)
    dk = np.empty_like(target.data)
    dv = np.empty_like(target.data)
    backend.kernels().axial_attention_backward(
        q,
        k,
        target.data,
        config.radius,
        config.axis == VERTICAL,
        1.0 / np.sqrt(target.channels),
        upstream.data,
        dq,
        dk,
        dv,
    )
    if mats is not None:
        wq, wk = mats
        grad = dv + dq @ wq.T + dk @ wk.T
    elif config.projection == SCALED_IDENTITY and config.qk_scale != 1.0:
        scale = target.data.dtype.type(config.qk_scale)
        grad = dv + scale * (dq + dk)
    else:
        grad = dv + dq + dk
    return FeatureMap(grad)


def attend_pyramid(
    pyramid: FeaturePyramid,
    radius: int = 16,
    projection: str = IDENTITY,
    seed: int = 0,
    qk_scale: float = 1.0,
) -> AttendedPyramid:
    """Attend every pyramid level along both axes (six maps).

    The unfold radius is halved per level with a floor of 2, never
    exceeding the base radius (so radius 0 stays 0 and the attended
    pyramid equals the input).
    """
    per_axis = {}
    for axis in (VERTICAL, HORIZONTAL):
        maps = []
        for level, fmap in enumerate(pyramid.levels):
            config = AttentionConfig(
                axis=axis,
                radius=level_radius(radius, level),
                projection=projection,
                seed=seed,
                qk_scale=qk_scale,
            )
            maps.append(local_axial_attention(fmap, config))
        per_axis[axis] = tuple(maps)
    return AttendedPyramid(vertical=per_axis[VERTICAL], horizontal=per_axis[HORIZONTAL])
