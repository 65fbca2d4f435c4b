"""Dense grid containers and resampling primitives.

All containers are immutable after construction and every operation is a
pure function, so they are safe to share across threads.  Scalar precision
is carried by the array dtype: solver paths default to float32, gradient
and oracle checks run the same code in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

FEATURE_SCALE = "feature"
FULL_SCALE = "full"


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {what}")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """H x W x D grid of per-cell feature vectors (row-major)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("feature map data must have shape (H, W, D)")
        if self.data.size == 0:
            raise ValueError("empty grid")
        _check_finite(self.data, "feature map")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def dtype(self):
        return self.data.dtype


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement field in pixel units.

    ``u`` is horizontal displacement (positive rightward), ``v`` vertical
    (positive downward), each of shape (H, W).  ``resolution`` tags whether
    the grid lives at feature scale or full image scale.
    """

    u: np.ndarray
    v: np.ndarray
    resolution: str = FEATURE_SCALE

    def __post_init__(self):
        if self.u.ndim != 2 or self.u.shape != self.v.shape:
            raise ValueError("flow components must be matching 2-d arrays")
        if self.u.size == 0:
            raise ValueError("empty grid")
        if self.resolution not in (FEATURE_SCALE, FULL_SCALE):
            raise ValueError(f"unknown resolution tag: {self.resolution!r}")
        _check_finite(self.u, "flow u")
        _check_finite(self.v, "flow v")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @classmethod
    def zeros(cls, height, width, dtype=np.float32, resolution=FEATURE_SCALE):
        return cls(
            np.zeros((height, width), dtype=dtype),
            np.zeros((height, width), dtype=dtype),
            resolution,
        )

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.u * self.u + self.v * self.v)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Grayscale image with intensities normalized to [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("gray image data must have shape (H, W)")
        if self.data.size == 0:
            raise ValueError("empty grid")
        _check_finite(self.data, "gray image")
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < -1e-6 or hi > 1.0 + 1e-6:
            raise ValueError(f"intensities outside [0, 1]: min={lo}, max={hi}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def avg_pool_2x2(fmap: FeatureMap) -> FeatureMap:
    """Average-pool a feature map with a 2x2 kernel and stride 2.

    Odd trailing rows/columns are cropped first so the block arithmetic
    stays exact; inputs are expected pre-cropped to multiples of 32 at load.
    """
    data = pool_2x2_array(fmap.data)
    return FeatureMap(data)


def pool_2x2_array(data: np.ndarray) -> np.ndarray:
    """2x2 mean pooling on a raw (H, W, ...) array, cropping odd edges."""
    h2, w2 = data.shape[0] // 2, data.shape[1] // 2
    if h2 == 0 or w2 == 0:
        raise ValueError("empty grid")
    d = data[: 2 * h2, : 2 * w2]
    total = d[0::2, 0::2] + d[0::2, 1::2] + d[1::2, 0::2] + d[1::2, 1::2]
    return total * data.dtype.type(0.25)


def sample_bilinear(data: np.ndarray, x, y) -> np.ndarray:
    """Bilinear sample of an (H, W, ...) array at fractional grid positions.

    Coordinates outside the grid are clamped to the border (replicate
    padding), which makes the operation total.  ``x``/``y`` may be scalars
    or arrays of a common shape; trailing data axes are broadcast.
    """
    h, w = data.shape[0], data.shape[1]
    dtype = data.dtype
    x = np.clip(np.asarray(x, dtype=dtype), 0, w - 1)
    y = np.clip(np.asarray(y, dtype=dtype), 0, h - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    if data.ndim > 2:
        extra = (np.newaxis,) * (data.ndim - 2)
        w00, w01, w10, w11 = (
            w[(...,) + extra] for w in (w00, w01, w10, w11)
        )
    return (
        w00 * data[y0, x0]
        + w01 * data[y0, x1]
        + w10 * data[y1, x0]
        + w11 * data[y1, x1]
    )


def bilinear_sample(fmap: FeatureMap, x: float, y: float) -> np.ndarray:
    """Sample one D-vector from a feature map at fractional (x, y).

    At integer coordinates this returns the stored vector exactly.
    """
    return sample_bilinear(fmap.data, float(x), float(y))


def upsample_flow(flow: FlowField, factor: int) -> FlowField:
    """Bilinearly upsample a flow field by an integer factor.

    The grid grows by ``factor`` on each side and displacement values are
    multiplied by ``factor`` so they stay in output-pixel units.  Output
    pixel centers map to input coordinates via ``(i + 0.5) / factor - 0.5``
    (pixel-center alignment), so ``factor=1`` is the identity.
    """
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    if factor == 1:
        return flow
    h, w = flow.height, flow.width
    dtype = flow.u.dtype
    ys = (np.arange(h * factor, dtype=dtype) + dtype.type(0.5)) / factor - dtype.type(0.5)
    xs = (np.arange(w * factor, dtype=dtype) + dtype.type(0.5)) / factor - dtype.type(0.5)
    grid_x = np.broadcast_to(xs[np.newaxis, :], (h * factor, w * factor))
    grid_y = np.broadcast_to(ys[:, np.newaxis], (h * factor, w * factor))
    s = dtype.type(factor)
    u = sample_bilinear(flow.u, grid_x, grid_y) * s
    v = sample_bilinear(flow.v, grid_x, grid_y) * s
    return FlowField(u, v, flow.resolution)


def tag_resolution(flow: FlowField, resolution: str) -> FlowField:
    """Return the same flow with a different resolution tag."""
    return replace(flow, resolution=resolution)
