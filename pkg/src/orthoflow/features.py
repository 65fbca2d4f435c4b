"""Deterministic, training-free feature extraction.

Descriptors are built per 1/8-resolution cell from three ingredients:
8x-pooled intensity, a Sobel gradient pair at pooled resolution, and the
flattened 5x5 pooled-intensity neighborhood (replicate border).  The recipe
is chosen so that pure-translation correlation is sharply peaked on
textured images without any learning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import FeatureMap, GrayImage, avg_pool_2x2, pool_2x2_array

RAW_CHANNELS = 28  # 1 pooled intensity + 2 Sobel + 25 patch values


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Feature maps at 1/8, 1/16 and 1/32 of the input resolution."""

    level0: FeatureMap
    level1: FeatureMap
    level2: FeatureMap

    def __post_init__(self):
        for coarse, fine in ((self.level1, self.level0), (self.level2, self.level1)):
            if coarse.channels != fine.channels:
                raise ValueError("pyramid levels must share the channel count")
            if (coarse.height, coarse.width) != (fine.height // 2, fine.width // 2):
                raise ValueError("each pyramid level must halve the previous grid")

    @property
    def levels(self):
        return (self.level0, self.level1, self.level2)

    @property
    def channels(self) -> int:
        return self.level0.channels


def _sobel_pair(m: np.ndarray):
    """3x3 Sobel responses with replicate border.

    gx is positive where intensity increases rightward, gy where it
    increases downward.
    """
    p = np.pad(m, 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


def _patch_5x5(m: np.ndarray) -> np.ndarray:
    """Flattened 5x5 neighborhood per cell, replicate border, row-major."""
    h, w = m.shape
    p = np.pad(m, 2, mode="edge")
    chans = [
        p[2 + dy : 2 + dy + h, 2 + dx : 2 + dx + w]
        for dy in range(-2, 3)
        for dx in range(-2, 3)
    ]
    return np.stack(chans, axis=-1)


def extract_features(
    image: GrayImage,
    dim: int = 32,
    normalize: bool = True,
    dtype=np.float32,
) -> FeatureMap:
    """Compute the 1/8-resolution descriptor grid for an image.

    The 28 raw channels are zero-padded (or truncated) to ``dim``.  With
    ``normalize`` on, descriptors are shifted by the per-channel global
    mean and scaled to unit per-pixel L2 norm, which bounds correlation
    values to [-1, 1] before the 1/sqrt(D) factor; zero-norm descriptors
    map to the zero vector.
    """
    if dim < 1:
        raise ValueError("descriptor dimension must be >= 1")
    dtype = np.dtype(dtype)
    h, w = image.height, image.width
    if h < 32 or w < 32:
        raise ValueError("image too small")
    if h % 32 or w % 32:
        raise ValueError("image dimensions must be multiples of 32 (caller crops)")

    m = image.data.astype(dtype, copy=False)
    for _ in range(3):
        m = pool_2x2_array(m)
    gx, gy = _sobel_pair(m)
    patch = _patch_5x5(m)
    raw = np.concatenate([m[..., None], gx[..., None], gy[..., None], patch], axis=-1)

    if dim >= RAW_CHANNELS:
        feats = np.zeros(raw.shape[:2] + (dim,), dtype=dtype)
        feats[..., :RAW_CHANNELS] = raw
    else:
        feats = np.ascontiguousarray(raw[..., :dim])

    if normalize:
        feats = feats - feats.mean(axis=(0, 1))
        norms = np.sqrt(np.sum(feats * feats, axis=-1, keepdims=True))
        # norms at rounding level are zero descriptors (constant regions);
        # normalizing them would manufacture unit vectors out of noise
        tiny = 100 * np.finfo(dtype).eps * np.sqrt(dim) * max(
            1.0, float(np.abs(feats).max())
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = feats / norms
        feats = np.where(norms > tiny, scaled, dtype.type(0)).astype(dtype, copy=False)
    return FeatureMap(feats)


def build_pyramid(level0: FeatureMap) -> FeaturePyramid:
    """Pool a 1/8-resolution map twice into the 1/16 and 1/32 levels."""
    if level0.height % 4 or level0.width % 4:
        raise ValueError("level-0 dimensions must be multiples of 4")
    level1 = avg_pool_2x2(level0)
    level2 = avg_pool_2x2(level1)
    return FeaturePyramid(level0, level1, level2)
