"""Flow visualization with the standard 55-entry color wheel.

Hue encodes direction, saturation encodes magnitude (white at zero flow).
"""

from __future__ import annotations

import numpy as np

from .grids import FlowField

# segment lengths of the wheel: red-yellow, yellow-green, green-cyan,
# cyan-blue, blue-magenta, magenta-red
_SEGMENTS = (15, 6, 4, 11, 13, 6)


def make_color_wheel() -> np.ndarray:
    """The 55x3 color wheel in [0, 255] floats."""
    ry, yg, gc, cb, bm, mr = _SEGMENTS
    wheel = np.zeros((sum(_SEGMENTS), 3))
    col = 0
    wheel[col : col + ry, 0] = 255
    wheel[col : col + ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col : col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col : col + yg, 1] = 255
    col += yg
    wheel[col : col + gc, 1] = 255
    wheel[col : col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col : col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col : col + cb, 2] = 255
    col += cb
    wheel[col : col + bm, 2] = 255
    wheel[col : col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col : col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col : col + mr, 0] = 255
    return wheel


def flow_to_rgb(flow: FlowField, max_magnitude: float | None = None) -> np.ndarray:
    """Render a flow field as an (H, W, 3) uint8 color-wheel image.

    ``max_magnitude`` normalizes saturation; None picks the 99th
    percentile of the field's magnitudes.  Zero flow renders white;
    magnitudes above the normalizer are dimmed.
    """
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    rad = np.sqrt(u * u + v * v)
    if max_magnitude is None:
        max_magnitude = float(np.percentile(rad, 99))
    if max_magnitude <= 0:
        max_magnitude = 1.0
    r = rad / max_magnitude

    wheel = make_color_wheel()
    ncols = wheel.shape[0]
    angle = np.arctan2(-v, -u) / np.pi  # in [-1, 1]
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64) % ncols
    k1 = (k0 + 1) % ncols
    f = (fk - np.floor(fk))[..., None]
    col = (1.0 - f) * wheel[k0] + f * wheel[k1]
    col /= 255.0

    inside = (r <= 1.0)[..., None]
    rk = np.minimum(r, 1.0)[..., None]
    col = np.where(inside, 1.0 - rk * (1.0 - col), col * 0.75)
    return np.rint(col * 255.0).astype(np.uint8)
