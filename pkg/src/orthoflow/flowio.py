"""Middlebury .flo flow file reading and writing.

Layout: 4-byte float magic 202021.25, int32 width, int32 height (little
endian), then H*W interleaved (u, v) float32 pairs in row-major order.
Round trips are bit-exact on 32-bit flow values.
"""

from __future__ import annotations

import struct

import numpy as np

from .grids import FULL_SCALE, FlowField

FLO_MAGIC = 202021.25


def write_flo(flow: FlowField, path) -> None:
    """Write a flow field as a .flo file (values stored as float32)."""
    h, w = flow.height, flow.width
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(data.tobytes())


def read_flo(path) -> FlowField:
    """Read a .flo file, validating magic and payload size."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12:
            raise ValueError("truncated flow file: missing header")
        magic, w, h = struct.unpack("<fii", header)
        if magic != np.float32(FLO_MAGIC):
            raise ValueError(f"invalid magic in flow file: {magic!r}")
        if w <= 0 or h <= 0:
            raise ValueError(f"invalid flow dimensions: {w}x{h}")
        payload = fh.read(8 * h * w)
    if len(payload) != 8 * h * w:
        raise ValueError(
            f"truncated flow file: expected {8 * h * w} payload bytes, "
            f"got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, 2)
    return FlowField(
        np.ascontiguousarray(data[..., 0]),
        np.ascontiguousarray(data[..., 1]),
        FULL_SCALE,
    )
