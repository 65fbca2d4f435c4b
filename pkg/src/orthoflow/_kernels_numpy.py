"""Pure-numpy implementations of the hot kernels.

Function signatures mirror ``_kernels_numba`` exactly: callers allocate the
output arrays and both modules fill them in place.  The numpy path
vectorizes over the pixel grid and loops over the (small) neighbor/bin
dimension, so it stays usable without a JIT at the cost of temporaries.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def _attention_weights(q, k, radius, vertical, inv_norm):
    """Masked softmax weights, shape (2*radius+1, H, W).

    Out-of-bounds neighbors keep a -inf score and are excluded from the
    softmax rather than zero-padded.
    """
    h, w, _ = q.shape
    inv_norm = q.dtype.type(inv_norm)
    nr = 2 * radius + 1
    scores = np.full((nr, h, w), NEG_INF, dtype=q.dtype)
    for i, r in enumerate(range(-radius, radius + 1)):
        if (vertical and abs(r) >= h) or (not vertical and abs(r) >= w):
            continue
        if vertical:
            if r >= 0:
                scores[i, : h - r] = np.einsum(
                    "hwd,hwd->hw", q[: h - r], k[r:]
                ) * inv_norm
            else:
                scores[i, -r:] = np.einsum(
                    "hwd,hwd->hw", q[-r:], k[: h + r]
                ) * inv_norm
        else:
            if r >= 0:
                scores[i, :, : w - r] = np.einsum(
                    "hwd,hwd->hw", q[:, : w - r], k[:, r:]
                ) * inv_norm
            else:
                scores[i, :, -r:] = np.einsum(
                    "hwd,hwd->hw", q[:, -r:], k[:, : w + r]
                ) * inv_norm
    m = scores.max(axis=0)
    with np.errstate(invalid="ignore"):
        e = np.exp(scores - m)
    e[~np.isfinite(scores)] = 0
    z = e.sum(axis=0)
    return e / z


def axial_attention_forward(q, k, v, radius, vertical, inv_norm, out):
    h, w, _ = v.shape
    weights = _attention_weights(q, k, radius, vertical, inv_norm)
    out.fill(0)
    for i, r in enumerate(range(-radius, radius + 1)):
        if (vertical and abs(r) >= h) or (not vertical and abs(r) >= w):
            continue
        wr = weights[i][..., None]
        if vertical:
            if r >= 0:
                out[: h - r] += wr[: h - r] * v[r:]
            else:
                out[-r:] += wr[-r:] * v[: h + r]
        else:
            if r >= 0:
                out[:, : w - r] += wr[:, : w - r] * v[:, r:]
            else:
                out[:, -r:] += wr[:, -r:] * v[:, : w + r]


def axial_attention_backward(q, k, v, radius, vertical, inv_norm, upstream, dq, dk, dv):
    h, w, _ = v.shape
    inv_norm = q.dtype.type(inv_norm)
    weights = _attention_weights(q, k, radius, vertical, inv_norm)
    nr = 2 * radius + 1
    # e_i = <upstream(p), v(p + r_i)>, zero where out of bounds
    evals = np.zeros((nr, h, w), dtype=v.dtype)
    for i, r in enumerate(range(-radius, radius + 1)):
        if (vertical and abs(r) >= h) or (not vertical and abs(r) >= w):
            continue
        if vertical:
            if r >= 0:
                evals[i, : h - r] = np.einsum("hwd,hwd->hw", upstream[: h - r], v[r:])
            else:
                evals[i, -r:] = np.einsum("hwd,hwd->hw", upstream[-r:], v[: h + r])
        else:
            if r >= 0:
                evals[i, :, : w - r] = np.einsum(
                    "hwd,hwd->hw", upstream[:, : w - r], v[:, r:]
                )
            else:
                evals[i, :, -r:] = np.einsum(
                    "hwd,hwd->hw", upstream[:, -r:], v[:, : w + r]
                )
    mean_e = (weights * evals).sum(axis=0)
    dscore = weights * (evals - mean_e) * inv_norm  # dL/d<rawdot>
    dq.fill(0)
    dk.fill(0)
    dv.fill(0)
    for i, r in enumerate(range(-radius, radius + 1)):
        if (vertical and abs(r) >= h) or (not vertical and abs(r) >= w):
            continue
        wr = weights[i][..., None]
        ds = dscore[i][..., None]
        if vertical:
            if r >= 0:
                dv[r:] += wr[: h - r] * upstream[: h - r]
                dq[: h - r] += ds[: h - r] * k[r:]
                dk[r:] += ds[: h - r] * q[: h - r]
            else:
                dv[: h + r] += wr[-r:] * upstream[-r:]
                dq[-r:] += ds[-r:] * k[: h + r]
                dk[: h + r] += ds[-r:] * q[-r:]
        else:
            if r >= 0:
                dv[:, r:] += wr[:, : w - r] * upstream[:, : w - r]
                dq[:, : w - r] += ds[:, : w - r] * k[:, r:]
                dk[:, r:] += ds[:, : w - r] * q[:, : w - r]
            else:
                dv[:, : w + r] += wr[:, -r:] * upstream[:, -r:]
                dq[:, -r:] += ds[:, -r:] * k[:, : w + r]
                dk[:, : w + r] += ds[:, -r:] * q[:, -r:]


def _corners(shape_hw, x, y):
    """Clamped corner indices and fractional weights for bilinear lookup."""
    h, w = shape_hw
    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    return x0, x1, y0, y1, fx, fy


def _sample(m, x, y):
    x0, x1, y0, y1, fx, fy = _corners(m.shape[:2], x, y)
    fx = fx[..., None]
    fy = fy[..., None]
    return (
        (1 - fy) * (1 - fx) * m[y0, x0]
        + (1 - fy) * fx * m[y0, x1]
        + fy * (1 - fx) * m[y1, x0]
        + fy * fx * m[y1, x1]
    )


def orthogonal_volume_forward(
    source, av0, av1, av2, ah0, ah1, ah2,
    bin_level, bin_offset, bin_divisor,
    u, v, inv_norm, out,
):
    """Fill the (2*nbins, H, W) orthogonal cost tensor.

    Channels [0, nbins) are horizontal bins over vertically-attended maps,
    channels [nbins, 2*nbins) vertical bins over horizontally-attended
    maps, both in ascending offset order.  Coarse levels are sampled
    center-aligned: a cell of a level with divisor s holds content centered
    (s-1)/2 fine cells past s times its own coordinate, so that shift is
    subtracted before dividing.
    """
    h, w, _ = source.shape
    inv_norm = source.dtype.type(inv_norm)
    att_v = (av0, av1, av2)
    att_h = (ah0, ah1, ah2)
    xs = np.arange(w, dtype=source.dtype)[None, :] + u
    ys = np.arange(h, dtype=source.dtype)[:, None] + v
    nbins = bin_level.shape[0]
    for b in range(nbins):
        lvl = int(bin_level[b])
        off = source.dtype.type(bin_offset[b])
        s = source.dtype.type(bin_divisor[b])
        c = (s - 1) / 2
        z = _sample(att_v[lvl], (xs + off - c) / s, (ys - c) / s)
        out[b] = np.einsum("hwd,hwd->hw", source, z) * inv_norm
        z = _sample(att_h[lvl], (xs - c) / s, (ys + off - c) / s)
        out[nbins + b] = np.einsum("hwd,hwd->hw", source, z) * inv_norm


def orthogonal_volume_backward(
    source, av0, av1, av2, ah0, ah1, ah2,
    bin_level, bin_offset, bin_divisor,
    u, v, inv_norm, upstream,
    d_source, dav0, dav1, dav2, dah0, dah1, dah2, du, dv,
):
    h, w, _ = source.shape
    inv_norm = source.dtype.type(inv_norm)
    att_v = (av0, av1, av2)
    att_h = (ah0, ah1, ah2)
    d_att_v = (dav0, dav1, dav2)
    d_att_h = (dah0, dah1, dah2)
    for arr in (d_source, dav0, dav1, dav2, dah0, dah1, dah2, du, dv):
        arr.fill(0)
    xs = np.arange(w, dtype=source.dtype)[None, :] + u
    ys = np.arange(h, dtype=source.dtype)[:, None] + v
    nbins = bin_level.shape[0]
    for b in range(2 * nbins):
        horizontal = b < nbins
        i = b if horizontal else b - nbins
        lvl = int(bin_level[i])
        off = source.dtype.type(bin_offset[i])
        s = source.dtype.type(bin_divisor[i])
        c = (s - 1) / 2
        m = att_v[lvl] if horizontal else att_h[lvl]
        dm = d_att_v[lvl] if horizontal else d_att_h[lvl]
        x = (xs + off - c) / s if horizontal else (xs - c) / s
        y = (ys - c) / s if horizontal else (ys + off - c) / s
        x0, x1, y0, y1, fx, fy = _corners(m.shape[:2], x, y)
        fxk = fx[..., None]
        fyk = fy[..., None]
        z = (
            (1 - fyk) * (1 - fxk) * m[y0, x0]
            + (1 - fyk) * fxk * m[y0, x1]
            + fyk * (1 - fxk) * m[y1, x0]
            + fyk * fxk * m[y1, x1]
        )
        g = upstream[b][..., None] * inv_norm
        d_source += g * z
        dz = g * source
        np.add.at(dm, (y0, x0), (1 - fyk) * (1 - fxk) * dz)
        np.add.at(dm, (y0, x1), (1 - fyk) * fxk * dz)
        np.add.at(dm, (y1, x0), fyk * (1 - fxk) * dz)
        np.add.at(dm, (y1, x1), fyk * fxk * dz)
        # piecewise-linear sampler derivative; zero where the clamp is active
        mh, mw = m.shape[:2]
        in_x = (x >= 0) & (x < mw - 1)
        in_y = (y >= 0) & (y < mh - 1)
        dzdx = (1 - fyk) * (m[y0, x1] - m[y0, x0]) + fyk * (m[y1, x1] - m[y1, x0])
        dzdy = (1 - fxk) * (m[y1, x0] - m[y0, x0]) + fxk * (m[y1, x1] - m[y0, x1])
        du += np.einsum("hwd,hwd->hw", dz, dzdx) * in_x.astype(source.dtype) / s
        dv += np.einsum("hwd,hwd->hw", dz, dzdy) * in_y.astype(source.dtype) / s


def local2d_volume_forward(source, t0, t1, t2, radius, u, v, inv_norm, out):
    """(2r+1)^2 x 3-scale window correlation, scale-major then dy, dx."""
    h, w, _ = source.shape
    inv_norm = source.dtype.type(inv_norm)
    levels = (t0, t1, t2)
    xs = np.arange(w, dtype=source.dtype)[None, :] + u
    ys = np.arange(h, dtype=source.dtype)[:, None] + v
    side = 2 * radius + 1
    ch = 0
    for lvl in range(3):
        m = levels[lvl]
        s = source.dtype.type(2**lvl)
        align = (s - 1) / 2
        cx = (xs - align) / s
        cy = (ys - align) / s
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                z = _sample(m, cx + dx, cy + dy)
                out[ch] = np.einsum("hwd,hwd->hw", source, z) * inv_norm
                ch += 1
    assert ch == 3 * side * side


def global1d_volume_forward(source, target, inv_norm, out):
    """Static full-row/full-column correlations: W + H channels."""
    h, w, _ = source.shape
    inv_norm = source.dtype.type(inv_norm)
    # horizontal: out[j, y, x] = <source[y, x], target[y, j]>
    horiz = np.matmul(source, target.transpose(0, 2, 1))  # (H, W, W)
    out[:w] = horiz.transpose(2, 0, 1) * inv_norm
    # vertical: out[w + i, y, x] = <source[y, x], target[i, x]>
    vert = np.einsum("ywd,iwd->iyw", source, target)
    out[w:] = vert * inv_norm
