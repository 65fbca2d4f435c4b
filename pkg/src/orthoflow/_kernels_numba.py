"""Numba-jitted implementations of the hot kernels.

Signatures mirror ``_kernels_numpy``.  Forward kernels parallelize over
output rows; each pixel's reductions run sequentially, so results are
bit-identical for any thread count.  Backward kernels scatter into shared
gradient buffers and therefore run single-threaded.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def axial_attention_forward(q, k, v, radius, vertical, inv_norm, out):
    h, w, d = v.shape
    nr = 2 * radius + 1
    vf = 1 if vertical else 0
    hf = 1 - vf
    for y in prange(h):
        scores = np.empty(nr, dtype=np.float64)
        for x in range(w):
            p = y * vf + x * hf
            limit = h * vf + w * hf
            lo = max(-radius, -p)
            hi = min(radius, limit - 1 - p)
            n = hi - lo + 1
            m = -np.inf
            for i in range(n):
                r = lo + i
                yy = y + r * vf
                xx = x + r * hf
                acc = 0.0
                for c in range(d):
                    acc += q[y, x, c] * k[yy, xx, c]
                s = acc * inv_norm
                scores[i] = s
                if s > m:
                    m = s
            z = 0.0
            for i in range(n):
                e = np.exp(scores[i] - m)
                scores[i] = e
                z += e
            for c in range(d):
                out[y, x, c] = 0.0
            for i in range(n):
                r = lo + i
                yy = y + r * vf
                xx = x + r * hf
                wgt = scores[i] / z
                for c in range(d):
                    out[y, x, c] += wgt * v[yy, xx, c]


@njit(cache=True)
def axial_attention_backward(q, k, v, radius, vertical, inv_norm, upstream, dq, dk, dv):
    h, w, d = v.shape
    nr = 2 * radius + 1
    vf = 1 if vertical else 0
    hf = 1 - vf
    weights = np.empty(nr, dtype=np.float64)
    evals = np.empty(nr, dtype=np.float64)
    dq[:] = 0.0
    dk[:] = 0.0
    dv[:] = 0.0
    for y in range(h):
        for x in range(w):
            p = y * vf + x * hf
            limit = h * vf + w * hf
            lo = max(-radius, -p)
            hi = min(radius, limit - 1 - p)
            n = hi - lo + 1
            m = -np.inf
            for i in range(n):
                r = lo + i
                yy = y + r * vf
                xx = x + r * hf
                acc = 0.0
                for c in range(d):
                    acc += q[y, x, c] * k[yy, xx, c]
                s = acc * inv_norm
                weights[i] = s
                if s > m:
                    m = s
            z = 0.0
            for i in range(n):
                e = np.exp(weights[i] - m)
                weights[i] = e
                z += e
            mean_e = 0.0
            for i in range(n):
                weights[i] /= z
                r = lo + i
                yy = y + r * vf
                xx = x + r * hf
                acc = 0.0
                for c in range(d):
                    acc += upstream[y, x, c] * v[yy, xx, c]
                evals[i] = acc
                mean_e += weights[i] * acc
            for i in range(n):
                r = lo + i
                yy = y + r * vf
                xx = x + r * hf
                wgt = weights[i]
                ds = wgt * (evals[i] - mean_e) * inv_norm
                for c in range(d):
                    dv[yy, xx, c] += wgt * upstream[y, x, c]
                    dq[y, x, c] += ds * k[yy, xx, c]
                    dk[yy, xx, c] += ds * q[y, x, c]


@njit(inline="always")
def _corner_setup(mh, mw, x, y):
    xc = min(max(x, 0.0), mw - 1.0)
    yc = min(max(y, 0.0), mh - 1.0)
    x0 = int(np.floor(xc))
    y0 = int(np.floor(yc))
    x1 = min(x0 + 1, mw - 1)
    y1 = min(y0 + 1, mh - 1)
    fx = xc - x0
    fy = yc - y0
    return x0, x1, y0, y1, fx, fy


@njit(inline="always")
def _sample_dot(m, src, y, x, sy, sx, inv_norm):
    """<src[y, x], bilinear(m at (sx, sy))> * inv_norm."""
    mh, mw, d = m.shape
    x0, x1, y0, y1, fx, fy = _corner_setup(mh, mw, sx, sy)
    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx
    acc = 0.0
    for c in range(d):
        val = (
            w00 * m[y0, x0, c]
            + w01 * m[y0, x1, c]
            + w10 * m[y1, x0, c]
            + w11 * m[y1, x1, c]
        )
        acc += src[y, x, c] * val
    return acc * inv_norm


@njit(parallel=True, cache=True)
def orthogonal_volume_forward(
    source, av0, av1, av2, ah0, ah1, ah2,
    bin_level, bin_offset, bin_divisor,
    u, v, inv_norm, out,
):
    h, w, d = source.shape
    nbins = bin_level.shape[0]
    for y in prange(h):
        for x in range(w):
            xt = x + u[y, x]
            yt = y + v[y, x]
            for b in range(nbins):
                lvl = bin_level[b]
                off = bin_offset[b]
                s = bin_divisor[b]
                c = (s - 1.0) / 2.0
                if lvl == 0:
                    mv = av0
                    mh_ = ah0
                elif lvl == 1:
                    mv = av1
                    mh_ = ah1
                else:
                    mv = av2
                    mh_ = ah2
                out[b, y, x] = _sample_dot(
                    mv, source, y, x, (yt - c) / s, (xt + off - c) / s, inv_norm
                )
                out[nbins + b, y, x] = _sample_dot(
                    mh_, source, y, x, (yt + off - c) / s, (xt - c) / s, inv_norm
                )


@njit(cache=True)
def orthogonal_volume_backward(
    source, av0, av1, av2, ah0, ah1, ah2,
    bin_level, bin_offset, bin_divisor,
    u, v, inv_norm, upstream,
    d_source, dav0, dav1, dav2, dah0, dah1, dah2, du, dv,
):
    h, w, d = source.shape
    nbins = bin_level.shape[0]
    d_source[:] = 0.0
    dav0[:] = 0.0
    dav1[:] = 0.0
    dav2[:] = 0.0
    dah0[:] = 0.0
    dah1[:] = 0.0
    dah2[:] = 0.0
    du[:] = 0.0
    dv[:] = 0.0
    for y in range(h):
        for x in range(w):
            xt = x + u[y, x]
            yt = y + v[y, x]
            for bb in range(2 * nbins):
                horizontal = bb < nbins
                b = bb if horizontal else bb - nbins
                lvl = bin_level[b]
                off = bin_offset[b]
                s = bin_divisor[b]
                cal = (s - 1.0) / 2.0
                if horizontal:
                    if lvl == 0:
                        m = av0
                        dm = dav0
                    elif lvl == 1:
                        m = av1
                        dm = dav1
                    else:
                        m = av2
                        dm = dav2
                    sx = (xt + off - cal) / s
                    sy = (yt - cal) / s
                else:
                    if lvl == 0:
                        m = ah0
                        dm = dah0
                    elif lvl == 1:
                        m = ah1
                        dm = dah1
                    else:
                        m = ah2
                        dm = dah2
                    sx = (xt - cal) / s
                    sy = (yt + off - cal) / s
                mh_, mw_, _ = m.shape
                x0, x1, y0, y1, fx, fy = _corner_setup(mh_, mw_, sx, sy)
                w00 = (1.0 - fy) * (1.0 - fx)
                w01 = (1.0 - fy) * fx
                w10 = fy * (1.0 - fx)
                w11 = fy * fx
                g = upstream[bb, y, x] * inv_norm
                gx = 0.0
                gy = 0.0
                for c in range(d):
                    m00 = m[y0, x0, c]
                    m01 = m[y0, x1, c]
                    m10 = m[y1, x0, c]
                    m11 = m[y1, x1, c]
                    val = w00 * m00 + w01 * m01 + w10 * m10 + w11 * m11
                    d_source[y, x, c] += g * val
                    dz = g * source[y, x, c]
                    dm[y0, x0, c] += w00 * dz
                    dm[y0, x1, c] += w01 * dz
                    dm[y1, x0, c] += w10 * dz
                    dm[y1, x1, c] += w11 * dz
                    gx += dz * ((1.0 - fy) * (m01 - m00) + fy * (m11 - m10))
                    gy += dz * ((1.0 - fx) * (m10 - m00) + fx * (m11 - m01))
                # sampler derivative is zero wherever the clamp is active
                if sx < 0.0 or sx >= mw_ - 1.0:
                    gx = 0.0
                if sy < 0.0 or sy >= mh_ - 1.0:
                    gy = 0.0
                du[y, x] += gx / s
                dv[y, x] += gy / s


@njit(parallel=True, cache=True)
def local2d_volume_forward(source, t0, t1, t2, radius, u, v, inv_norm, out):
    h, w, d = source.shape
    side = 2 * radius + 1
    per_level = side * side
    for y in prange(h):
        for x in range(w):
            xt = x + u[y, x]
            yt = y + v[y, x]
            for lvl in range(3):
                if lvl == 0:
                    m = t0
                elif lvl == 1:
                    m = t1
                else:
                    m = t2
                s = 2.0**lvl
                align = (s - 1.0) / 2.0
                cx = (xt - align) / s
                cy = (yt - align) / s
                ch = lvl * per_level
                for dy in range(-radius, radius + 1):
                    for dx in range(-radius, radius + 1):
                        out[ch, y, x] = _sample_dot(
                            m, source, y, x, cy + dy, cx + dx, inv_norm
                        )
                        ch += 1


@njit(parallel=True, cache=True)
def global1d_volume_forward(source, target, inv_norm, out):
    h, w, d = source.shape
    for y in prange(h):
        for x in range(w):
            for j in range(w):
                acc = 0.0
                for c in range(d):
                    acc += source[y, x, c] * target[y, j, c]
                out[j, y, x] = acc * inv_norm
            for i in range(h):
                acc = 0.0
                for c in range(d):
                    acc += source[y, x, c] * target[i, x, c]
                out[w + i, y, x] = acc * inv_norm
