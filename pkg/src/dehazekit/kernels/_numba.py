"""numba versions of the hot loops. Same signatures as the numpy path."""
import numpy as np
from numba import njit

from . import _numpy


@njit(cache=True)
def _conv_fwd(xp, w, stride, groups, oh, ow):
    b = xp.shape[0]
    cout, cig, k = w.shape[0], w.shape[1], w.shape[2]
    cog = cout // groups
    y = np.zeros((b, cout, oh, ow))
    for n in range(b):
        for o in range(cout):
            base = (o // cog) * cig
            for c in range(cig):
                for i in range(k):
                    for j in range(k):
                        wv = w[o, c, i, j]
                        for yy in range(oh):
                            r = yy * stride + i
                            for xx in range(ow):
                                y[n, o, yy, xx] += wv * xp[n, base + c, r, xx * stride + j]
    return y


@njit(cache=True)
def _conv_bwd(xp, w, gy, stride, groups):
    b = xp.shape[0]
    cout, cig, k = w.shape[0], w.shape[1], w.shape[2]
    oh, ow = gy.shape[2], gy.shape[3]
    cog = cout // groups
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for n in range(b):
        for o in range(cout):
            base = (o // cog) * cig
            for c in range(cig):
                ci = base + c
                for i in range(k):
                    for j in range(k):
                        wv = w[o, c, i, j]
                        acc = 0.0
                        for yy in range(oh):
                            r = yy * stride + i
                            for xx in range(ow):
                                g = gy[n, o, yy, xx]
                                col = xx * stride + j
                                acc += g * xp[n, ci, r, col]
                                gxp[n, ci, r, col] += wv * g
                        gw[o, c, i, j] += acc
    return gxp, gw


def conv2d_forward_loops(x, w, stride, padding, groups):
    b, cin, h, wd = x.shape
    k = w.shape[2]
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wd + 2 * padding - k) // stride + 1
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    return _conv_fwd(xp, np.ascontiguousarray(w, dtype=np.float64), stride, groups, oh, ow)


def conv2d_backward_loops(x, w, gy, stride, padding, groups):
    h, wd = x.shape[2], x.shape[3]
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    gxp, gw = _conv_bwd(xp, np.ascontiguousarray(w, dtype=np.float64),
                        np.ascontiguousarray(gy, dtype=np.float64), stride, groups)
    return gxp[:, :, padding:padding + h, padding:padding + wd], gw


def conv2d_forward(x, w, stride, padding, groups):
    # dense convs are GEMM-shaped and BLAS beats hand loops there
    if w.shape[1] == 1 and w.shape[0] == groups:
        return conv2d_forward_loops(x, w, stride, padding, groups)
    return _numpy.conv2d_forward(x, w, stride, padding, groups)


def conv2d_backward(x, w, gy, stride, padding, groups):
    if w.shape[1] == 1 and w.shape[0] == groups:
        return conv2d_backward_loops(x, w, gy, stride, padding, groups)
    return _numpy.conv2d_backward(x, w, gy, stride, padding, groups)


@njit(cache=True)
def _min_filter(a, radius):
    h, w = a.shape
    rows = np.empty_like(a)
    for y in range(h):
        lo, hi = max(0, y - radius), min(h - 1, y + radius)
        for x in range(w):
            m = a[lo, x]
            for yy in range(lo + 1, hi + 1):
                if a[yy, x] < m:
                    m = a[yy, x]
            rows[y, x] = m
    out = np.empty_like(a)
    for y in range(h):
        for x in range(w):
            lo, hi = max(0, x - radius), min(w - 1, x + radius)
            m = rows[y, lo]
            for xx in range(lo + 1, hi + 1):
                if rows[y, xx] < m:
                    m = rows[y, xx]
            out[y, x] = m
    return out


def min_filter(a, radius):
    return _min_filter(np.ascontiguousarray(a), radius)


@njit(cache=True)
def _kmeans1d(v, c, max_iter, tol):
    k = c.shape[0]
    sums = np.zeros(k)
    counts = np.zeros(k, dtype=np.int64)
    it = 0
    while it < max_iter:
        it += 1
        sums[:] = 0.0
        counts[:] = 0
        for x in v:
            best, bd = 0, abs(x - c[0])
            for j in range(1, k):
                d = abs(x - c[j])
                if d < bd:
                    best, bd = j, d
            sums[best] += x
            counts[best] += 1
        shift = 0.0
        for j in range(k):
            if counts[j] > 0:
                nc = sums[j] / counts[j]
                shift = max(shift, abs(nc - c[j]))
                c[j] = nc
        if shift < tol:
            break
    return c, it, counts


def kmeans1d(values, centroids, max_iter, tol):
    return _kmeans1d(np.asarray(values, dtype=np.float64),
                     np.array(centroids, dtype=np.float64), max_iter, tol)
