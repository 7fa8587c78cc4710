"""Pure-numpy kernels. Reference path, always available."""
import numpy as np


def _pad(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, w, stride, padding, groups):
    """Cross-correlation without bias. Accumulates in float64.

    Loops over kernel taps and does one batched matmul per tap, which keeps
    memory at O(input) instead of materialising an im2col buffer.
    """
    b, cin, h, wd = x.shape
    cout, cig, k, _ = w.shape
    cog = cout // groups
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wd + 2 * padding - k) // stride + 1
    xp = _pad(x.astype(np.float64, copy=False), padding)
    wg = w.astype(np.float64, copy=False).reshape(groups, cog, cig, k, k)
    wt = np.ascontiguousarray(wg.transpose(3, 4, 0, 1, 2))  # per-tap contiguous for BLAS
    y = np.zeros((b, groups, cog, oh * ow))
    depthwise = cig == 1 and cog == 1
    for i in range(k):
        for j in range(k):
            xs = xp[:, :, i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride]
            xs = xs.reshape(b, groups, cig, oh * ow)
            if depthwise:
                y += wg[None, :, :, :, i, j] * xs
            else:
                for n in range(b):
                    for gi in range(groups):
                        y[n, gi] += wt[i, j, gi] @ xs[n, gi]
    return y.reshape(b, cout, oh, ow)


def conv2d_backward(x, w, gy, stride, padding, groups):
    b, cin, h, wd = x.shape
    cout, cig, k, _ = w.shape
    cog = cout // groups
    _, _, oh, ow = gy.shape
    xp = _pad(x.astype(np.float64, copy=False), padding)
    wg = w.astype(np.float64, copy=False).reshape(groups, cog, cig, k, k)
    wtt = np.ascontiguousarray(wg.transpose(3, 4, 0, 2, 1))
    g = gy.astype(np.float64, copy=False).reshape(b, groups, cog, oh * ow)
    gxp = np.zeros_like(xp)
    gw = np.zeros((groups, cog, cig, k, k))
    depthwise = cig == 1 and cog == 1
    for i in range(k):
        for j in range(k):
            sl = (slice(None), slice(None),
                  slice(i, i + stride * (oh - 1) + 1, stride),
                  slice(j, j + stride * (ow - 1) + 1, stride))
            xs = xp[sl].reshape(b, groups, cig, oh * ow)
            if depthwise:
                gw[:, 0, 0, i, j] = np.einsum("bgp,bgp->g", g[:, :, 0], xs[:, :, 0])
                gxs = wg[None, :, :, :, i, j] * g
            else:
                gxs = np.empty((b, groups, cig, oh * ow))
                for gi in range(groups):
                    acc = 0.0
                    for n in range(b):
                        acc = acc + g[n, gi] @ xs[n, gi].T
                        gxs[n, gi] = wtt[i, j, gi] @ g[n, gi]
                    gw[gi, :, :, i, j] = acc
            gxp[sl] += gxs.reshape(b, cin, oh, ow)
    if padding:
        gxp = gxp[:, :, padding:padding + h, padding:padding + wd]
    return gxp, gw.reshape(cout, cig, k, k)


def min_filter(a, radius):
    """Square min filter with edge clamping, separable."""
    if radius == 0:
        return a.copy()
    win = 2 * radius + 1
    p = np.pad(a, ((radius, radius), (0, 0)), mode="edge")
    rows = np.lib.stride_tricks.sliding_window_view(p, win, axis=0).min(axis=-1)
    p = np.pad(rows, ((0, 0), (radius, radius)), mode="edge")
    return np.lib.stride_tricks.sliding_window_view(p, win, axis=1).min(axis=-1)


def kmeans1d(values, centroids, max_iter, tol):
    """Lloyd iterations on scalars. Returns (centroids, iterations, counts)."""
    c = centroids.astype(np.float64).copy()
    v = values.astype(np.float64)
    it = 0
    counts = np.zeros(c.size, dtype=np.int64)
    while it < max_iter:
        it += 1
        labels = np.argmin(np.abs(v[:, None] - c[None, :]), axis=1)
        counts = np.bincount(labels, minlength=c.size)
        sums = np.bincount(labels, weights=v, minlength=c.size)
        new = np.where(counts > 0, sums / np.maximum(counts, 1), c)
        shift = np.max(np.abs(new - c))
        c = new
        if shift < tol:
            break
    return c, it, counts
