# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels; semantics mirror _kernels.pure operation by operation."""

import numpy as np

from libc.math cimport exp, floor, log1p
from libc.stdlib cimport free, malloc

BACKEND = "compiled"


def sample_cols(double[:, :, ::1] feat, double[:, :, ::1] cols):
    cdef Py_ssize_t C = feat.shape[0], H = feat.shape[1], W = feat.shape[2]
    cdef Py_ssize_t K = cols.shape[0]
    vals_np = np.zeros((K, C, H, W), dtype=np.float64)
    valid_np = np.zeros((K, H, W), dtype=np.uint8)
    cdef double[:, :, :, ::1] vals = vals_np
    cdef unsigned char[:, :, ::1] valid = valid_np
    cdef Py_ssize_t k, c, y, x, x0
    cdef double col, t, l, r
    if W < 2:
        for k in range(K):
            for y in range(H):
                for x in range(W):
                    col = cols[k, y, x]
                    if 0.0 <= col <= W - 1:
                        valid[k, y, x] = 1
                        for c in range(C):
                            vals[k, c, y, x] = feat[c, y, 0]
        return vals_np, valid_np.astype(bool)
    for k in range(K):
        for y in range(H):
            for x in range(W):
                col = cols[k, y, x]
                if col < 0.0 or col > W - 1:
                    continue
                valid[k, y, x] = 1
                x0 = <Py_ssize_t>floor(col)
                if x0 > W - 2:
                    x0 = W - 2
                t = col - x0
                for c in range(C):
                    l = feat[c, y, x0]
                    r = feat[c, y, x0 + 1]
                    vals[k, c, y, x] = l + (r - l) * t
    return vals_np, valid_np.astype(bool)


def sample_cols_vjp(double[:, :, ::1] feat, double[:, :, ::1] cols,
                    double[:, :, :, ::1] gvals):
    cdef Py_ssize_t C = feat.shape[0], H = feat.shape[1], W = feat.shape[2]
    cdef Py_ssize_t K = cols.shape[0]
    out_np = np.zeros((K, H, W), dtype=np.float64)
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t k, c, y, x, x0
    cdef double col, acc
    if W < 2:
        return out_np
    for k in range(K):
        for y in range(H):
            for x in range(W):
                col = cols[k, y, x]
                if col < 0.0 or col > W - 1:
                    continue
                x0 = <Py_ssize_t>floor(col)
                if x0 > W - 2:
                    x0 = W - 2
                acc = 0.0
                for c in range(C):
                    acc += gvals[k, c, y, x] * (feat[c, y, x0 + 1] - feat[c, y, x0])
                out[k, y, x] = acc
    return out_np


def box_mean(arr, Py_ssize_t radius):
    a = np.ascontiguousarray(arr, dtype=np.float64)
    if radius == 0:
        return a.copy()
    shape = a.shape
    cdef Py_ssize_t nd = a.ndim
    flat = a.reshape(-1, shape[nd - 2], shape[nd - 1])
    out = np.empty_like(flat)
    _box_mean_3d(flat, out, radius)
    return out.reshape(shape)


cdef void _box_mean_3d(double[:, :, ::1] a, double[:, :, ::1] out, Py_ssize_t r):
    cdef Py_ssize_t N = a.shape[0], H = a.shape[1], W = a.shape[2]
    cdef Py_ssize_t n, y, x, i
    cdef Py_ssize_t span = 2 * r + 1
    cdef double inv = 1.0 / span
    cdef double* cs = <double*>malloc((max(H, W) + 2 * r + 1) * sizeof(double))
    cdef double* tmp = <double*>malloc(H * W * sizeof(double))
    cdef double v
    if cs == NULL or tmp == NULL:
        free(cs)
        free(tmp)
        raise MemoryError()
    try:
        for n in range(N):
            # horizontal pass with replicate padding, per row
            for y in range(H):
                cs[0] = 0.0
                for i in range(W + 2 * r):
                    if i < r:
                        v = a[n, y, 0]
                    elif i >= W + r:
                        v = a[n, y, W - 1]
                    else:
                        v = a[n, y, i - r]
                    cs[i + 1] = cs[i] + v
                for x in range(W):
                    tmp[y * W + x] = (cs[x + span] - cs[x]) * inv
            # vertical pass, per column
            for x in range(W):
                cs[0] = 0.0
                for i in range(H + 2 * r):
                    if i < r:
                        v = tmp[x]
                    elif i >= H + r:
                        v = tmp[(H - 1) * W + x]
                    else:
                        v = tmp[(i - r) * W + x]
                    cs[i + 1] = cs[i] + v
                for y in range(H):
                    out[n, y, x] = (cs[y + span] - cs[y]) * inv
    finally:
        free(cs)
        free(tmp)


cdef void _axis_coeffs(Py_ssize_t n_src, Py_ssize_t factor, Py_ssize_t n_out,
                       Py_ssize_t* i0, Py_ssize_t* i1, double* t):
    cdef Py_ssize_t j
    cdef double src
    for j in range(n_out):
        src = <double>j / <double>factor
        i0[j] = <Py_ssize_t>floor(src)
        if i0[j] > n_src - 1:
            i0[j] = n_src - 1
        i1[j] = i0[j] + 1
        if i1[j] > n_src - 1:
            i1[j] = n_src - 1
        t[j] = src - i0[j]


def upsample_bilinear(double[:, :, ::1] vol, Py_ssize_t factor=4):
    cdef Py_ssize_t D = vol.shape[0], h = vol.shape[1], w = vol.shape[2]
    cdef Py_ssize_t H = h * factor, W = w * factor
    out_np = np.empty((D, H, W), dtype=np.float64)
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t* y0 = <Py_ssize_t*>malloc(H * sizeof(Py_ssize_t))
    cdef Py_ssize_t* y1 = <Py_ssize_t*>malloc(H * sizeof(Py_ssize_t))
    cdef double* ty = <double*>malloc(H * sizeof(double))
    cdef Py_ssize_t* x0 = <Py_ssize_t*>malloc(W * sizeof(Py_ssize_t))
    cdef Py_ssize_t* x1 = <Py_ssize_t*>malloc(W * sizeof(Py_ssize_t))
    cdef double* tx = <double*>malloc(W * sizeof(double))
    cdef Py_ssize_t d, Y, X
    cdef double top, bot
    if y0 == NULL or y1 == NULL or ty == NULL or x0 == NULL or x1 == NULL or tx == NULL:
        free(y0); free(y1); free(ty); free(x0); free(x1); free(tx)
        raise MemoryError()
    try:
        _axis_coeffs(h, factor, H, y0, y1, ty)
        _axis_coeffs(w, factor, W, x0, x1, tx)
        for d in range(D):
            for Y in range(H):
                for X in range(W):
                    top = vol[d, y0[Y], x0[X]] + (vol[d, y0[Y], x1[X]] - vol[d, y0[Y], x0[X]]) * tx[X]
                    bot = vol[d, y1[Y], x0[X]] + (vol[d, y1[Y], x1[X]] - vol[d, y1[Y], x0[X]]) * tx[X]
                    out[d, Y, X] = top + (bot - top) * ty[Y]
    finally:
        free(y0); free(y1); free(ty); free(x0); free(x1); free(tx)
    return out_np


def upsample_bilinear_adjoint(double[:, :, ::1] g, Py_ssize_t factor=4):
    cdef Py_ssize_t D = g.shape[0], H = g.shape[1], W = g.shape[2]
    cdef Py_ssize_t h = H // factor, w = W // factor
    out_np = np.zeros((D, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t* y0 = <Py_ssize_t*>malloc(H * sizeof(Py_ssize_t))
    cdef Py_ssize_t* y1 = <Py_ssize_t*>malloc(H * sizeof(Py_ssize_t))
    cdef double* ty = <double*>malloc(H * sizeof(double))
    cdef Py_ssize_t* x0 = <Py_ssize_t*>malloc(W * sizeof(Py_ssize_t))
    cdef Py_ssize_t* x1 = <Py_ssize_t*>malloc(W * sizeof(Py_ssize_t))
    cdef double* tx = <double*>malloc(W * sizeof(double))
    cdef Py_ssize_t d, Y, X
    cdef double gv, a, b
    if y0 == NULL or y1 == NULL or ty == NULL or x0 == NULL or x1 == NULL or tx == NULL:
        free(y0); free(y1); free(ty); free(x0); free(x1); free(tx)
        raise MemoryError()
    try:
        _axis_coeffs(h, factor, H, y0, y1, ty)
        _axis_coeffs(w, factor, W, x0, x1, tx)
        for d in range(D):
            for Y in range(H):
                for X in range(W):
                    gv = g[d, Y, X]
                    a = gv * (1.0 - ty[Y])
                    b = gv * ty[Y]
                    out[d, y0[Y], x0[X]] += a * (1.0 - tx[X])
                    out[d, y0[Y], x1[X]] += a * tx[X]
                    out[d, y1[Y], x0[X]] += b * (1.0 - tx[X])
                    out[d, y1[Y], x1[X]] += b * tx[X]
    finally:
        free(y0); free(y1); free(ty); free(x0); free(x1); free(tx)
    return out_np


def coarse_expect_fwd(double[:, :, ::1] logits, Py_ssize_t factor=4):
    """Fused upsample -> softmax over planes -> expected plane index."""
    cdef Py_ssize_t D = logits.shape[0], h = logits.shape[1], w = logits.shape[2]
    cdef Py_ssize_t H = h * factor, W = w * factor
    out_np = np.empty((H, W), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef double* li = <double*>malloc(D * sizeof(double))
    cdef Py_ssize_t Y, X, d, yy0, yy1, xx0, xx1
    cdef double sy, sx, tyv, txv, m, se, acc, e, top, bot
    if li == NULL:
        raise MemoryError()
    try:
        for Y in range(H):
            sy = <double>Y / <double>factor
            yy0 = <Py_ssize_t>floor(sy)
            if yy0 > h - 1:
                yy0 = h - 1
            yy1 = yy0 + 1
            if yy1 > h - 1:
                yy1 = h - 1
            tyv = sy - yy0
            for X in range(W):
                sx = <double>X / <double>factor
                xx0 = <Py_ssize_t>floor(sx)
                if xx0 > w - 1:
                    xx0 = w - 1
                xx1 = xx0 + 1
                if xx1 > w - 1:
                    xx1 = w - 1
                txv = sx - xx0
                m = -1e300
                for d in range(D):
                    top = logits[d, yy0, xx0] + (logits[d, yy0, xx1] - logits[d, yy0, xx0]) * txv
                    bot = logits[d, yy1, xx0] + (logits[d, yy1, xx1] - logits[d, yy1, xx0]) * txv
                    li[d] = top + (bot - top) * tyv
                    if li[d] > m:
                        m = li[d]
                se = 0.0
                acc = 0.0
                for d in range(D):
                    e = exp(li[d] - m)
                    se += e
                    acc += e * d
                out[Y, X] = acc / se
    finally:
        free(li)
    return out_np


def coarse_expect_bwd(double[:, :, ::1] logits, double[:, ::1] g_ibar,
                      Py_ssize_t factor=4):
    cdef Py_ssize_t D = logits.shape[0], h = logits.shape[1], w = logits.shape[2]
    cdef Py_ssize_t H = h * factor, W = w * factor
    out_np = np.zeros((D, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_np
    cdef double* li = <double*>malloc(D * sizeof(double))
    cdef double* p = <double*>malloc(D * sizeof(double))
    cdef Py_ssize_t Y, X, d, yy0, yy1, xx0, xx1
    cdef double sy, sx, tyv, txv, m, se, ibar, g, gl, top, bot
    cdef double waa, wab, wba, wbb
    if li == NULL or p == NULL:
        free(li)
        free(p)
        raise MemoryError()
    try:
        for Y in range(H):
            sy = <double>Y / <double>factor
            yy0 = <Py_ssize_t>floor(sy)
            if yy0 > h - 1:
                yy0 = h - 1
            yy1 = yy0 + 1
            if yy1 > h - 1:
                yy1 = h - 1
            tyv = sy - yy0
            for X in range(W):
                g = g_ibar[Y, X]
                if g == 0.0:
                    continue
                sx = <double>X / <double>factor
                xx0 = <Py_ssize_t>floor(sx)
                if xx0 > w - 1:
                    xx0 = w - 1
                xx1 = xx0 + 1
                if xx1 > w - 1:
                    xx1 = w - 1
                txv = sx - xx0
                m = -1e300
                for d in range(D):
                    top = logits[d, yy0, xx0] + (logits[d, yy0, xx1] - logits[d, yy0, xx0]) * txv
                    bot = logits[d, yy1, xx0] + (logits[d, yy1, xx1] - logits[d, yy1, xx0]) * txv
                    li[d] = top + (bot - top) * tyv
                    if li[d] > m:
                        m = li[d]
                se = 0.0
                ibar = 0.0
                for d in range(D):
                    p[d] = exp(li[d] - m)
                    se += p[d]
                    ibar += p[d] * d
                ibar /= se
                waa = (1.0 - tyv) * (1.0 - txv)
                wab = (1.0 - tyv) * txv
                wba = tyv * (1.0 - txv)
                wbb = tyv * txv
                for d in range(D):
                    gl = g * (p[d] / se) * (d - ibar)
                    out[d, yy0, xx0] += gl * waa
                    out[d, yy0, xx1] += gl * wab
                    out[d, yy1, xx0] += gl * wba
                    out[d, yy1, xx1] += gl * wbb
    finally:
        free(li)
        free(p)
    return out_np


def softplus(x):
    a = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(a)
    _softplus_flat(a.reshape(-1), out.reshape(-1))
    return out


cdef void _softplus_flat(double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        if a[i] > 0.0:
            out[i] = a[i] + log1p(exp(-a[i]))
        else:
            out[i] = log1p(exp(a[i]))


def sigmoid(x):
    a = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(a)
    _sigmoid_flat(a.reshape(-1), out.reshape(-1))
    return out


cdef void _sigmoid_flat(double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    cdef double e
    for i in range(a.shape[0]):
        if a[i] >= 0.0:
            out[i] = 1.0 / (1.0 + exp(-a[i]))
        else:
            e = exp(a[i])
            out[i] = e / (1.0 + e)
