"""Pure numpy/scipy implementations of the hot kernels.

These are the reference semantics; the compiled lane in ``_ck.pyx`` mirrors
them operation by operation.  All kernels take and return float64 arrays.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

BACKEND = "pure"


# ---------------------------------------------------------------------------
# Horizontal bilinear sampling along image rows

def sample_cols(feat: np.ndarray, cols: np.ndarray):
    """Sample feature rows at fractional column positions.

    feat: (C, H, W) float64.  cols: (K, H, W) float64 target columns.
    Returns (vals, valid): vals (K, C, H, W) with linear interpolation along
    x, zero outside [0, W-1]; valid (K, H, W) bool.
    """
    C, H, W = feat.shape
    cols = np.asarray(cols, dtype=np.float64)
    valid = (cols >= 0.0) & (cols <= W - 1)
    if W < 2:
        vals = np.broadcast_to(feat[None, :, :, 0:1], (cols.shape[0], C, H, W)).copy()
        vals *= valid[:, None]
        return vals, valid
    x0 = np.floor(cols).astype(np.intp)
    np.clip(x0, 0, W - 2, out=x0)
    t = np.where(valid, cols - x0, 0.0)
    rows = np.arange(H, dtype=np.intp)[None, :, None]
    left = feat[:, rows, x0]          # (C, K, H, W)
    right = feat[:, rows, x0 + 1]
    vals = left + (right - left) * t[None]
    vals *= valid[None]
    return np.ascontiguousarray(np.moveaxis(vals, 0, 1)), valid


def sample_cols_vjp(feat: np.ndarray, cols: np.ndarray, gvals: np.ndarray) -> np.ndarray:
    """Gradient of sample_cols w.r.t. cols: sum over channels of slope * gvals."""
    C, H, W = feat.shape
    cols = np.asarray(cols, dtype=np.float64)
    valid = (cols >= 0.0) & (cols <= W - 1)
    if W < 2:
        return np.zeros(cols.shape, dtype=np.float64)
    x0 = np.floor(cols).astype(np.intp)
    np.clip(x0, 0, W - 2, out=x0)
    rows = np.arange(H, dtype=np.intp)[None, :, None]
    slope = feat[:, rows, x0 + 1] - feat[:, rows, x0]     # (C, K, H, W)
    g = (np.moveaxis(gvals, 1, 0) * slope).sum(axis=0)
    g[~valid] = 0.0
    return g


# ---------------------------------------------------------------------------
# Replicate-padded box mean over the last two axes, plus its exact adjoint

def _box1(arr: np.ndarray, radius: int, axis: int) -> np.ndarray:
    if radius == 0:
        return arr.copy()
    n = 2 * radius + 1
    a = np.moveaxis(arr, axis, -1)
    length = a.shape[-1]
    pad = [(0, 0)] * (a.ndim - 1) + [(radius, radius)]
    ap = np.pad(a, pad, mode="edge")
    cs = np.cumsum(ap, axis=-1, dtype=np.float64)
    zero = np.zeros(a.shape[:-1] + (1,), dtype=np.float64)
    cs = np.concatenate([zero, cs], axis=-1)
    out = (cs[..., n:] - cs[..., :length]) / n
    return np.moveaxis(out, -1, axis)


def _box1_adjoint(g: np.ndarray, radius: int, axis: int) -> np.ndarray:
    if radius == 0:
        return g.copy()
    n = 2 * radius + 1
    gm = np.moveaxis(g, axis, -1)
    length = gm.shape[-1]
    # adjoint of the valid window-sum: zero-boundary sliding sum of width n
    cs = np.cumsum(gm, axis=-1, dtype=np.float64)
    zero = np.zeros(gm.shape[:-1] + (1,), dtype=np.float64)
    cs = np.concatenate([zero, cs], axis=-1)
    j = np.arange(length + 2 * radius)
    hi = np.minimum(j + 1, length)
    lo = np.maximum(j - 2 * radius, 0)
    ct = cs[..., hi] - cs[..., lo]
    # adjoint of replicate padding: fold pad columns onto the edges
    out = ct[..., radius:radius + length].copy()
    out[..., 0] = ct[..., :radius + 1].sum(axis=-1)
    out[..., -1] = ct[..., length + radius - 1:].sum(axis=-1)
    if length == 1:
        out[..., 0] = ct.sum(axis=-1)
    out /= n
    return np.moveaxis(out, -1, axis)


def box_mean(arr: np.ndarray, radius: int) -> np.ndarray:
    """(2r+1)^2 box mean over the last two axes, edges replicated."""
    if radius == 0:
        return np.asarray(arr, dtype=np.float64).copy()
    out = _box1(np.asarray(arr, dtype=np.float64), radius, axis=-1)
    return _box1(out, radius, axis=-2)


def box_mean_adjoint(g: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return np.asarray(g, dtype=np.float64).copy()
    out = _box1_adjoint(np.asarray(g, dtype=np.float64), radius, axis=-2)
    return _box1_adjoint(out, radius, axis=-1)


# ---------------------------------------------------------------------------
# Spatial bilinear upsampling of a (D, h, w) volume, grid src = dst / factor

def _interp_matrix(n_src: int, factor: int) -> sparse.csr_matrix:
    n_out = n_src * factor
    src = np.arange(n_out, dtype=np.float64) / factor
    i0 = np.minimum(np.floor(src).astype(np.intp), n_src - 1)
    i1 = np.minimum(i0 + 1, n_src - 1)
    t = src - i0
    rows = np.repeat(np.arange(n_out), 2)
    cols = np.stack([i0, i1], axis=1).ravel()
    data = np.stack([1.0 - t, t], axis=1).ravel()
    m = sparse.coo_matrix((data, (rows, cols)), shape=(n_out, n_src))
    return m.tocsr()


def upsample_bilinear(vol: np.ndarray, factor: int = 4) -> np.ndarray:
    """Bilinear spatial upsampling; plane count unchanged, source grid kept."""
    d, h, w = vol.shape
    uy = _interp_matrix(h, factor)
    ux = _interp_matrix(w, factor)
    tmp = uy @ vol.transpose(1, 0, 2).reshape(h, d * w)           # (H, d*w)
    tmp = tmp.reshape(h * factor, d, w).transpose(1, 0, 2)        # (d, H, w)
    out = (ux @ tmp.reshape(d * h * factor, w).T).T               # (d*H, W)
    return np.ascontiguousarray(out.reshape(d, h * factor, w * factor))


def upsample_bilinear_adjoint(g: np.ndarray, factor: int = 4) -> np.ndarray:
    d, H, W = g.shape
    h, w = H // factor, W // factor
    uy = _interp_matrix(h, factor)
    ux = _interp_matrix(w, factor)
    tmp = (ux.T @ g.reshape(d * H, W).T).T                        # (d*H, w)
    tmp = tmp.reshape(d, H, w).transpose(1, 0, 2).reshape(H, d * w)
    out = (uy.T @ tmp).reshape(h, d, w).transpose(1, 0, 2)
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# Fused coarse regression: upsample -> softmax over planes -> expected index

def coarse_expect_fwd(logits: np.ndarray, factor: int = 4) -> np.ndarray:
    L = upsample_bilinear(logits, factor)
    L -= L.max(axis=0, keepdims=True)
    np.exp(L, out=L)
    s = L.sum(axis=0)
    idx = np.arange(L.shape[0], dtype=np.float64)
    return np.tensordot(idx, L, axes=(0, 0)) / s


def coarse_expect_bwd(logits: np.ndarray, g_ibar: np.ndarray, factor: int = 4) -> np.ndarray:
    L = upsample_bilinear(logits, factor)
    L -= L.max(axis=0, keepdims=True)
    np.exp(L, out=L)
    L /= L.sum(axis=0, keepdims=True)
    idx = np.arange(L.shape[0], dtype=np.float64)
    ibar = np.tensordot(idx, L, axes=(0, 0))
    gL = L * (g_ibar[None] * (idx[:, None, None] - ibar[None]))
    return upsample_bilinear_adjoint(gL, factor)


# ---------------------------------------------------------------------------
# Elementwise

def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
