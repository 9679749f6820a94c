"""Kernel lane selection: compiled Cython extension when available, numpy otherwise.

Set DEPTHSWEEP_PURE=1 to force the pure lane regardless of the build.
"""

import importlib
import os

from . import pure

_FORCE_PURE = os.environ.get("DEPTHSWEEP_PURE", "") not in ("", "0")

_ck = None
if not _FORCE_PURE:
    try:
        _ck = importlib.import_module("._ck", __package__)
    except ImportError:
        _ck = None

# always-pure helpers (cheap, not worth compiling)
box_mean_adjoint = pure.box_mean_adjoint

def _c64(a):
    import numpy as _np

    return _np.ascontiguousarray(a, dtype=_np.float64)


if _ck is not None:
    BACKEND = "compiled"

    def sample_cols(feat, cols):
        return _ck.sample_cols(_c64(feat), _c64(cols))

    def sample_cols_vjp(feat, cols, gvals):
        return _ck.sample_cols_vjp(_c64(feat), _c64(cols), _c64(gvals))

    box_mean = _ck.box_mean

    def upsample_bilinear(vol, factor=4):
        return _ck.upsample_bilinear(_c64(vol), factor)

    def upsample_bilinear_adjoint(g, factor=4):
        return _ck.upsample_bilinear_adjoint(_c64(g), factor)

    def coarse_expect_fwd(logits, factor=4):
        return _ck.coarse_expect_fwd(_c64(logits), factor)

    def coarse_expect_bwd(logits, g_ibar, factor=4):
        return _ck.coarse_expect_bwd(_c64(logits), _c64(g_ibar), factor)

    softplus = _ck.softplus
    sigmoid = _ck.sigmoid
else:
    BACKEND = "pure"
    sample_cols = pure.sample_cols
    sample_cols_vjp = pure.sample_cols_vjp
    box_mean = pure.box_mean
    upsample_bilinear = pure.upsample_bilinear
    upsample_bilinear_adjoint = pure.upsample_bilinear_adjoint
    coarse_expect_fwd = pure.coarse_expect_fwd
    coarse_expect_bwd = pure.coarse_expect_bwd
    softplus = pure.softplus
    sigmoid = pure.sigmoid


def backend_name() -> str:
    return BACKEND
