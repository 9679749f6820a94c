"""Kernel-lane tests: pure/compiled equivalence, adjoint identities, VJPs."""

import numpy as np
import pytest

from depthsweep import _kernels as K
from depthsweep._kernels import pure

try:
    from depthsweep._kernels import _ck
except ImportError:
    _ck = None

needs_ext = pytest.mark.skipif(_ck is None, reason="compiled kernels not built")

RNG = np.random.default_rng(42)


class TestSampleCols:
    def test_exact_integer_columns(self):
        feat = RNG.normal(size=(3, 4, 8))
        cols = np.broadcast_to(np.arange(8.0), (1, 4, 8)).copy()
        vals, valid = pure.sample_cols(feat, cols)
        assert valid.all()
        np.testing.assert_allclose(vals[0], feat, atol=0)

    def test_midpoint_interpolation(self):
        feat = np.zeros((1, 1, 4))
        feat[0, 0] = [0.0, 1.0, 3.0, 5.0]
        cols = np.array([[[0.5, 1.5, 2.5, 3.0]]])
        vals, valid = pure.sample_cols(feat, cols)
        np.testing.assert_allclose(vals[0, 0, 0], [0.5, 2.0, 4.0, 5.0])
        assert valid.all()

    def test_out_of_range_zero_invalid(self):
        feat = np.ones((2, 2, 5))
        cols = np.array([[[-0.01, 4.01], [0.0, 4.0]]])
        vals, valid = pure.sample_cols(feat, cols)
        assert not valid[0, 0, 0] and not valid[0, 0, 1]
        assert valid[0, 1, 0] and valid[0, 1, 1]
        assert vals[0, :, 0, 0].max() == 0.0 and vals[0, :, 0, 1].max() == 0.0

    def test_vjp_matches_fd(self):
        feat = RNG.normal(size=(4, 3, 12))
        cols = RNG.uniform(0.7, 10.2, size=(2, 3, 6))
        g = RNG.normal(size=(2, 4, 3, 6))
        analytic = pure.sample_cols_vjp(feat, cols, g)
        h = 1e-6
        fd = np.zeros_like(cols)
        for idx in np.ndindex(cols.shape):
            cp = cols.copy()
            cp[idx] += h
            vp = (pure.sample_cols(feat, cp)[0] * g).sum()
            cm = cols.copy()
            cm[idx] -= h
            vm = (pure.sample_cols(feat, cm)[0] * g).sum()
            fd[idx] = (vp - vm) / (2 * h)
        np.testing.assert_allclose(analytic, fd, rtol=1e-5, atol=1e-7)

    @needs_ext
    def test_lanes_agree(self):
        feat = RNG.normal(size=(5, 6, 20))
        cols = RNG.uniform(-2.0, 21.0, size=(3, 6, 20))
        v1, ok1 = pure.sample_cols(feat, cols)
        v2, ok2 = _ck.sample_cols(np.ascontiguousarray(feat), np.ascontiguousarray(cols))
        np.testing.assert_array_equal(ok1, ok2)
        np.testing.assert_allclose(v1, v2, atol=1e-14)
        g = RNG.normal(size=v1.shape)
        np.testing.assert_allclose(
            pure.sample_cols_vjp(feat, cols, g),
            _ck.sample_cols_vjp(np.ascontiguousarray(feat),
                                np.ascontiguousarray(cols),
                                np.ascontiguousarray(g)),
            atol=1e-14,
        )


class TestBoxMean:
    def test_constant_preserved(self):
        a = np.full((2, 7, 9), 3.3)
        np.testing.assert_allclose(pure.box_mean(a, 2), a, rtol=1e-14)

    def test_direct_window_oracle(self):
        a = RNG.normal(size=(6, 8))
        r = 2
        out = pure.box_mean(a, r)
        ap = np.pad(a, r, mode="edge")
        for y in range(6):
            for x in range(8):
                win = ap[y:y + 2 * r + 1, x:x + 2 * r + 1]
                assert out[y, x] == pytest.approx(win.mean(), rel=1e-12)

    def test_adjoint_dot_identity(self):
        # <B x, y> == <x, B^T y> for random x, y
        for r in (1, 2, 4):
            x = RNG.normal(size=(3, 10, 13))
            y = RNG.normal(size=(3, 10, 13))
            lhs = (pure.box_mean(x, r) * y).sum()
            rhs = (x * pure.box_mean_adjoint(y, r)).sum()
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_radius_zero_identity(self):
        a = RNG.normal(size=(4, 5))
        np.testing.assert_array_equal(pure.box_mean(a, 0), a)

    @needs_ext
    def test_lanes_agree(self):
        a = RNG.normal(size=(5, 11, 17))
        for r in (1, 2, 4):
            np.testing.assert_allclose(pure.box_mean(a, r), _ck.box_mean(a, r),
                                       atol=1e-12)


def upsample_loop_oracle(vol, factor=4):
    """Independently coded separable interpolation."""
    d, h, w = vol.shape
    out = np.zeros((d, h * factor, w * factor))
    for k in range(d):
        for yy in range(h * factor):
            sy = yy / factor
            y0 = min(int(np.floor(sy)), h - 1)
            y1 = min(y0 + 1, h - 1)
            ty = sy - y0
            for xx in range(w * factor):
                sx = xx / factor
                x0 = min(int(np.floor(sx)), w - 1)
                x1 = min(x0 + 1, w - 1)
                tx = sx - x0
                top = vol[k, y0, x0] * (1 - tx) + vol[k, y0, x1] * tx
                bot = vol[k, y1, x0] * (1 - tx) + vol[k, y1, x1] * tx
                out[k, yy, xx] = top * (1 - ty) + bot * ty
    return out


class TestUpsample:
    def test_matches_loop_oracle(self):
        vol = RNG.normal(size=(3, 4, 4))
        np.testing.assert_allclose(pure.upsample_bilinear(vol, 4),
                                   upsample_loop_oracle(vol, 4), atol=1e-12)

    def test_constant(self):
        vol = np.full((2, 3, 5), 1.7)
        np.testing.assert_allclose(pure.upsample_bilinear(vol), 1.7, rtol=1e-14)

    def test_source_points_preserved(self):
        vol = RNG.normal(size=(2, 5, 6))
        up = pure.upsample_bilinear(vol, 4)
        np.testing.assert_allclose(up[:, ::4, ::4], vol, atol=1e-14)

    def test_midpoint_is_cell_average(self):
        vol = RNG.normal(size=(1, 4, 4))
        up = pure.upsample_bilinear(vol, 4)
        mid = up[0, 2, 2]
        assert mid == pytest.approx(vol[0, :2, :2].mean(), rel=1e-12)

    def test_adjoint_dot_identity(self):
        x = RNG.normal(size=(3, 5, 6))
        y = RNG.normal(size=(3, 20, 24))
        lhs = (pure.upsample_bilinear(x) * y).sum()
        rhs = (x * pure.upsample_bilinear_adjoint(y)).sum()
        assert lhs == pytest.approx(rhs, rel=1e-12)

    @needs_ext
    def test_lanes_agree(self):
        vol = RNG.normal(size=(4, 6, 7))
        np.testing.assert_allclose(pure.upsample_bilinear(vol),
                                   _ck.upsample_bilinear(vol), atol=1e-12)
        g = RNG.normal(size=(4, 24, 28))
        np.testing.assert_allclose(pure.upsample_bilinear_adjoint(g),
                                   _ck.upsample_bilinear_adjoint(g), atol=1e-12)


class TestCoarseExpect:
    def test_fused_equals_composed(self):
        logits = RNG.normal(size=(7, 4, 5)) * 3
        fused = pure.coarse_expect_fwd(logits, 4)
        up = pure.upsample_bilinear(logits, 4)
        e = np.exp(up - up.max(axis=0, keepdims=True))
        p = e / e.sum(axis=0, keepdims=True)
        composed = np.tensordot(np.arange(7.0), p, axes=(0, 0))
        np.testing.assert_allclose(fused, composed, atol=1e-12)

    def test_bwd_matches_fd(self):
        logits = RNG.normal(size=(5, 2, 3))
        g = RNG.normal(size=(8, 12))
        analytic = pure.coarse_expect_bwd(logits, g, 4)
        h = 1e-6
        for idx in [(0, 0, 0), (2, 1, 1), (4, 1, 2), (3, 0, 2)]:
            lp = logits.copy()
            lp[idx] += h
            lm = logits.copy()
            lm[idx] -= h
            fd = ((pure.coarse_expect_fwd(lp, 4) - pure.coarse_expect_fwd(lm, 4)) * g).sum() / (2 * h)
            assert analytic[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_all_invalid_column_uniform(self):
        logits = np.full((6, 2, 2), -1e4)
        ibar = pure.coarse_expect_fwd(logits, 4)
        np.testing.assert_allclose(ibar, 2.5, atol=1e-9)  # uniform over 6 planes

    @needs_ext
    def test_lanes_agree(self):
        logits = RNG.normal(size=(9, 3, 4)) * 2
        np.testing.assert_allclose(pure.coarse_expect_fwd(logits),
                                   _ck.coarse_expect_fwd(logits), atol=1e-11)
        g = RNG.normal(size=(12, 16))
        np.testing.assert_allclose(pure.coarse_expect_bwd(logits, g),
                                   _ck.coarse_expect_bwd(logits, g), atol=1e-11)


class TestElementwise:
    def test_softplus_values(self):
        x = np.array([-50.0, -1.0, 0.0, 1.0, 50.0])
        sp = pure.softplus(x)
        assert sp[2] == pytest.approx(np.log(2))
        assert sp[4] == pytest.approx(50.0)
        assert np.all(sp > 0)

    def test_softplus_inverse_constant(self):
        b = float(np.log(np.expm1(5.0)))
        assert pure.softplus(np.array([b]))[0] == pytest.approx(5.0, rel=1e-12)

    def test_sigmoid_is_softplus_derivative(self):
        x = RNG.normal(size=50) * 4
        h = 1e-6
        fd = (pure.softplus(x + h) - pure.softplus(x - h)) / (2 * h)
        np.testing.assert_allclose(pure.sigmoid(x), fd, atol=1e-9)

    @needs_ext
    def test_lanes_agree(self):
        x = RNG.normal(size=200) * 10
        np.testing.assert_allclose(pure.softplus(x), _ck.softplus(x), atol=1e-14)
        np.testing.assert_allclose(pure.sigmoid(x), _ck.sigmoid(x), atol=1e-14)


class TestLaneSelection:
    def test_backend_reported(self):
        assert K.backend_name() in ("pure", "compiled")

    def test_pure_env_override(self, monkeypatch):
        import importlib
        import subprocess
        import sys

        out = subprocess.run(
            [sys.executable, "-c",
             "import depthsweep; print(depthsweep.backend_name())"],
            env={"DEPTHSWEEP_PURE": "1", "PATH": "/usr/bin:/bin"},
            capture_output=True, text=True,
        )
        assert out.stdout.strip() == "pure"
