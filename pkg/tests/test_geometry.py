import numpy as np
import pytest

from depthsweep.geometry import (
    DepthPlanes,
    StereoRig,
    candidate_disparity,
    depth_error_from_disparity_error,
    depth_to_disparity,
    disparity_to_depth,
    make_rig,
    sample_depth_planes,
)

SCENEFLOW = StereoRig(baseline_m=0.27, focal_px=1050.0, width_px=960, height_px=540)
DRIVING = StereoRig(baseline_m=0.54, focal_px=1003.0, width_px=880, height_px=400)


class TestRig:
    def test_fb_constant(self):
        assert SCENEFLOW.fb == pytest.approx(283.5)

    def test_invalid_baseline(self):
        with pytest.raises(ValueError):
            StereoRig(baseline_m=0.0, focal_px=1050, width_px=10, height_px=10)

    def test_invalid_focal(self):
        with pytest.raises(ValueError):
            StereoRig(baseline_m=0.1, focal_px=-5, width_px=10, height_px=10)

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            StereoRig(baseline_m=0.1, focal_px=5, width_px=0, height_px=10)

    def test_presets(self):
        rig = make_rig("sceneflow", 256, 128)
        assert rig.baseline_m == 0.27 and rig.focal_px == 1050.0
        rig = make_rig("drivingstereo", 256, 128)
        assert rig.baseline_m == 0.54 and rig.focal_px == 1003.0
        with pytest.raises(ValueError):
            make_rig("kitti", 256, 128)


class TestConversions:
    def test_depth_to_disparity_example(self):
        assert depth_to_disparity(SCENEFLOW, 8.0) == pytest.approx(35.4375, abs=1e-12)

    def test_unit_disparity(self):
        assert depth_to_disparity(SCENEFLOW, 283.5) == pytest.approx(1.0, abs=1e-12)

    def test_disparity_to_depth_example(self):
        assert disparity_to_depth(SCENEFLOW, 5.67) == pytest.approx(50.0, rel=1e-12)

    def test_driving_unit_depth(self):
        assert disparity_to_depth(DRIVING, 541.62) == pytest.approx(1.0, rel=1e-12)

    def test_roundtrip_identity(self):
        depths = np.linspace(0.5, 500.0, 1000)
        back = disparity_to_depth(SCENEFLOW, depth_to_disparity(SCENEFLOW, depths))
        assert np.max(np.abs(back - depths) / depths) < 1e-12

    def test_monotone_decreasing(self):
        d = np.linspace(1, 100, 50)
        dis = depth_to_disparity(SCENEFLOW, d)
        assert np.all(np.diff(dis) < 0)

    def test_disparity_to_infinity_limit(self):
        dis = np.logspace(0, 6, 30)
        depth = disparity_to_depth(SCENEFLOW, dis)
        assert np.all(np.diff(depth) < 0)
        assert depth[-1] < 1e-3

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            depth_to_disparity(SCENEFLOW, 0.0)
        with pytest.raises(ValueError):
            disparity_to_depth(SCENEFLOW, -1.0)


class TestCandidateDisparity:
    def test_example(self):
        dis = candidate_disparity(SCENEFLOW, 28.35)
        assert dis == pytest.approx(10.0, abs=1e-12)
        # left pixel 300 matches right column 290
        assert 300 - dis == pytest.approx(290.0)

    def test_far_limit(self):
        assert candidate_disparity(SCENEFLOW, 1e12) < 1e-9


class TestDepthPlanes:
    def test_unit_step_preset(self):
        planes = sample_depth_planes(1.0, 81.0, 80)
        assert planes.count == 80
        np.testing.assert_allclose(planes.planes, np.arange(1.0, 81.0), rtol=0, atol=0)

    def test_two_planes(self):
        planes = sample_depth_planes(2.0, 4.0, 2)
        np.testing.assert_allclose(planes.planes, [2.0, 3.0])

    def test_half_step(self):
        planes = sample_depth_planes(1.0, 81.0, 160)
        assert planes.step == pytest.approx(0.5)
        assert planes.planes[1] == pytest.approx(1.5)

    def test_excludes_dmax(self):
        planes = sample_depth_planes(1.0, 81.0, 80)
        assert planes.planes[-1] == pytest.approx(80.0)
        assert planes.planes[0] == 1.0

    def test_uniform_spacing(self):
        planes = sample_depth_planes(0.7, 93.3, 77)
        steps = np.diff(planes.planes)
        assert np.max(np.abs(steps - planes.step)) / planes.step < 1e-12

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            sample_depth_planes(-1.0, 10.0, 5)
        with pytest.raises(ValueError):
            sample_depth_planes(5.0, 2.0, 5)
        with pytest.raises(ValueError):
            sample_depth_planes(1.0, 10.0, 1)


class TestErrorPropagation:
    def test_example_far(self):
        err = depth_error_from_disparity_error(SCENEFLOW, 50.0, 0.5)
        assert err == pytest.approx(4.8355899419729, rel=1e-9)

    def test_example_near(self):
        err = depth_error_from_disparity_error(SCENEFLOW, 10.0, 0.5)
        assert err == pytest.approx(10.0 * 0.5 / 27.85, rel=1e-9)

    def test_zero_error(self):
        assert depth_error_from_disparity_error(SCENEFLOW, 33.0, 0.0) == 0.0

    def test_two_forms_agree(self):
        # |fB/dis_gt - fB/dis_pred| vs depth_gt * dis_err / dis_pred
        for depth in (5.0, 10.0, 20.0, 40.0, 80.0):
            for e in (0.1, 0.25, 0.5, 1.0):
                direct = depth_error_from_disparity_error(SCENEFLOW, depth, e)
                dis_gt = SCENEFLOW.fb / depth
                alt = depth * e / (dis_gt - e)
                assert direct == pytest.approx(alt, rel=1e-9)

    def test_quadratic_growth_slope(self):
        depths = np.array([5.0, 10.0, 20.0, 40.0, 80.0])
        for e in (0.25, 0.5):
            errs = [depth_error_from_disparity_error(SCENEFLOW, d, e) for d in depths]
            slope = np.polyfit(np.log(depths), np.log(errs), 1)[0]
            assert abs(slope - 2.0) <= 0.05

    def test_beyond_range_rejected(self):
        # gt disparity at 80 m is ~3.54 px; an error of 4 px leaves nothing
        with pytest.raises(ValueError):
            depth_error_from_disparity_error(SCENEFLOW, 80.0, 4.0)

    def test_negative_error_side(self):
        err = depth_error_from_disparity_error(SCENEFLOW, 50.0, -0.5)
        assert err > 0
