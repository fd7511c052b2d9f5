import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfcbf.geometry import (CameraIntrinsics, Pose, Ray, RgbdImage,
                            camera_ray_directions, min_depth, pixel_ray)

from conftest import make_depth_image


def reference_pixel_direction(intr: CameraIntrinsics, pose: Pose,
                              i: int, j: int) -> np.ndarray:
    """Independent pinhole projection: explicit camera matrix and
    camera-to-world rotation, kept separate from the library's formulas."""
    fx = intr.width / (2.0 * math.tan(intr.hfov / 2.0))
    cx, cy = intr.width / 2.0, intr.height / 2.0
    # camera frame: x right, y down, z forward
    d_cam = np.array([(j + 0.5 - cx) / fx, (i + 0.5 - cy) / fx, 1.0])
    d_cam /= np.linalg.norm(d_cam)
    yaw = pose.yaw
    world_from_cam = np.array([
        [math.sin(yaw), 0.0, math.cos(yaw)],
        [-math.cos(yaw), 0.0, math.sin(yaw)],
        [0.0, -1.0, 0.0],
    ])
    return world_from_cam @ d_cam


class TestPixelRay:
    def test_center_pixel_points_along_heading(self):
        intr = CameraIntrinsics(width=33, height=33, hfov=math.pi / 2)
        ray = pixel_ray(intr, Pose(position=np.zeros(3), yaw=0.0), 16, 16)
        assert np.allclose(ray.direction, [1.0, 0.0, 0.0], atol=1e-9)

    def test_center_pixel_rotated_heading(self):
        intr = CameraIntrinsics(width=33, height=33, hfov=math.pi / 2)
        ray = pixel_ray(intr, Pose(position=np.zeros(3), yaw=math.pi / 2), 16, 16)
        assert np.allclose(ray.direction, [0.0, 1.0, 0.0], atol=1e-9)

    @pytest.mark.parametrize("i,j", [(0, 0), (0, 63), (63, 0), (63, 63),
                                     (31, 17), (5, 40)])
    def test_matches_reference_projection(self, i, j):
        intr = CameraIntrinsics(width=64, height=64, hfov=math.pi / 2)
        pose = Pose(position=np.array([0.3, -1.2, 0.5]), yaw=0.7)
        ray = pixel_ray(intr, pose, i, j)
        assert np.allclose(ray.direction,
                           reference_pixel_direction(intr, pose, i, j),
                           atol=1e-9)

    def test_out_of_bounds_pixel_raises(self):
        intr = CameraIntrinsics(width=8, height=4)
        pose = Pose(position=np.zeros(3))
        with pytest.raises(IndexError):
            pixel_ray(intr, pose, 4, 0)
        with pytest.raises(IndexError):
            pixel_ray(intr, pose, 0, -1)

    def test_matches_vectorized_directions(self):
        intr = CameraIntrinsics(width=16, height=12, hfov=1.1)
        pose = Pose(position=np.array([1.0, 2.0, 0.5]), yaw=-0.4)
        dirs = camera_ray_directions(intr, pose)
        for i, j in [(0, 0), (11, 15), (6, 7)]:
            assert np.allclose(pixel_ray(intr, pose, i, j).direction,
                               dirs[i, j], atol=1e-12)

    @given(width=st.integers(4, 96), height=st.integers(4, 96),
           hfov=st.floats(0.3, 2.6), yaw=st.floats(-6.0, 6.0))
    @settings(max_examples=40, deadline=None)
    def test_directions_unit_norm(self, width, height, hfov, yaw):
        intr = CameraIntrinsics(width=width, height=height, hfov=hfov)
        dirs = camera_ray_directions(intr, Pose(position=np.zeros(3), yaw=yaw))
        assert np.allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)

    @given(width=st.integers(8, 128), hfov=st.floats(0.4, 2.4))
    @settings(max_examples=30, deadline=None)
    def test_adjacent_ray_angular_spacing(self, width, hfov):
        # Under the pinhole model the per-pixel angle is largest at the
        # image center: atan spacing is bounded by 1/f = 2 tan(hfov/2)/w.
        intr = CameraIntrinsics(width=width, height=5, hfov=hfov)
        dirs = camera_ray_directions(intr, Pose(position=np.zeros(3)))
        row = dirs[2]
        cosang = np.clip(np.sum(row[:-1] * row[1:], axis=-1), -1.0, 1.0)
        spacing = np.arccos(cosang)
        bound = 2.0 * math.tan(hfov / 2.0) / width + 1e-6
        assert spacing.max() <= bound


class TestMinDepth:
    def test_uniform_image(self):
        img = make_depth_image(np.full((8, 8), 2.5))
        assert min_depth(img, 0.0) == 2.5

    def test_single_low_pixel(self):
        depth = np.full((8, 8), 3.0)
        depth[5, 2] = 1.0
        assert min_depth(make_depth_image(depth), 0.0) == 1.0

    def test_quantile_against_sort_oracle(self):
        rng = np.random.default_rng(7)
        values = np.sort(rng.uniform(0.5, 9.5, 100))
        rng.shuffle(values)
        img = make_depth_image(values.reshape(10, 10))
        p = 0.05

        def quantile_oracle(xs, q):
            xs = sorted(xs)
            pos = q * (len(xs) - 1)
            lo = int(math.floor(pos))
            hi = int(math.ceil(pos))
            return xs[lo] + (pos - lo) * (xs[hi] - xs[lo])

        assert min_depth(img, p) == pytest.approx(
            quantile_oracle(values.tolist(), p), abs=1e-12)

    @given(p=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_quantile_monotone_and_permutation_invariant(self, p, seed):
        rng = np.random.default_rng(seed)
        depth = rng.uniform(0.1, 9.0, size=(6, 7))
        img = make_depth_image(depth)
        assert min_depth(img, 0.0) <= min_depth(img, p) + 1e-12
        shuffled = depth.ravel().copy()
        rng.shuffle(shuffled)
        img2 = make_depth_image(shuffled.reshape(depth.shape))
        assert min_depth(img2, p) == pytest.approx(min_depth(img, p), abs=1e-12)

    def test_percentile_out_of_range(self):
        img = make_depth_image(np.ones((2, 2)))
        with pytest.raises(ValueError):
            min_depth(img, 1.5)


class TestTypes:
    @given(yaw=st.floats(-50.0, 50.0))
    @settings(max_examples=80, deadline=None)
    def test_yaw_normalized(self, yaw):
        pose = Pose(position=np.zeros(3), yaw=yaw)
        assert -math.pi < pose.yaw <= math.pi
        # same heading direction
        assert math.isclose(math.cos(pose.yaw), math.cos(yaw), abs_tol=1e-9)
        assert math.isclose(math.sin(pose.yaw), math.sin(yaw), abs_tol=1e-9)

    def test_pose_rejects_bad_position(self):
        with pytest.raises(ValueError):
            Pose(position=np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            Pose(position=np.array([np.nan, 0.0, 0.0]))

    def test_ray_requires_unit_direction(self):
        with pytest.raises(ValueError):
            Ray(origin=np.zeros(3), direction=np.array([1.0, 1.0, 0.0]))
        Ray(origin=np.zeros(3), direction=np.array([0.0, 0.0, 1.0]))

    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(width=0, height=4)
        with pytest.raises(ValueError):
            CameraIntrinsics(hfov=math.pi)
        with pytest.raises(ValueError):
            CameraIntrinsics(max_range=0.0)

    def test_rgbd_image_validation(self):
        with pytest.raises(ValueError):
            RgbdImage(width=4, height=4, rgb=np.zeros((4, 4, 3)),
                      depth=np.zeros((4, 4)))  # zero depth not allowed
        with pytest.raises(ValueError):
            RgbdImage(width=4, height=4, rgb=np.full((4, 4, 3), 1.5),
                      depth=np.ones((4, 4)))
        with pytest.raises(ValueError):
            RgbdImage(width=4, height=4, rgb=np.zeros((3, 4, 3)),
                      depth=np.ones((4, 4)))
