import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfcbf import scene_grid
from vfcbf.geometry import CameraIntrinsics, Pose
from vfcbf.scene_grid import (DensityGrid, RenderParams, density_slice,
                              export_density_slice, fuse_observation,
                              load_grid, query_density, render_call_count,
                              render_total_weight, reset_render_call_count,
                              save_grid, volume_render, volume_render_batch)
from vfcbf.world import render_ground_truth

ONE_PIXEL = CameraIntrinsics(width=1, height=1, hfov=0.5, max_range=10.0)


def uniform_grid(sigma0: float, lo=-10.0, hi=10.0, n=8,
                 sigma_max=50.0) -> DensityGrid:
    g = DensityGrid.empty((lo,) * 3, (hi,) * 3, (n, n, n), sigma_max=sigma_max)
    g.sigma[:] = sigma0
    return g


def random_grid(rng: np.random.Generator, n=6, sigma_max=50.0) -> DensityGrid:
    lo = rng.uniform(-4, -1, 3)
    hi = rng.uniform(1, 4, 3)
    g = DensityGrid.empty(lo, hi, (n, n, n), sigma_max=sigma_max)
    g.sigma[:] = rng.uniform(0.0, sigma_max, g.sigma.shape)
    g.color[:] = rng.uniform(0.0, 1.0, g.color.shape)
    return g


class TestQueryDensity:
    def test_zero_grid(self, empty_grid):
        assert query_density(empty_grid, (0.0, 0.0, 0.0)) == 0.0

    def test_exact_at_voxel_center(self, empty_grid):
        empty_grid.sigma[10, 7, 5] = 30.0
        center = empty_grid.voxel_center(10, 7, 5)
        assert query_density(empty_grid, center) == pytest.approx(30.0,
                                                                  abs=1e-12)

    def test_midpoint_between_two_centers(self, empty_grid):
        empty_grid.sigma[10, 7, 5] = 10.0
        empty_grid.sigma[11, 7, 5] = 30.0
        a = empty_grid.voxel_center(10, 7, 5)
        b = empty_grid.voxel_center(11, 7, 5)
        assert query_density(empty_grid, (a + b) / 2) == pytest.approx(
            20.0, abs=1e-12)

    def test_outside_bounds_is_zero(self, empty_grid):
        empty_grid.sigma[:] = 25.0
        assert query_density(empty_grid, (100.0, 0.0, 0.0)) == 0.0
        assert query_density(empty_grid, empty_grid.bounds_max + 1e-6) == 0.0

    def test_piecewise_continuity(self, empty_grid):
        rng = np.random.default_rng(0)
        empty_grid.sigma[:] = rng.uniform(0, 50, empty_grid.sigma.shape)
        p = np.array([0.31, -0.77, 0.12])
        base = query_density(empty_grid, p)
        step = 1e-6
        for axis in range(3):
            q = p.copy()
            q[axis] += step
            # local Lipschitz bound: one voxel spans the full sigma range
            bound = 50.0 / empty_grid.voxel_size[axis] * step * 4
            assert abs(query_density(empty_grid, q) - base) <= bound


class TestVolumeRender:
    def test_empty_medium_reads_max_range(self, empty_grid, fast_render):
        intr = CameraIntrinsics(width=8, height=8, max_range=10.0)
        img = volume_render(empty_grid, intr,
                            Pose(position=np.array([0, 0, 0.5])), fast_render)
        assert np.all(img.depth == 10.0)

    def test_opaque_slab_depth_within_one_spacing(self):
        # slab of near-opaque density starting at x = 2.5; sigma_max * dt >> 1
        g = DensityGrid.empty((-1, -2, -2), (5, 2, 2), (192, 8, 8),
                              sigma_max=500.0)
        xs = g.bounds_min[0] + (np.arange(192) + 0.5) * g.voxel_size[0]
        g.sigma[xs >= 2.5, :, :] = 500.0
        params = RenderParams(samples_per_ray=64, t_near=0.01, t_far=5.0)
        img = volume_render(g, ONE_PIXEL, Pose(position=np.zeros(3)), params)
        assert img.depth[0, 0] == pytest.approx(2.5, abs=params.sample_spacing)

    def test_constant_density_matches_closed_form_and_quadrature(self):
        sigma0, t_far = 2.0, 2.0
        g = uniform_grid(sigma0)
        params = RenderParams(samples_per_ray=256, t_near=1e-3, t_far=t_far)
        img = volume_render(g, ONE_PIXEL, Pose(position=np.zeros(3)), params)
        a, b = params.t_near, params.t_far
        span = b - a
        # closed form: E[t] of the first interaction in an exponential
        # medium over [a, b], residual weight at max_range
        closed = (a + 1 / sigma0 - math.exp(-sigma0 * span) * (b + 1 / sigma0)
                  + math.exp(-sigma0 * span) * ONE_PIXEL.max_range)
        # independent quadrature of the same integral
        ts = np.linspace(a, b, 200_001)
        integrand = ts * sigma0 * np.exp(-sigma0 * (ts - a))
        dt = ts[1] - ts[0]
        quad = (float(np.sum((integrand[:-1] + integrand[1:]) * 0.5 * dt))
                + math.exp(-sigma0 * span) * ONE_PIXEL.max_range)
        assert closed == pytest.approx(quad, abs=1e-6)
        assert img.depth[0, 0] == pytest.approx(closed,
                                                abs=2 * params.sample_spacing)

    def test_batch_of_one_bit_equal_to_single(self, fast_render):
        g = random_grid(np.random.default_rng(1))
        intr = CameraIntrinsics(width=12, height=10)
        pose = Pose(position=np.array([0.2, 0.1, 0.0]), yaw=0.3)
        single = volume_render(g, intr, pose, fast_render)
        (batch,) = volume_render_batch(g, intr, [pose], fast_render)
        assert np.array_equal(single.depth, batch.depth)
        assert np.array_equal(single.rgb, batch.rgb)

    def test_batch_identical_poses_identical_images(self, fast_render):
        g = random_grid(np.random.default_rng(2))
        intr = CameraIntrinsics(width=8, height=8)
        pose = Pose(position=np.zeros(3), yaw=-0.2)
        images = volume_render_batch(g, intr, [pose] * 10, fast_render)
        for img in images[1:]:
            assert np.array_equal(img.depth, images[0].depth)
            assert np.array_equal(img.rgb, images[0].rgb)

    def test_batch_matches_sequential_exactly(self, fast_render):
        g = random_grid(np.random.default_rng(3))
        intr = CameraIntrinsics(width=9, height=7)
        rng = np.random.default_rng(4)
        poses = [Pose(position=rng.uniform(-1, 1, 3), yaw=rng.uniform(-3, 3))
                 for _ in range(10)]
        batch = volume_render_batch(g, intr, poses, fast_render)
        for pose, img in zip(poses, batch):
            ref = volume_render(g, intr, pose, fast_render)
            assert np.array_equal(img.depth, ref.depth)
            assert np.array_equal(img.rgb, ref.rgb)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_weight_sums_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        g = random_grid(rng)
        intr = CameraIntrinsics(width=6, height=6)
        pose = Pose(position=rng.uniform(-2, 2, 3), yaw=rng.uniform(-3, 3))
        params = RenderParams(samples_per_ray=32, t_near=0.05, t_far=8.0)
        w = render_total_weight(g, intr, pose, params)
        assert np.all(w >= 0.0) and np.all(w <= 1.0)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_depth_monotone_under_density_increase(self, seed):
        rng = np.random.default_rng(seed)
        g = random_grid(rng)
        intr = CameraIntrinsics(width=6, height=6)
        pose = Pose(position=rng.uniform(-1, 1, 3), yaw=rng.uniform(-3, 3))
        params = RenderParams(samples_per_ray=48, t_near=0.05, t_far=8.0)
        before = volume_render(g, intr, pose, params).depth
        bump = rng.uniform(0.0, 50.0 - np.max(g.sigma))
        g.sigma[:] = np.minimum(g.sigma + rng.uniform(0, bump + 1e-9,
                                                      g.sigma.shape), 50.0)
        after = volume_render(g, intr, pose, params).depth
        # slack: the early-exit cutoff leaves up to 1e-6 * max_range of
        # residual on each render
        assert np.all(after <= before + 2e-5)

    def test_unseen_is_unsafe_residual_goes_near(self, empty_grid):
        intr = CameraIntrinsics(width=4, height=4, max_range=10.0)
        params = RenderParams(samples_per_ray=32, t_near=0.3, t_far=8.0,
                              unseen_is_unsafe=True)
        img = volume_render(empty_grid, intr,
                            Pose(position=np.array([0, 0, 0.5])), params)
        assert np.all(img.depth == pytest.approx(0.3))

    def test_render_call_counter(self, empty_grid, fast_render):
        intr = CameraIntrinsics(width=4, height=4)
        reset_render_call_count()
        volume_render(empty_grid, intr, Pose(position=np.zeros(3)),
                      fast_render)
        assert render_call_count() == 1
        volume_render_batch(empty_grid, intr,
                            [Pose(position=np.zeros(3))] * 7, fast_render)
        assert render_call_count() == 8


class TestFusion:
    WALL_INTR = CameraIntrinsics(width=17, height=17, hfov=math.pi / 3,
                                 max_range=10.0)

    def _wall_view(self, room_scene):
        pose = Pose(position=np.array([0.5, 0.0, 0.5]), yaw=0.0)
        return pose, render_ground_truth(room_scene, self.WALL_INTR, pose)

    def test_full_rate_carves_and_deposits_exactly(self, room_scene,
                                                   empty_grid):
        pose, obs = self._wall_view(room_scene)
        empty_grid.sigma[:] = 20.0
        fuse_observation(empty_grid, self.WALL_INTR, pose, obs, rate=1.0,
                         carve_margin=0.3, deposit_width=0.4)
        # free space along the central ray is carved to exactly zero
        for x in (1.0, 1.5, 2.0, 2.5):
            ix, iy, iz = ((np.array([x, 0.0, 0.5]) - empty_grid.bounds_min)
                          / empty_grid.voxel_size).astype(int)
            assert empty_grid.sigma[ix, iy, iz] == 0.0
        # the voxel just behind the wall surface is exactly sigma_max
        ix, iy, iz = ((np.array([3.05, 0.0, 0.5]) - empty_grid.bounds_min)
                      / empty_grid.voxel_size).astype(int)
        assert empty_grid.sigma[ix, iy, iz] == empty_grid.sigma_max
        # voxels behind the camera are untouched
        ix, iy, iz = ((np.array([-2.0, 0.0, 0.5]) - empty_grid.bounds_min)
                      / empty_grid.voxel_size).astype(int)
        assert empty_grid.sigma[ix, iy, iz] == 20.0

    def test_two_half_rate_fusions_reach_three_quarters(self, room_scene,
                                                        empty_grid):
        pose, obs = self._wall_view(room_scene)
        for _ in range(2):
            fuse_observation(empty_grid, self.WALL_INTR, pose, obs, rate=0.5,
                             carve_margin=0.3, deposit_width=0.4)
        ix, iy, iz = ((np.array([3.05, 0.0, 0.5]) - empty_grid.bounds_min)
                      / empty_grid.voxel_size).astype(int)
        assert empty_grid.sigma[ix, iy, iz] == pytest.approx(
            0.75 * empty_grid.sigma_max, abs=1e-12)

    def test_idempotent_at_full_rate(self, room_scene, empty_grid):
        pose, obs = self._wall_view(room_scene)
        fuse_observation(empty_grid, self.WALL_INTR, pose, obs, rate=1.0)
        once_sigma = empty_grid.sigma.copy()
        once_color = empty_grid.color.copy()
        fuse_observation(empty_grid, self.WALL_INTR, pose, obs, rate=1.0)
        assert np.array_equal(empty_grid.sigma, once_sigma)
        assert np.array_equal(empty_grid.color, once_color)

    def test_single_view_render_consistency(self, room_scene, empty_grid):
        pose, obs = self._wall_view(room_scene)
        for _ in range(8):
            fuse_observation(empty_grid, self.WALL_INTR, pose, obs, rate=0.5)
        params = RenderParams(samples_per_ray=256, t_near=0.02, t_far=10.0)
        rendered = volume_render(empty_grid, self.WALL_INTR, pose, params)
        seen = obs.depth < self.WALL_INTR.max_range
        err = np.abs(rendered.depth - obs.depth)[seen]
        assert err.max() <= 2 * empty_grid.voxel_diagonal

    def test_max_range_pixels_carve_only(self, empty_grid):
        from conftest import make_depth_image

        intr = CameraIntrinsics(width=5, height=5, hfov=0.8, max_range=10.0)
        empty_grid.sigma[:] = 30.0
        obs = make_depth_image(np.full((5, 5), 10.0))
        fuse_observation(empty_grid, intr,
                         Pose(position=np.array([0, 0, 0.5])), obs, rate=1.0)
        assert empty_grid.sigma.max() <= 30.0  # nothing deposited
        ix, iy, iz = ((np.array([1.5, 0.0, 0.5]) - empty_grid.bounds_min)
                      / empty_grid.voxel_size).astype(int)
        assert empty_grid.sigma[ix, iy, iz] == 0.0

    def test_fusion_validation(self, room_scene, empty_grid):
        pose, obs = self._wall_view(room_scene)
        with pytest.raises(ValueError):
            fuse_observation(empty_grid, self.WALL_INTR, pose, obs, rate=0.0)
        bad_intr = CameraIntrinsics(width=4, height=4)
        with pytest.raises(ValueError):
            fuse_observation(empty_grid, bad_intr, pose, obs, rate=0.5)


class TestSnapshotAndSlice:
    def test_snapshot_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        g = DensityGrid.empty((-1, -2, -3), (2, 1, 0), (6, 5, 4),
                              sigma_max=40.0)
        g.sigma[:] = rng.uniform(0, 40, g.sigma.shape)
        path = tmp_path / "grid.bin"
        save_grid(g, path)
        loaded = load_grid(path)
        assert np.array_equal(loaded.sigma, g.sigma)
        assert np.array_equal(loaded.bounds_min, g.bounds_min)
        assert np.array_equal(loaded.bounds_max, g.bounds_max)
        assert loaded.sigma_max == 40.0

    def test_snapshot_sigma_layout_x_fastest(self, tmp_path):
        g = DensityGrid.empty((0, 0, 0), (4, 3, 2), (4, 3, 2), sigma_max=50.0)
        g.sigma[1, 0, 0] = 7.0  # second value in x-fastest order
        path = tmp_path / "grid.bin"
        save_grid(g, path)
        raw = np.frombuffer(path.read_bytes()[8 + 48 + 24 + 8:],
                            dtype=np.float64)
        assert raw[1] == 7.0 and raw[0] == 0.0

    def test_density_slice_values_and_export(self, tmp_path, empty_grid):
        empty_grid.sigma[:, :, :] = 0.0
        ix, iy, iz = 4, 9, 12
        empty_grid.sigma[ix, iy, iz] = 50.0
        z = empty_grid.voxel_center(ix, iy, iz)[2]
        values = density_slice(empty_grid, z)
        assert values.shape == (32, 32)
        assert values[iy, ix] == pytest.approx(50.0, abs=1e-9)
        path = tmp_path / "slice.txt"
        export_density_slice(empty_grid, z, path)
        loaded = np.loadtxt(path)
        assert np.allclose(loaded, values, atol=1e-5)


def test_grid_validation():
    with pytest.raises(ValueError):
        DensityGrid.empty((0, 0, 0), (0, 1, 1), (4, 4, 4))
    with pytest.raises(ValueError):
        DensityGrid.empty((0, 0, 0), (1, 1, 1), (1, 4, 4))
    g = DensityGrid.empty((0, 0, 0), (1, 1, 1), (4, 4, 4), sigma_max=10.0)
    with pytest.raises(ValueError):
        DensityGrid(bounds_min=g.bounds_min, bounds_max=g.bounds_max,
                    sigma=g.sigma + 20.0, color=g.color, sigma_max=10.0)


def test_render_params_validation():
    with pytest.raises(ValueError):
        RenderParams(samples_per_ray=1)
    with pytest.raises(ValueError):
        RenderParams(t_near=0.0)
    with pytest.raises(ValueError):
        RenderParams(t_near=5.0, t_far=2.0)
    assert RenderParams().background_depth_policy == "max_range"
    assert RenderParams(unseen_is_unsafe=True).background_depth_policy == "t_near"
