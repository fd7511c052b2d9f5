"""Online-fused density/color voxel grid with volume rendering.

This grid is the robot's learned scene belief: each observation carves
free space along its rays and deposits near-opaque density in a thin band
behind every observed surface. Rendering integrates standard transmittance
weights along pixel rays; residual weight reads as max_range by default
(unseen space is optimistically far), or as t_near when configured
pessimistic.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import CameraIntrinsics, Pose, RgbdImage, camera_ray_directions

_SNAPSHOT_MAGIC = b"VXGRID01"

_render_poses_count = 0


def render_call_count() -> int:
    """Number of poses rendered from a grid since the last reset."""
    return _render_poses_count


def reset_render_call_count() -> None:
    global _render_poses_count
    _render_poses_count = 0


@dataclass(frozen=True)
class RenderParams:
    """Discretization of the rendering integral: sample counts sit at the
    midpoints of equal strata of [t_near, t_far]."""

    samples_per_ray: int = 192
    t_near: float = 0.02
    t_far: float = 10.0
    unseen_is_unsafe: bool = False

    def __post_init__(self):
        if self.samples_per_ray < 2:
            raise ValueError("samples_per_ray must be >= 2")
        if not 0.0 < self.t_near < self.t_far:
            raise ValueError("need 0 < t_near < t_far")

    @property
    def sample_spacing(self) -> float:
        return (self.t_far - self.t_near) / self.samples_per_ray

    @property
    def background_depth_policy(self) -> str:
        return "t_near" if self.unseen_is_unsafe else "max_range"


@dataclass(eq=False)
class DensityGrid:
    """Per-voxel density (1/m) and color on a regular lattice of voxel
    centers. Values are trilinearly interpolated; points outside the
    bounds read zero density. Mutated in place by fusion (single writer,
    any number of concurrent readers between updates)."""

    bounds_min: np.ndarray
    bounds_max: np.ndarray
    sigma: np.ndarray
    color: np.ndarray
    sigma_max: float = 50.0

    def __post_init__(self):
        bmin = np.asarray(self.bounds_min, dtype=np.float64).reshape(3)
        bmax = np.asarray(self.bounds_max, dtype=np.float64).reshape(3)
        if np.any(bmax <= bmin):
            raise ValueError("bounds must be non-degenerate")
        sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        if sigma.ndim != 3 or min(sigma.shape) < 2:
            raise ValueError("resolution must be >= 2 per axis")
        color = np.ascontiguousarray(self.color, dtype=np.float64)
        if color.shape != sigma.shape + (3,):
            raise ValueError("color shape must match sigma plus channel axis")
        if self.sigma_max <= 0.0:
            raise ValueError("sigma_max must be positive")
        if float(sigma.min()) < 0.0 or float(sigma.max()) > self.sigma_max:
            raise ValueError("sigma must lie in [0, sigma_max]")
        self.bounds_min = bmin
        self.bounds_max = bmax
        self.sigma = sigma
        self.color = color

    @classmethod
    def empty(cls, bounds_min, bounds_max, resolution,
              sigma_max: float = 50.0) -> "DensityGrid":
        nx, ny, nz = (int(r) for r in resolution)
        return cls(bounds_min=bounds_min, bounds_max=bounds_max,
                   sigma=np.zeros((nx, ny, nz)),
                   color=np.zeros((nx, ny, nz, 3)),
                   sigma_max=sigma_max)

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.sigma.shape

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.bounds_max - self.bounds_min) / np.array(self.resolution)

    @property
    def voxel_diagonal(self) -> float:
        return float(np.linalg.norm(self.voxel_size))

    def copy(self) -> "DensityGrid":
        return DensityGrid(bounds_min=self.bounds_min.copy(),
                           bounds_max=self.bounds_max.copy(),
                           sigma=self.sigma.copy(), color=self.color.copy(),
                           sigma_max=self.sigma_max)

    def voxel_center(self, ix: int, iy: int, iz: int) -> np.ndarray:
        return self.bounds_min + (np.array([ix, iy, iz]) + 0.5) * self.voxel_size

    def _inv_voxel(self) -> np.ndarray:
        return 1.0 / self.voxel_size


def query_density(grid: DensityGrid, point) -> float:
    """Trilinear density at a point; zero outside the grid bounds."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    return float(_kernels.trilinear_sigma(grid.sigma, grid.bounds_min,
                                          grid.bounds_max, grid._inv_voxel(),
                                          p[0], p[1], p[2]))


def query_density_batch(grid: DensityGrid, points: np.ndarray) -> np.ndarray:
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    out = np.empty(pts.shape[0])
    _kernels.trilinear_sigma_batch(grid.sigma, grid.bounds_min,
                                   grid.bounds_max, grid._inv_voxel(),
                                   pts, out)
    return out


def _render_flat(grid: DensityGrid, intrinsics: CameraIntrinsics,
                 poses: list[Pose], params: RenderParams):
    global _render_poses_count
    n_rays = intrinsics.width * intrinsics.height
    m = len(poses) * n_rays
    origins = np.empty((m, 3))
    dirs = np.empty((m, 3))
    for k, pose in enumerate(poses):
        sl = slice(k * n_rays, (k + 1) * n_rays)
        origins[sl] = pose.position
        dirs[sl] = camera_ray_directions(intrinsics, pose).reshape(-1, 3)
    depth = np.empty(m)
    rgb = np.empty((m, 3))
    wsum = np.empty(m)
    bg = np.array([0.0, 0.0, 0.0])
    _kernels.volume_render_rays(grid.sigma, grid.color, grid.bounds_min,
                                grid.bounds_max, grid._inv_voxel(),
                                origins, dirs, params.t_near, params.t_far,
                                params.samples_per_ray, intrinsics.max_range,
                                bg, params.unseen_is_unsafe, depth, rgb, wsum)
    _render_poses_count += len(poses)
    return depth, rgb, wsum


def volume_render(grid: DensityGrid, intrinsics: CameraIntrinsics,
                  pose: Pose, params: RenderParams) -> RgbdImage:
    """Predicted observation at an arbitrary pose."""
    depth, rgb, _ = _render_flat(grid, intrinsics, [pose], params)
    return RgbdImage(width=intrinsics.width, height=intrinsics.height,
                     rgb=rgb.reshape(intrinsics.height, intrinsics.width, 3),
                     depth=depth.reshape(intrinsics.height, intrinsics.width))


def volume_render_batch(grid: DensityGrid, intrinsics: CameraIntrinsics,
                        poses: list[Pose],
                        params: RenderParams) -> list[RgbdImage]:
    """Element-wise identical to volume_render; one parallel pass over all
    poses and rays."""
    if not poses:
        return []
    depth, rgb, _ = _render_flat(grid, intrinsics, list(poses), params)
    n = intrinsics.width * intrinsics.height
    out = []
    for k in range(len(poses)):
        sl = slice(k * n, (k + 1) * n)
        out.append(RgbdImage(
            width=intrinsics.width, height=intrinsics.height,
            rgb=rgb[sl].reshape(intrinsics.height, intrinsics.width, 3),
            depth=depth[sl].reshape(intrinsics.height, intrinsics.width)))
    return out


def render_total_weight(grid: DensityGrid, intrinsics: CameraIntrinsics,
                        pose: Pose, params: RenderParams) -> np.ndarray:
    """Per-pixel sum of rendering weights (1 - residual transmittance)."""
    _, _, wsum = _render_flat(grid, intrinsics, [pose], params)
    return wsum.reshape(intrinsics.height, intrinsics.width)


def fuse_observation(grid: DensityGrid, intrinsics: CameraIntrinsics,
                     pose: Pose, observed: RgbdImage, rate: float,
                     carve_margin: float | None = None,
                     deposit_width: float | None = None) -> DensityGrid:
    """Fold one observation into the grid (in place; returns the grid).

    Along each pixel ray with observed depth d, voxels closer than
    d - carve_margin relax toward zero density by (1 - rate); voxels in the
    band [d, d + deposit_width] just behind the surface relax toward
    sigma_max by rate, and their color blends toward the pixel color.
    Pixels at max_range carve only. Margins default to 1.5 / 1.0 voxel
    diagonals.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError("rate must lie in (0, 1]")
    if observed.width != intrinsics.width or observed.height != intrinsics.height:
        raise ValueError(
            f"observation is {observed.height}x{observed.width}, intrinsics "
            f"expect {intrinsics.height}x{intrinsics.width}")
    if carve_margin is None:
        carve_margin = 1.5 * grid.voxel_diagonal
    if deposit_width is None:
        deposit_width = 1.0 * grid.voxel_diagonal
    nx, ny, nz = grid.resolution
    dirs = np.ascontiguousarray(
        camera_ray_directions(intrinsics, pose).reshape(-1, 3))
    depths = np.ascontiguousarray(observed.depth.reshape(-1))
    pix_rgb = np.ascontiguousarray(observed.rgb.reshape(-1, 3))
    carve_mask = np.zeros((nx, ny, nz), dtype=np.uint8)
    deposit_mask = np.zeros((nx, ny, nz), dtype=np.uint8)
    color_sum = np.zeros((nx, ny, nz, 3))
    color_cnt = np.zeros((nx, ny, nz), dtype=np.int64)
    step = 0.5 * float(grid.voxel_size.min())
    _kernels.fuse_mark(grid.bounds_min, grid.bounds_max, grid._inv_voxel(),
                       nx, ny, nz, pose.position, dirs, depths, pix_rgb,
                       intrinsics.max_range, carve_margin, deposit_width,
                       step, carve_mask, deposit_mask, color_sum, color_cnt)
    deposit = deposit_mask.astype(bool)
    carve = carve_mask.astype(bool) & ~deposit
    grid.sigma[carve] *= (1.0 - rate)
    grid.sigma[deposit] += rate * (grid.sigma_max - grid.sigma[deposit])
    np.clip(grid.sigma, 0.0, grid.sigma_max, out=grid.sigma)
    if deposit.any():
        mean_rgb = color_sum[deposit] / color_cnt[deposit][:, None]
        grid.color[deposit] += rate * (mean_rgb - grid.color[deposit])
    return grid


def save_grid(grid: DensityGrid, path) -> None:
    """Flat binary snapshot: bounds, resolution, then the density array
    (float64, x varying fastest)."""
    nx, ny, nz = grid.resolution
    with open(path, "wb") as f:
        f.write(_SNAPSHOT_MAGIC)
        f.write(struct.pack("<6d", *grid.bounds_min, *grid.bounds_max))
        f.write(struct.pack("<3q", nx, ny, nz))
        f.write(struct.pack("<d", grid.sigma_max))
        f.write(np.ascontiguousarray(grid.sigma.transpose(2, 1, 0)).tobytes())


def load_grid(path) -> DensityGrid:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a grid snapshot")
        bounds = struct.unpack("<6d", f.read(48))
        nx, ny, nz = struct.unpack("<3q", f.read(24))
        (sigma_max,) = struct.unpack("<d", f.read(8))
        raw = np.frombuffer(f.read(nx * ny * nz * 8), dtype=np.float64)
    sigma = raw.reshape(nz, ny, nx).transpose(2, 1, 0).copy()
    return DensityGrid(bounds_min=bounds[:3], bounds_max=bounds[3:],
                       sigma=sigma, color=np.zeros((nx, ny, nz, 3)),
                       sigma_max=sigma_max)


def density_slice(grid: DensityGrid, z: float) -> np.ndarray:
    """Horizontal density slice at height z, shape (ny, nx), sampled at
    voxel-center xy positions."""
    nx, ny, _ = grid.resolution
    xs = grid.bounds_min[0] + (np.arange(nx) + 0.5) * grid.voxel_size[0]
    ys = grid.bounds_min[1] + (np.arange(ny) + 0.5) * grid.voxel_size[1]
    xx, yy = np.meshgrid(xs, ys)
    pts = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)], axis=1)
    return query_density_batch(grid, pts).reshape(ny, nx)


def export_density_slice(grid: DensityGrid, z: float, path) -> None:
    """Text dump of the density slice at height z (rows = y, cols = x)."""
    values = density_slice(grid, z)
    header = (f"density slice at z={z}\n"
              f"x range [{grid.bounds_min[0]}, {grid.bounds_max[0]}] "
              f"({grid.resolution[0]} cols)\n"
              f"y range [{grid.bounds_min[1]}, {grid.bounds_max[1]}] "
              f"({grid.resolution[1]} rows)")
    np.savetxt(path, values, fmt="%.6g", header=header)
