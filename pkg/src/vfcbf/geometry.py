"""Shared geometric and image types: poses, pinhole cameras, rays, RGBd images.

All types are immutable values and all operations are pure functions, so
everything here is safe to use from any number of concurrent workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU = 2.0 * math.pi


def normalize_yaw(yaw: float) -> float:
    """Wrap a heading angle to (-pi, pi]."""
    y = math.remainder(yaw, TAU)
    if y <= -math.pi:
        y += TAU
    return y


@dataclass(frozen=True, eq=False)
class Pose:
    """World-frame camera pose: position in meters, heading about +z.

    The camera optical axis points along the heading. Image columns run
    toward the heading's right (world -y when yaw = 0), image rows run
    toward -z.
    """

    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(-1)
        if pos.shape != (3,):
            raise ValueError(f"position must be a 3-vector, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)) or not math.isfinite(self.yaw):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    @property
    def forward(self) -> np.ndarray:
        """Unit vector along the heading."""
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera with square pixels.

    ``hfov`` is the full horizontal field of view in radians; the vertical
    field of view follows from the aspect ratio. ``max_range`` is the depth
    reported for rays that hit nothing.
    """

    width: int = 64
    height: int = 64
    hfov: float = math.pi / 2
    max_range: float = 10.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if not 0.0 < self.hfov < math.pi:
            raise ValueError("hfov must lie in (0, pi)")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")

    @property
    def focal(self) -> float:
        """Focal length in pixels."""
        return self.width / (2.0 * math.tan(self.hfov / 2.0))


@dataclass(frozen=True, eq=False)
class Ray:
    """World-space ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(-1)
        d = np.asarray(self.direction, dtype=np.float64).reshape(-1)
        if o.shape != (3,) or d.shape != (3,):
            raise ValueError("origin and direction must be 3-vectors")
        if abs(float(np.linalg.norm(d)) - 1.0) > 1e-9:
            raise ValueError("direction must be unit-norm within 1e-9")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True, eq=False)
class RgbdImage:
    """Per-pixel color in [0,1] and positive depth in meters."""

    width: int
    height: int
    rgb: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float64)
        depth = np.asarray(self.depth, dtype=np.float64)
        if rgb.shape != (self.height, self.width, 3):
            raise ValueError(f"rgb shape {rgb.shape} does not match "
                             f"{self.height}x{self.width}")
        if depth.shape != (self.height, self.width):
            raise ValueError(f"depth shape {depth.shape} does not match "
                             f"{self.height}x{self.width}")
        if not np.all(np.isfinite(depth)) or np.any(depth <= 0.0):
            raise ValueError("depth values must be finite and positive")
        if np.any(rgb < 0.0) or np.any(rgb > 1.0):
            raise ValueError("rgb channels must lie in [0, 1]")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "depth", depth)


def camera_ray_directions(intrinsics: CameraIntrinsics, pose: Pose) -> np.ndarray:
    """World-space unit direction through every pixel center, shape (H, W, 3)."""
    f = intrinsics.focal
    a = (np.arange(intrinsics.width, dtype=np.float64)
         + 0.5 - intrinsics.width / 2.0) / f
    b = (np.arange(intrinsics.height, dtype=np.float64)
         + 0.5 - intrinsics.height / 2.0) / f
    aa, bb = np.meshgrid(a, b)
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    dirs = np.empty((intrinsics.height, intrinsics.width, 3))
    dirs[..., 0] = c + aa * s
    dirs[..., 1] = s - aa * c
    dirs[..., 2] = -bb
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs


def pixel_ray(intrinsics: CameraIntrinsics, pose: Pose, i: int, j: int) -> Ray:
    """World-space ray through the center of pixel (row i, column j)."""
    if not (0 <= i < intrinsics.height):
        raise IndexError(f"pixel row {i} outside [0, {intrinsics.height})")
    if not (0 <= j < intrinsics.width):
        raise IndexError(f"pixel column {j} outside [0, {intrinsics.width})")
    f = intrinsics.focal
    a = (j + 0.5 - intrinsics.width / 2.0) / f
    b = (i + 0.5 - intrinsics.height / 2.0) / f
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    d = np.array([c + a * s, s - a * c, -b])
    d /= np.linalg.norm(d)
    return Ray(origin=pose.position.copy(), direction=d)


def min_depth(image: RgbdImage, percentile: float = 0.0) -> float:
    """Smallest depth over all pixels; ``percentile`` > 0 returns that
    quantile of the depth values instead (robustness against isolated
    spurious minima in rendered depth)."""
    if image.depth.size == 0:
        raise ValueError("image is empty")
    if not 0.0 <= percentile <= 1.0:
        raise ValueError("percentile must lie in [0, 1]")
    if percentile == 0.0:
        return float(image.depth.min())
    return float(np.quantile(image.depth, percentile))
