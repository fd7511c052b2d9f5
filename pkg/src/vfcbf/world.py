"""Ground-truth world: analytic signed-distance scenes, exact RGBd rendering
by sphere tracing, integrator dynamics, and collision checks.

This module is the "real" environment. The safety filter never consults it
directly; it only ever sees observations rendered from it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _kernels
from .geometry import CameraIntrinsics, Pose, RgbdImage, camera_ray_directions

DynamicsMode = Literal["single_integrator", "double_integrator"]

_GRAY = (0.12, 0.12, 0.14)


def _vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a finite 3-vector")
    return a


def _color(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape != (3,) or np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError("color must be an RGB triple in [0, 1]")
    return a


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned solid box; ``size`` holds full extents."""

    center: np.ndarray
    size: np.ndarray
    color: np.ndarray = (0.75, 0.35, 0.25)

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        size = _vec3(self.size, "size")
        if np.any(size <= 0.0):
            raise ValueError("box size must be positive")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "color", _color(self.color))


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float
    color: np.ndarray = (0.3, 0.5, 0.75)

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        if not self.radius > 0.0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "color", _color(self.color))


@dataclass(frozen=True, eq=False)
class RoomShell:
    """Inverted box: free space inside, solid everywhere outside."""

    center: np.ndarray
    size: np.ndarray
    color: np.ndarray = (0.8, 0.8, 0.75)

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        size = _vec3(self.size, "size")
        if np.any(size <= 0.0):
            raise ValueError("room size must be positive")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "color", _color(self.color))


Primitive = Box | Sphere | RoomShell


@dataclass(frozen=True, eq=False)
class SdfScene:
    """Union (min) of primitives; 1-Lipschitz by construction."""

    primitives: tuple[Primitive, ...]
    background: np.ndarray = _GRAY

    def __post_init__(self):
        prims = tuple(self.primitives)
        if not prims:
            raise ValueError("scene needs at least one primitive")
        object.__setattr__(self, "primitives", prims)
        object.__setattr__(self, "background", _color(self.background))
        types = np.empty(len(prims), dtype=np.int64)
        centers = np.empty((len(prims), 3))
        params = np.zeros((len(prims), 3))
        colors = np.empty((len(prims), 3))
        for k, p in enumerate(prims):
            centers[k] = p.center
            colors[k] = p.color
            if isinstance(p, Sphere):
                types[k] = _kernels.PRIM_SPHERE
                params[k, 0] = p.radius
            elif isinstance(p, Box):
                types[k] = _kernels.PRIM_BOX
                params[k] = p.size / 2.0
            elif isinstance(p, RoomShell):
                types[k] = _kernels.PRIM_ROOM
                params[k] = p.size / 2.0
            else:
                raise TypeError(f"unknown primitive {type(p).__name__}")
        object.__setattr__(self, "_types", types)
        object.__setattr__(self, "_centers", centers)
        object.__setattr__(self, "_params", params)
        object.__setattr__(self, "_colors", colors)

    def packed(self):
        return self._types, self._centers, self._params, self._colors

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds of the scene's occupied/enclosed region."""
        los, his = [], []
        for p in self.primitives:
            if isinstance(p, Sphere):
                los.append(p.center - p.radius)
                his.append(p.center + p.radius)
            else:
                los.append(p.center - p.size / 2.0)
                his.append(p.center + p.size / 2.0)
        return np.min(los, axis=0), np.max(his, axis=0)


def sdf_eval(scene: SdfScene, point) -> float:
    """Signed distance to the scene: negative inside solid matter."""
    p = _vec3(point, "point")
    types, centers, params, _ = scene.packed()
    return float(_kernels.scene_sdf_point(p[0], p[1], p[2],
                                          types, centers, params))


def sdf_eval_batch(scene: SdfScene, points: np.ndarray) -> np.ndarray:
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    types, centers, params, _ = scene.packed()
    out = np.empty(pts.shape[0])
    _kernels.scene_sdf_batch(pts, types, centers, params, out)
    return out


def render_ground_truth(scene: SdfScene, intrinsics: CameraIntrinsics,
                        pose: Pose, depth_noise_std: float = 0.0,
                        rng: np.random.Generator | None = None) -> RgbdImage:
    """Exact observation of the scene: sphere-traced first-hit depth
    (clamped to max_range) and flat primitive colors."""
    dirs = camera_ray_directions(intrinsics, pose)
    flat = np.ascontiguousarray(dirs.reshape(-1, 3))
    n = flat.shape[0]
    depth = np.empty(n)
    rgb = np.empty((n, 3))
    types, centers, params, colors = scene.packed()
    _kernels.sphere_trace(pose.position, flat, types, centers, params,
                          colors, scene.background, intrinsics.max_range,
                          depth, rgb)
    depth = depth.reshape(intrinsics.height, intrinsics.width)
    rgb = rgb.reshape(intrinsics.height, intrinsics.width, 3)
    if depth_noise_std > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        depth = depth + rng.normal(0.0, depth_noise_std, depth.shape)
        depth = np.clip(depth, 1e-6, intrinsics.max_range)
    return RgbdImage(width=intrinsics.width, height=intrinsics.height,
                     rgb=rgb, depth=depth)


@dataclass(frozen=True, eq=False)
class RobotState:
    """Robot state: camera pose plus world-frame velocity (double
    integrator only; identically zero for the single integrator)."""

    pose: Pose
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dynamics_mode: DynamicsMode = "single_integrator"

    def __post_init__(self):
        v = _vec3(self.velocity, "velocity")
        if self.dynamics_mode not in ("single_integrator", "double_integrator"):
            raise ValueError(f"unknown dynamics mode {self.dynamics_mode!r}")
        if self.dynamics_mode == "single_integrator" and np.any(v != 0.0):
            raise ValueError("single-integrator state carries zero velocity")
        object.__setattr__(self, "velocity", v)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))


@dataclass(frozen=True, eq=False)
class ControlInput:
    """Planar body-frame command (+x forward, +y left) plus yaw rate.

    Units are m/s for the single integrator, m/s^2 for the double
    integrator; yaw rate is rad/s in both.
    """

    u: np.ndarray = field(default_factory=lambda: np.zeros(2))
    yaw_rate: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64).reshape(-1)
        if u.shape != (2,) or not np.all(np.isfinite(u)):
            raise ValueError("u must be a finite 2-vector")
        if not math.isfinite(self.yaw_rate):
            raise ValueError("yaw_rate must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "yaw_rate", float(self.yaw_rate))

    def as_vector(self) -> np.ndarray:
        return np.array([self.u[0], self.u[1], self.yaw_rate])


ZERO_CONTROL = ControlInput()


@dataclass(frozen=True)
class ActuatorLimits:
    """Actuator bounds: planar command magnitude and yaw rate."""

    u_max: float = 2.0
    yaw_rate_max: float = 1.5

    def __post_init__(self):
        if self.u_max <= 0.0 or self.yaw_rate_max <= 0.0:
            raise ValueError("actuator bounds must be positive")

    def clip(self, cmd: ControlInput) -> ControlInput:
        norm = float(np.linalg.norm(cmd.u))
        u = cmd.u if norm <= self.u_max else cmd.u * (self.u_max / norm)
        yr = min(max(cmd.yaw_rate, -self.yaw_rate_max), self.yaw_rate_max)
        if norm <= self.u_max and yr == cmd.yaw_rate:
            return cmd
        return ControlInput(u=u, yaw_rate=yr)


def step_dynamics(state: RobotState, cmd: ControlInput, dt: float) -> RobotState:
    """One integrator step. Single: position += R(yaw) u dt. Double:
    v += R(yaw) u dt then position += v dt (semi-implicit Euler). Yaw rate
    integrates directly in both modes."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    c, s = math.cos(state.pose.yaw), math.sin(state.pose.yaw)
    world_u = np.array([c * cmd.u[0] - s * cmd.u[1],
                        s * cmd.u[0] + c * cmd.u[1],
                        0.0])
    yaw = state.pose.yaw + cmd.yaw_rate * dt
    if state.dynamics_mode == "single_integrator":
        pos = state.pose.position + world_u * dt
        return RobotState(pose=Pose(position=pos, yaw=yaw),
                          dynamics_mode=state.dynamics_mode)
    v = state.velocity + world_u * dt
    pos = state.pose.position + v * dt
    return RobotState(pose=Pose(position=pos, yaw=yaw), velocity=v,
                      dynamics_mode=state.dynamics_mode)


def check_collision(scene: SdfScene, state: RobotState,
                    robot_radius: float = 0.05) -> bool:
    """True iff the scene surface is closer than the robot radius."""
    return sdf_eval(scene, state.pose.position) < robot_radius


def scene_from_dict(spec: dict) -> SdfScene:
    """Build a scene from config data (see configs/ for the schema)."""
    prims: list[Primitive] = []
    for entry in spec.get("primitives", []):
        kind = entry.get("kind")
        color = entry.get("color")
        kwargs = {} if color is None else {"color": color}
        if kind == "room":
            prims.append(RoomShell(center=entry["center"], size=entry["size"],
                                   **kwargs))
        elif kind == "box":
            prims.append(Box(center=entry["center"], size=entry["size"],
                             **kwargs))
        elif kind == "sphere":
            prims.append(Sphere(center=entry["center"],
                                radius=float(entry["radius"]), **kwargs))
        else:
            raise ValueError(f"unknown primitive kind {kind!r}")
    kwargs = {}
    if "background" in spec:
        kwargs["background"] = spec["background"]
    return SdfScene(primitives=tuple(prims), **kwargs)


def scene_to_dict(scene: SdfScene) -> dict:
    prims = []
    for p in scene.primitives:
        if isinstance(p, Sphere):
            prims.append({"kind": "sphere", "center": p.center.tolist(),
                          "radius": p.radius, "color": p.color.tolist()})
        elif isinstance(p, RoomShell):
            prims.append({"kind": "room", "center": p.center.tolist(),
                          "size": p.size.tolist(), "color": p.color.tolist()})
        else:
            prims.append({"kind": "box", "center": p.center.tolist(),
                          "size": p.size.tolist(), "color": p.color.tolist()})
    return {"primitives": prims, "background": scene.background.tolist()}
