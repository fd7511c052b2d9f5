"""Observation-space CBF evaluators and the sampling safety filter.

The barrier value h is negative on safe observations and positive on
unsafe ones; each control step must satisfy h_next <= alpha * h_now, which
forces h toward zero no faster than geometrically. The filter accepts the
nominal action when its one-step predicted observation satisfies that
constraint; otherwise it searches Gaussian perturbations of the nominal in
rendered batches and returns the safe candidate closest to the nominal,
falling back to a configured stop action when the search comes up empty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .geometry import CameraIntrinsics, Pose, RgbdImage, min_depth
from .scene_grid import (DensityGrid, RenderParams, query_density,
                         volume_render, volume_render_batch)
from .world import (ActuatorLimits, ControlInput, RobotState, step_dynamics)

CbfKind = Literal["depth_first_order", "depth_second_order", "density"]

#: Renders predicted observations for a list of candidate poses.
Predictor = Callable[[DensityGrid, CameraIntrinsics, list[Pose], RenderParams],
                     list[RgbdImage]]


@dataclass(frozen=True)
class CbfConfig:
    """Barrier definition: clearance margin d_c, geometric rate alpha,
    velocity weight beta (second order only), and the min-depth percentile
    robustness knob (depth kinds only)."""

    kind: CbfKind = "depth_first_order"
    d_c: float = 0.1
    alpha: float = 0.5
    beta: float = 1.0
    percentile: float = 0.0

    def __post_init__(self):
        if self.kind not in ("depth_first_order", "depth_second_order",
                             "density"):
            raise ValueError(f"unknown cbf kind {self.kind!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.kind != "density" and self.d_c <= 0.0:
            raise ValueError("depth CBFs need d_c > 0")
        if self.kind == "depth_second_order" and self.beta <= 0.0:
            raise ValueError("second-order CBF needs beta > 0")
        if self.kind == "density" and self.percentile != 0.0:
            raise ValueError("percentile does not apply to the density CBF")
        if not 0.0 <= self.percentile <= 1.0:
            raise ValueError("percentile must lie in [0, 1]")


def cbf_depth(image: RgbdImage, cfg: CbfConfig) -> float:
    """First-order depth barrier: d_c minus the closest visible depth."""
    if cfg.kind != "depth_first_order":
        raise ValueError(f"cbf_depth called with kind {cfg.kind!r}")
    return cfg.d_c - min_depth(image, cfg.percentile)


def cbf_depth_velocity(image: RgbdImage, v_hat, cfg: CbfConfig) -> float:
    """Velocity-augmented depth barrier: anticipates braking distance by
    penalizing speed toward obstacles."""
    if cfg.kind != "depth_second_order":
        raise ValueError(f"cbf_depth_velocity called with kind {cfg.kind!r}")
    v = np.asarray(v_hat, dtype=np.float64)
    return (cfg.d_c - min_depth(image, cfg.percentile)
            + cfg.beta * float(np.linalg.norm(v)))


def cbf_density(grid: DensityGrid, predicted_position, cfg: CbfConfig) -> float:
    """Point-density barrier (ablation): d_c plus the interpolated density
    at the predicted position. d_c is normally negative here."""
    if cfg.kind != "density":
        raise ValueError(f"cbf_density called with kind {cfg.kind!r}")
    return cfg.d_c + query_density(grid, predicted_position)


def constraint_satisfied(h_now: float, h_next: float, alpha: float) -> bool:
    """Discrete-time barrier constraint: h_next <= alpha * h_now."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return h_next <= alpha * h_now


@dataclass(frozen=True, eq=False)
class SamplerConfig:
    """Candidate search: per-axis Gaussian perturbations of the nominal
    action, widened by 1 + batch/2 on each retry batch. A zero entry in
    sigma_u pins that axis to the nominal (scripted scenarios hold yaw)."""

    batch_size: int = 10
    max_batches: int = 10
    sigma_u: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 0.0]))
    rng_seed: int = 0
    fallback: Literal["zero_action", "max_brake"] = "zero_action"

    def __post_init__(self):
        if self.batch_size < 1 or self.max_batches < 1:
            raise ValueError("batch_size and max_batches must be >= 1")
        sig = np.asarray(self.sigma_u, dtype=np.float64).reshape(-1)
        if sig.shape == (1,):
            sig = np.array([sig[0], sig[0], sig[0]])
        if sig.shape != (3,) or np.any(sig < 0.0) or not np.any(sig > 0.0):
            raise ValueError("sigma_u must be >= 0 per axis with at least "
                             "one positive axis")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")
        if self.fallback not in ("zero_action", "max_brake"):
            raise ValueError(f"unknown fallback {self.fallback!r}")
        object.__setattr__(self, "sigma_u", sig)


def sample_candidates(u_nominal: ControlInput, cfg: SamplerConfig,
                      batch_index: int, limits: ActuatorLimits,
                      tick: int = 0) -> list[ControlInput]:
    """One batch of perturbed candidates, clipped to the actuator bounds.
    Deterministic in (rng_seed, tick, batch_index)."""
    if not 0 <= batch_index < cfg.max_batches:
        raise ValueError(f"batch_index {batch_index} outside "
                         f"[0, {cfg.max_batches})")
    rng = np.random.default_rng([cfg.rng_seed, tick, batch_index])
    scale = 1.0 + 0.5 * batch_index
    eps = rng.standard_normal((cfg.batch_size, 3)) * (cfg.sigma_u * scale)
    base = u_nominal.as_vector()
    out = []
    for row in eps:
        cand = ControlInput(u=base[:2] + row[:2], yaw_rate=base[2] + row[2])
        out.append(limits.clip(cand))
    return out


@dataclass(frozen=True, eq=False)
class FilterDecision:
    """Outcome of one filter step. ``h_next_predicted`` belongs to the
    applied action (NaN when the fallback was taken: its prediction is
    never rendered, keeping the per-tick render budget exact)."""

    u_applied: ControlInput
    u_nominal: ControlInput
    intervention: float
    h_now: float
    h_next_predicted: float
    safe: bool
    candidates_evaluated: int
    fallback_used: bool
    h_next_nominal: float
    cand_actions: np.ndarray | None = None
    cand_h_next: np.ndarray | None = None


def _intervention(u_applied: ControlInput, u_nominal: ControlInput) -> float:
    return float(np.linalg.norm(u_applied.as_vector() - u_nominal.as_vector()))


def predict_next_observation(state: RobotState, u: ControlInput,
                             grid: DensityGrid, intrinsics: CameraIntrinsics,
                             params: RenderParams, dt: float) -> RgbdImage:
    """Step the simplified dynamics, then render the grid from the
    predicted pose."""
    nxt = step_dynamics(state, u, dt)
    return volume_render(grid, intrinsics, nxt.pose, params)


class SafetyFilter:
    """Per-tick visual-foresight safety filter.

    Owns the barrier config, the candidate sampler, and the predictor used
    to render one-step-ahead observations (the grid renderer by default; a
    ground-truth renderer can be injected for oracle experiments). The grid
    is read-only during filtering, and candidate batches render in one
    parallel pass.
    """

    def __init__(self, cbf: CbfConfig, sampler: SamplerConfig,
                 intrinsics: CameraIntrinsics, render_params: RenderParams,
                 limits: ActuatorLimits, dt: float,
                 predictor: Predictor | None = None):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.cbf = cbf
        self.sampler = sampler
        self.intrinsics = intrinsics
        self.render_params = render_params
        self.limits = limits
        self.dt = dt
        self.predictor = predictor if predictor is not None else volume_render_batch
        self.tick = 0

    def _check_pairing(self, state: RobotState) -> None:
        second = self.cbf.kind == "depth_second_order"
        double = state.dynamics_mode == "double_integrator"
        if self.cbf.kind != "density" and second != double:
            raise ValueError(
                f"cbf kind {self.cbf.kind!r} is inconsistent with "
                f"{state.dynamics_mode!r} dynamics")

    def _h_of(self, image: RgbdImage, velocity: np.ndarray) -> float:
        if self.cbf.kind == "depth_first_order":
            return cbf_depth(image, self.cbf)
        return cbf_depth_velocity(image, velocity, self.cbf)

    def _h_next_batch(self, state: RobotState, candidates: list[ControlInput],
                      grid: DensityGrid) -> np.ndarray:
        """Predicted barrier value for each candidate action."""
        next_states = [step_dynamics(state, c, self.dt) for c in candidates]
        if self.cbf.kind == "density":
            return np.array([cbf_density(grid, s.pose.position, self.cbf)
                             for s in next_states])
        images = self.predictor(grid, self.intrinsics,
                                [s.pose for s in next_states],
                                self.render_params)
        return np.array([self._h_of(img, s.velocity)
                         for img, s in zip(images, next_states)])

    def _fallback_action(self, state: RobotState) -> ControlInput:
        if self.sampler.fallback == "zero_action":
            return ControlInput()
        # max_brake: body-frame acceleration canceling the velocity in one
        # step, clipped to the actuator bound
        c, s = math.cos(state.pose.yaw), math.sin(state.pose.yaw)
        vx, vy = state.velocity[0], state.velocity[1]
        body = np.array([c * vx + s * vy, -s * vx + c * vy])
        return self.limits.clip(ControlInput(u=-body / self.dt))

    def filter_action(self, state: RobotState, y_now: RgbdImage,
                      u_nominal: ControlInput,
                      grid: DensityGrid) -> FilterDecision:
        """One filter step: accept the nominal if its predicted observation
        satisfies the constraint, else return the nearest safe candidate
        found by batched sampling, else the fallback action."""
        self._check_pairing(state)
        tick = self.tick
        self.tick += 1
        nominal = self.limits.clip(u_nominal)
        if self.cbf.kind == "density":
            h_now = cbf_density(grid, state.pose.position, self.cbf)
        else:
            h_now = self._h_of(y_now, state.velocity)

        h_next_nom = float(self._h_next_batch(state, [nominal], grid)[0])
        if constraint_satisfied(h_now, h_next_nom, self.cbf.alpha):
            return FilterDecision(
                u_applied=nominal, u_nominal=nominal, intervention=0.0,
                h_now=h_now, h_next_predicted=h_next_nom, safe=True,
                candidates_evaluated=0, fallback_used=False,
                h_next_nominal=h_next_nom)

        nominal_vec = nominal.as_vector()
        seen_actions: list[np.ndarray] = []
        seen_h: list[float] = []
        evaluated = 0
        for b in range(self.sampler.max_batches):
            cands = sample_candidates(nominal, self.sampler, b, self.limits,
                                      tick=tick)
            h_next = self._h_next_batch(state, cands, grid)
            evaluated += len(cands)
            seen_actions.extend(c.as_vector() for c in cands)
            seen_h.extend(h_next.tolist())
            ok = h_next <= self.cbf.alpha * h_now
            if ok.any():
                dists = np.array([np.sum((c.as_vector() - nominal_vec) ** 2)
                                  for c in cands])
                dists[~ok] = np.inf
                best = int(np.argmin(dists))
                chosen = cands[best]
                return FilterDecision(
                    u_applied=chosen, u_nominal=nominal,
                    intervention=_intervention(chosen, nominal),
                    h_now=h_now, h_next_predicted=float(h_next[best]),
                    safe=True, candidates_evaluated=evaluated,
                    fallback_used=False, h_next_nominal=h_next_nom,
                    cand_actions=np.array(seen_actions),
                    cand_h_next=np.array(seen_h))
        fb = self._fallback_action(state)
        return FilterDecision(
            u_applied=fb, u_nominal=nominal,
            intervention=_intervention(fb, nominal), h_now=h_now,
            h_next_predicted=float("nan"), safe=False,
            candidates_evaluated=evaluated, fallback_used=True,
            h_next_nominal=h_next_nom,
            cand_actions=np.array(seen_actions),
            cand_h_next=np.array(seen_h))
