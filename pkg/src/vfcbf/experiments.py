"""Scripted scenario runner and metrics pipeline: wall-approach runs,
parameter sweeps, the density-CBF ablation, runtime measurement, and CSV
emission. One scenario runs on a single control loop; independent
repetitions share no mutable state and may run in parallel.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import yaml

from .geometry import CameraIntrinsics, Pose, RgbdImage, min_depth
from .safety_filter import (CbfConfig, FilterDecision, SafetyFilter,
                            SamplerConfig)
from .scene_grid import (DensityGrid, RenderParams, density_slice,
                         fuse_observation, volume_render)
from .world import (ActuatorLimits, ControlInput, RobotState, RoomShell,
                    SdfScene, check_collision, render_ground_truth,
                    scene_from_dict, step_dynamics)

CSV_HEADER = ("t,h_now,h_next,delta_u,d_min_true,d_min_rendered,"
              "speed,collided,filter_ms,candidates")
SWEEP_CSV_HEADER = "param,value,rep,mean_du,max_du,min_dist"


def default_room_scene() -> SdfScene:
    """6x6x3 m room shell vertically centered on the camera plane, so the
    floor and ceiling stay outside the safety-critical depth range even at
    wide fields of view."""
    return SdfScene(primitives=(
        RoomShell(center=(0.0, 0.0, 0.5), size=(6.0, 6.0, 3.0)),))


@dataclass(frozen=True, eq=False)
class NominalPolicy:
    """Scripted nominal input: constant body-frame command, or a
    piecewise-constant schedule of (start_time, u, yaw_rate) entries."""

    kind: str = "constant_toward_wall"
    u: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    yaw_rate: float = 0.0
    schedule: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant_toward_wall", "constant", "scripted"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        object.__setattr__(self, "u",
                           np.asarray(self.u, dtype=np.float64).reshape(2))
        if self.kind == "scripted" and not self.schedule:
            raise ValueError("scripted policy needs a schedule")

    def command_at(self, t: float) -> ControlInput:
        if self.kind != "scripted":
            return ControlInput(u=self.u, yaw_rate=self.yaw_rate)
        current = None
        for start, u, yaw_rate in self.schedule:
            if t + 1e-9 >= start:
                current = (u, yaw_rate)
        if current is None:
            return ControlInput()
        return ControlInput(u=np.asarray(current[0], dtype=np.float64),
                            yaw_rate=float(current[1]))


@dataclass(frozen=True)
class GridConfig:
    """Voxel-grid shape and fusion behavior. The grid covers the scene
    bounds padded outward so deposit bands behind walls stay inside it.

    The deposit band must stay thicker than the largest single-step motion
    (u_max * dt), otherwise a fast candidate can tunnel through the wall
    crust into never-observed space that renders as far-and-safe.
    """

    resolution: tuple[int, int, int] = (96, 96, 56)
    pad: float = 0.5
    sigma_max: float = 50.0
    fusion_rate: float = 0.5
    carve_margin_diagonals: float = 1.5
    deposit_width_diagonals: float = 2.5


@dataclass(eq=False)
class ScenarioConfig:
    """Full experiment definition; see configs/ for the YAML form."""

    scene: SdfScene = field(default_factory=default_room_scene)
    dynamics_mode: str = "single_integrator"
    start_xy: tuple[float, float] = (0.5, 0.0)
    start_yaw: float = 0.0
    camera_height: float = 0.5
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    grid: GridConfig = field(default_factory=GridConfig)
    render: RenderParams = field(default_factory=RenderParams)
    cbf: CbfConfig = field(default_factory=CbfConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    limits: ActuatorLimits = field(default_factory=ActuatorLimits)
    policy: NominalPolicy = field(default_factory=NominalPolicy)
    tick_rate: float = 10.0
    duration: float = 10.0
    repetitions: int = 5
    rng_seed: int = 0
    pre_explore: float = 1.0
    robot_radius: float = 0.05
    depth_noise_std: float = 0.0
    filter_enabled: bool = True

    def __post_init__(self):
        if self.tick_rate <= 0.0:
            raise ValueError("tick_rate must be positive")
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.pre_explore < 0.0:
            raise ValueError("pre_explore must be >= 0")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    def start_pose(self) -> Pose:
        return Pose(position=np.array([self.start_xy[0], self.start_xy[1],
                                       self.camera_height]),
                    yaw=self.start_yaw)

    def with_cbf(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(
            self, cbf=dataclasses.replace(self.cbf, **changes))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(
            self, rng_seed=seed,
            sampler=dataclasses.replace(self.sampler, rng_seed=seed))


def wall_approach_config(dynamics_mode: str = "single_integrator",
                         distance: float = 2.5, d_c: float = 0.1,
                         alpha: float = 0.5, beta: float = 1.0,
                         seed: int = 0, **overrides) -> ScenarioConfig:
    """Canonical head-on wall approach: start ``distance`` short of the +x
    wall of the default room, worst-case nominal driving straight at it."""
    scene = overrides.pop("scene", default_room_scene())
    wall_x = scene.bounds()[1][0]
    kind = ("depth_second_order" if dynamics_mode == "double_integrator"
            else "depth_first_order")
    fallback = ("max_brake" if dynamics_mode == "double_integrator"
                else "zero_action")
    cfg = ScenarioConfig(
        scene=scene,
        dynamics_mode=dynamics_mode,
        start_xy=(wall_x - distance, 0.0),
        cbf=CbfConfig(kind=kind, d_c=d_c, alpha=alpha, beta=beta),
        sampler=SamplerConfig(rng_seed=seed, fallback=fallback),
        rng_seed=seed,
        **overrides)
    return cfg


@dataclass(frozen=True)
class StepRecord:
    """One control tick of a scenario run."""

    t: float
    h_now: float
    h_next: float
    delta_u: float
    d_min_true: float
    d_min_rendered: float
    speed: float
    collided: bool
    filter_ms: float
    candidates: int


class ScenarioRun:
    """Owns one simulation loop: world state, fused grid, and filter.

    Per tick: observe the true world, fuse the observation, filter the
    nominal action, step the dynamics, check collision. The same engine
    backs the scripted runner and the live teleop session.
    """

    def __init__(self, cfg: ScenarioConfig, seed: int | None = None):
        self.cfg = cfg
        self.seed = cfg.rng_seed if seed is None else seed
        self.scene = cfg.scene
        lo, hi = cfg.scene.bounds()
        self.grid = DensityGrid.empty(lo - cfg.grid.pad, hi + cfg.grid.pad,
                                      cfg.grid.resolution,
                                      sigma_max=cfg.grid.sigma_max)
        self._carve = cfg.grid.carve_margin_diagonals * self.grid.voxel_diagonal
        self._deposit = cfg.grid.deposit_width_diagonals * self.grid.voxel_diagonal
        self.state = RobotState(pose=cfg.start_pose(),
                                dynamics_mode=cfg.dynamics_mode)
        sampler = dataclasses.replace(cfg.sampler, rng_seed=self.seed)
        self.filter = SafetyFilter(cbf=cfg.cbf, sampler=sampler,
                                   intrinsics=cfg.intrinsics,
                                   render_params=cfg.render,
                                   limits=cfg.limits, dt=cfg.dt)
        self._noise_rng = np.random.default_rng([self.seed, 1])
        self.tick_index = 0
        self.collided = False
        self.records: list[StepRecord] = []
        self.decisions: list[FilterDecision] = []
        self.last_observation: RgbdImage | None = None

    @property
    def t(self) -> float:
        return self.tick_index * self.cfg.dt

    def observe(self) -> RgbdImage:
        return render_ground_truth(self.scene, self.cfg.intrinsics,
                                   self.state.pose,
                                   depth_noise_std=self.cfg.depth_noise_std,
                                   rng=self._noise_rng)

    def fuse(self, observation: RgbdImage) -> None:
        fuse_observation(self.grid, self.cfg.intrinsics, self.state.pose,
                         observation, self.cfg.grid.fusion_rate,
                         carve_margin=self._carve,
                         deposit_width=self._deposit)

    def pre_explore(self) -> None:
        """Stationary fusion phase: the grid sees the scene before the
        first safety decision."""
        for _ in range(round(self.cfg.pre_explore * self.cfg.tick_rate)):
            self.fuse(self.observe())

    def _passthrough(self, y: RgbdImage, nominal: ControlInput) -> FilterDecision:
        nominal = self.cfg.limits.clip(nominal)
        if self.cfg.cbf.kind == "density":
            h_now = self.cfg.cbf.d_c  # density lookup skipped when disabled
        else:
            h_now = self.cfg.cbf.d_c - min_depth(y, self.cfg.cbf.percentile)
        return FilterDecision(u_applied=nominal, u_nominal=nominal,
                              intervention=0.0, h_now=h_now,
                              h_next_predicted=float("nan"), safe=True,
                              candidates_evaluated=0, fallback_used=False,
                              h_next_nominal=float("nan"))

    def step(self, u_nominal: ControlInput) -> StepRecord:
        if self.collided:
            raise RuntimeError("run already ended in collision")
        y = self.observe()
        self.last_observation = y
        self.fuse(y)
        d_min_true = min_depth(y, 0.0)
        t0 = time.perf_counter()
        if self.cfg.filter_enabled:
            decision = self.filter.filter_action(self.state, y, u_nominal,
                                                 self.grid)
        else:
            decision = self._passthrough(y, u_nominal)
        filter_ms = (time.perf_counter() - t0) * 1e3
        rendered = volume_render(self.grid, self.cfg.intrinsics,
                                 self.state.pose, self.cfg.render)
        d_min_rendered = min_depth(rendered, 0.0)
        new_state = step_dynamics(self.state, decision.u_applied, self.cfg.dt)
        collided = check_collision(self.scene, new_state,
                                   self.cfg.robot_radius)
        if new_state.dynamics_mode == "double_integrator":
            speed = new_state.speed
        else:
            speed = float(np.linalg.norm(decision.u_applied.u))
        record = StepRecord(
            t=self.t, h_now=decision.h_now,
            h_next=decision.h_next_predicted, delta_u=decision.intervention,
            d_min_true=d_min_true, d_min_rendered=d_min_rendered,
            speed=speed, collided=collided, filter_ms=filter_ms,
            candidates=decision.candidates_evaluated)
        self.state = new_state
        self.tick_index += 1
        self.collided = collided
        self.records.append(record)
        self.decisions.append(decision)
        return record

    def run(self) -> list[StepRecord]:
        self.pre_explore()
        n_ticks = round(self.cfg.duration * self.cfg.tick_rate)
        for _ in range(n_ticks):
            self.step(self.cfg.policy.command_at(self.t))
            if self.collided:
                break
        return self.records


def run_scenario(cfg: ScenarioConfig, seed: int | None = None) -> list[StepRecord]:
    """Run one scripted scenario; stops at the configured duration or on
    collision (collision marks the final record and ends the run)."""
    return ScenarioRun(cfg, seed=seed).run()


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    rep: int
    mean_du: float
    max_du: float
    min_dist: float


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    values: tuple[float, ...]
    rows: tuple[SweepRow, ...]

    def per_value(self) -> dict[float, dict[str, float]]:
        """Mean and range of each metric, aggregated over repetitions."""
        out = {}
        for v in self.values:
            rows = [r for r in self.rows if r.value == v]
            agg = {}
            for name in ("mean_du", "max_du", "min_dist"):
                xs = np.array([getattr(r, name) for r in rows])
                agg[name] = float(xs.mean())
                agg[name + "_range"] = (float(xs.min()), float(xs.max()))
            out[v] = agg
        return out


_SWEEPABLE = {"d_c": "d_c", "dc": "d_c", "alpha": "alpha"}


def run_sweep(base: ScenarioConfig, parameter: str,
              values: Sequence[float]) -> SweepResult:
    """Repeat the base scenario with one CBF field substituted, aggregating
    over the configured number of repetitions (seeded base_seed + rep)."""
    if parameter not in _SWEEPABLE:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    fld = _SWEEPABLE[parameter]
    rows = []
    for value in values:
        for rep in range(base.repetitions):
            cfg = base.with_cbf(**{fld: float(value)})
            cfg = cfg.with_seed(base.rng_seed + rep)
            records = run_scenario(cfg)
            dus = np.array([r.delta_u for r in records])
            dmins = np.array([r.d_min_true for r in records])
            rows.append(SweepRow(param=fld, value=float(value), rep=rep,
                                 mean_du=float(dus.mean()),
                                 max_du=float(dus.max()),
                                 min_dist=float(dmins.min())))
    return SweepResult(parameter=fld, values=tuple(float(v) for v in values),
                       rows=tuple(rows))


@dataclass(frozen=True)
class AblationResult:
    d_c: float
    records: tuple[StepRecord, ...]
    collided: bool


def run_density_ablation(base: ScenarioConfig,
                         d_c_values: Sequence[float] = (-20.0, -30.0, -40.0),
                         slice_z: float = 0.5
                         ) -> tuple[list[AblationResult], np.ndarray]:
    """Wall-approach runs with the point-density barrier at each threshold,
    plus the horizontal density-map slice (from the last run's grid) that
    explains the failure mode."""
    results = []
    grid = None
    for value in d_c_values:
        cfg = dataclasses.replace(
            base, cbf=CbfConfig(kind="density", d_c=float(value),
                                alpha=base.cbf.alpha))
        run = ScenarioRun(cfg)
        records = run.run()
        grid = run.grid
        results.append(AblationResult(d_c=float(value),
                                      records=tuple(records),
                                      collided=run.collided))
    assert grid is not None
    return results, density_slice(grid, slice_z)


@dataclass(frozen=True)
class RuntimeSummary:
    """Filter-only wall-clock statistics (fusion and ground-truth rendering
    excluded), plus predicted-render call accounting."""

    safe_ticks: int
    intervention_ticks: int
    safe_median_ms: float
    safe_p95_ms: float
    batch10_median_ms: float
    batch10_p95_ms: float
    max_renders_safe: int
    max_renders_intervention: int

    def as_lines(self) -> list[str]:
        return [
            f"safe path: {self.safe_ticks} ticks, median "
            f"{self.safe_median_ms:.2f} ms, p95 {self.safe_p95_ms:.2f} ms",
            f"intervention (single batch): {self.intervention_ticks} ticks, "
            f"median {self.batch10_median_ms:.2f} ms, p95 "
            f"{self.batch10_p95_ms:.2f} ms",
            f"predicted renders per tick: safe {self.max_renders_safe}, "
            f"intervention max {self.max_renders_intervention}",
        ]


def measure_runtime(cfg: ScenarioConfig) -> RuntimeSummary:
    from . import scene_grid

    run = ScenarioRun(cfg)
    run.pre_explore()
    n_ticks = round(cfg.duration * cfg.tick_rate)
    safe_ms, batch_ms = [], []
    renders_safe, renders_intervention = 0, 0
    for _ in range(n_ticks):
        scene_grid.reset_render_call_count()
        rec = run.step(cfg.policy.command_at(run.t))
        # one render per tick is the run's own d_min_rendered logging
        calls = scene_grid.render_call_count() - 1
        if rec.candidates == 0:
            safe_ms.append(rec.filter_ms)
            renders_safe = max(renders_safe, calls)
        else:
            renders_intervention = max(renders_intervention, calls)
            if rec.candidates == cfg.sampler.batch_size:
                batch_ms.append(rec.filter_ms)
        if run.collided:
            break
    safe = np.array(safe_ms) if safe_ms else np.array([float("nan")])
    batch = np.array(batch_ms) if batch_ms else np.array([float("nan")])
    return RuntimeSummary(
        safe_ticks=len(safe_ms), intervention_ticks=len(batch_ms),
        safe_median_ms=float(np.median(safe)),
        safe_p95_ms=float(np.percentile(safe, 95)),
        batch10_median_ms=float(np.median(batch)),
        batch10_p95_ms=float(np.percentile(batch, 95)),
        max_renders_safe=renders_safe,
        max_renders_intervention=renders_intervention)


def _fmt(x: float) -> str:
    return repr(float(x))


def export_csv(records: Iterable[StepRecord], path) -> None:
    """Per-tick metrics CSV with the exact column set the plots expect."""
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(CSV_HEADER + "\n")
            for r in records:
                f.write(",".join([
                    _fmt(r.t), _fmt(r.h_now), _fmt(r.h_next),
                    _fmt(r.delta_u), _fmt(r.d_min_true),
                    _fmt(r.d_min_rendered), _fmt(r.speed),
                    str(int(r.collided)), _fmt(r.filter_ms),
                    str(int(r.candidates)),
                ]) + "\n")
    except OSError as e:
        raise OSError(f"failed writing records to {path}: {e}") from e


def read_csv(path) -> list[StepRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in f:
            p = line.strip().split(",")
            records.append(StepRecord(
                t=float(p[0]), h_now=float(p[1]), h_next=float(p[2]),
                delta_u=float(p[3]), d_min_true=float(p[4]),
                d_min_rendered=float(p[5]), speed=float(p[6]),
                collided=bool(int(p[7])), filter_ms=float(p[8]),
                candidates=int(p[9])))
    return records


def export_sweep_csv(result: SweepResult, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(SWEEP_CSV_HEADER + "\n")
            for r in result.rows:
                f.write(f"{r.param},{_fmt(r.value)},{r.rep},"
                        f"{_fmt(r.mean_du)},{_fmt(r.max_du)},"
                        f"{_fmt(r.min_dist)}\n")
    except OSError as e:
        raise OSError(f"failed writing sweep to {path}: {e}") from e


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed YAML (see configs/ for examples)."""
    kwargs = {}
    if "scene" in data:
        kwargs["scene"] = scene_from_dict(data["scene"])
    robot = data.get("robot", {})
    if "start" in robot:
        kwargs["start_xy"] = tuple(float(v) for v in robot["start"][:2])
    if "yaw" in robot:
        kwargs["start_yaw"] = float(robot["yaw"])
    if "camera_height" in robot:
        kwargs["camera_height"] = float(robot["camera_height"])
    if "radius" in robot:
        kwargs["robot_radius"] = float(robot["radius"])
    if "dynamics" in data:
        dyn = data["dynamics"]
        if "mode" in dyn:
            kwargs["dynamics_mode"] = dyn["mode"]
        limits = {}
        if "u_max" in dyn:
            limits["u_max"] = float(dyn["u_max"])
        if "yaw_rate_max" in dyn:
            limits["yaw_rate_max"] = float(dyn["yaw_rate_max"])
        if limits:
            kwargs["limits"] = ActuatorLimits(**limits)
    if "camera" in data:
        cam = data["camera"]
        kwargs["intrinsics"] = CameraIntrinsics(
            width=int(cam.get("width", 64)),
            height=int(cam.get("height", 64)),
            hfov=math.radians(float(cam.get("hfov_deg", 90.0))),
            max_range=float(cam.get("max_range", 10.0)))
    if "grid" in data:
        g = data["grid"]
        kwargs["grid"] = GridConfig(
            resolution=tuple(int(v) for v in g.get("resolution", (96, 96, 56))),
            pad=float(g.get("pad", 0.5)),
            sigma_max=float(g.get("sigma_max", 50.0)),
            fusion_rate=float(g.get("fusion_rate", 0.5)),
            carve_margin_diagonals=float(g.get("carve_margin_diagonals", 1.5)),
            deposit_width_diagonals=float(g.get("deposit_width_diagonals", 1.0)))
    if "render" in data:
        r = data["render"]
        kwargs["render"] = RenderParams(
            samples_per_ray=int(r.get("samples_per_ray", 160)),
            t_near=float(r.get("t_near", 0.02)),
            t_far=float(r.get("t_far", 12.0)),
            unseen_is_unsafe=bool(r.get("unseen_is_unsafe", False)))
    if "cbf" in data:
        c = data["cbf"]
        kwargs["cbf"] = CbfConfig(
            kind=c.get("kind", "depth_first_order"),
            d_c=float(c.get("d_c", 0.1)), alpha=float(c.get("alpha", 0.5)),
            beta=float(c.get("beta", 1.0)),
            percentile=float(c.get("percentile", 0.0)))
    if "sampler" in data:
        s = data["sampler"]
        kwargs["sampler"] = SamplerConfig(
            batch_size=int(s.get("batch_size", 10)),
            max_batches=int(s.get("max_batches", 10)),
            sigma_u=np.asarray(s.get("sigma_u", (1.0, 1.0, 0.0)),
                               dtype=np.float64),
            rng_seed=int(s.get("rng_seed", data.get("run", {}).get("seed", 0))),
            fallback=s.get("fallback", "zero_action"))
    if "policy" in data:
        p = data["policy"]
        kwargs["policy"] = NominalPolicy(
            kind=p.get("kind", "constant_toward_wall"),
            u=np.asarray(p.get("u", (1.0, 0.0)), dtype=np.float64),
            yaw_rate=float(p.get("yaw_rate", 0.0)),
            schedule=tuple((float(e["t"]), tuple(e["u"]),
                            float(e.get("yaw_rate", 0.0)))
                           for e in p.get("schedule", [])))
    run = data.get("run", {})
    for src, dst, conv in (("tick_rate", "tick_rate", float),
                           ("duration", "duration", float),
                           ("repetitions", "repetitions", int),
                           ("seed", "rng_seed", int),
                           ("pre_explore", "pre_explore", float),
                           ("depth_noise_std", "depth_noise_std", float),
                           ("filter_enabled", "filter_enabled", bool)):
        if src in run:
            kwargs[dst] = conv(run[src])
    return ScenarioConfig(**kwargs)


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return scenario_from_dict(data)
