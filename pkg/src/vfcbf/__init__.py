"""Visual-foresight CBF safety filtering for a camera-only robot.

A robot that sees the world only through an RGBd camera keeps itself
collision-free by rendering predicted depth images from an online-fused
density grid and rejecting control actions whose predicted observation
violates a discrete-time control barrier constraint.
"""
from .geometry import (CameraIntrinsics, Pose, Ray, RgbdImage,
                       camera_ray_directions, min_depth, pixel_ray)
from .safety_filter import (CbfConfig, FilterDecision, SafetyFilter,
                            SamplerConfig, cbf_density, cbf_depth,
                            cbf_depth_velocity, constraint_satisfied,
                            predict_next_observation, sample_candidates)
from .scene_grid import (DensityGrid, RenderParams, density_slice,
                         fuse_observation, load_grid, query_density,
                         save_grid, volume_render, volume_render_batch)
from .world import (ActuatorLimits, Box, ControlInput, RobotState, RoomShell,
                    SdfScene, Sphere, check_collision, render_ground_truth,
                    scene_from_dict, scene_to_dict, sdf_eval, step_dynamics)
from .experiments import (ScenarioConfig, StepRecord, SweepResult, export_csv,
                          export_sweep_csv, load_scenario, measure_runtime,
                          run_density_ablation, run_scenario, run_sweep,
                          wall_approach_config)

__version__ = "0.1.0"
