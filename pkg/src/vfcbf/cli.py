"""Command-line entry points: run / sweep / ablation / bench / serve."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .experiments import (ScenarioConfig, export_csv, export_sweep_csv,
                          load_scenario, measure_runtime, run_density_ablation,
                          run_scenario, run_sweep, wall_approach_config)


def _load_cfg(args) -> ScenarioConfig:
    if args.config:
        cfg = load_scenario(args.config)
    else:
        cfg = wall_approach_config()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    records = run_scenario(cfg)
    out = _out_dir(args)
    path = out / "run.csv"
    export_csv(records, path)
    collided = any(r.collided for r in records)
    final = records[-1]
    print(f"{len(records)} ticks, final d_min {final.d_min_true:.3f} m, "
          f"collided: {collided}")
    print(f"wrote {path}")
    if collided and cfg.cbf.kind != "density":
        return 2
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    values = [float(v) for v in args.values.split(",")]
    result = run_sweep(cfg, args.param, values)
    out = _out_dir(args)
    path = out / f"sweep_{result.parameter}.csv"
    export_sweep_csv(result, path)
    for value, agg in result.per_value().items():
        print(f"{result.parameter}={value}: mean du {agg['mean_du']:.3f}, "
              f"max du {agg['max_du']:.3f}, min dist {agg['min_dist']:.3f}")
    print(f"wrote {path}")
    return 0


def cmd_ablation(args) -> int:
    cfg = _load_cfg(args)
    values = [float(v) for v in args.values.split(",")]
    results, slice_values = run_density_ablation(cfg, values,
                                                 slice_z=args.slice_z)
    out = _out_dir(args)
    for res in results:
        path = out / f"ablation_dc{res.d_c:+.0f}.csv"
        export_csv(res.records, path)
        final = res.records[-1]
        print(f"d_c={res.d_c}: {len(res.records)} ticks, collided "
              f"{res.collided}, final h {final.h_now:.2f}, final d_min "
              f"{final.d_min_true:.3f} m -> {path}")
    slice_path = out / f"density_slice_z{args.slice_z}.txt"
    np.savetxt(slice_path, slice_values, fmt="%.6g",
               header=f"density slice at z={args.slice_z}")
    print(f"wrote {slice_path}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    summary = measure_runtime(cfg)
    for line in summary.as_lines():
        print(line)
    return 0


def cmd_serve(args) -> int:
    from .teleop import serve

    cfg = _load_cfg(args)
    serve(cfg, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vfcbf",
        description="Visual-foresight CBF safety filter experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scripted scenario")
    run.add_argument("--config", type=Path, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", type=Path, default=None)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="parameter sweep over d_c or alpha")
    sweep.add_argument("--param", choices=["dc", "d_c", "alpha"],
                       required=True)
    sweep.add_argument("--values", required=True,
                       help="comma-separated values, e.g. 0.1,0.5,0.9")
    sweep.add_argument("--config", type=Path, default=None)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", type=Path, default=None)
    sweep.set_defaults(func=cmd_sweep)

    abl = sub.add_parser("ablation",
                         help="density-CBF ablation runs + density slice")
    abl.add_argument("--config", type=Path, default=None)
    abl.add_argument("--values", default="-20,-30,-40")
    abl.add_argument("--slice-z", type=float, default=0.5)
    abl.add_argument("--seed", type=int, default=None)
    abl.add_argument("--out", type=Path, default=None)
    abl.set_defaults(func=cmd_ablation)

    bench = sub.add_parser("bench", help="filter runtime statistics")
    bench.add_argument("--config", type=Path, default=None)
    bench.add_argument("--seed", type=int, default=None)
    bench.set_defaults(func=cmd_bench)

    serve_p = sub.add_parser("serve", help="live teleoperation service")
    serve_p.add_argument("--config", type=Path, default=None)
    serve_p.add_argument("--port", type=int, default=8765)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
