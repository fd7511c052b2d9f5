#!/usr/bin/env python3
"""Run the canonical wall approaches (single and double integrator, 5 seeds
each) and dump per-tick CSVs, mirroring the headline safety experiment."""
import argparse
from pathlib import Path

from vfcbf.experiments import export_csv, run_scenario, wall_approach_config


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/wall_runs"))
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for mode in ("single_integrator", "double_integrator"):
        for seed in range(args.seeds):
            cfg = wall_approach_config(dynamics_mode=mode, seed=seed)
            records = run_scenario(cfg)
            path = args.out / f"{mode}_seed{seed}.csv"
            export_csv(records, path)
            final = records[-1]
            print(f"{mode} seed {seed}: final d_min "
                  f"{final.d_min_true:.3f} m, collided "
                  f"{any(r.collided for r in records)} -> {path}")


if __name__ == "__main__":
    main()
