#!/usr/bin/env python3
"""Reproduce the clearance and rate-constant sweeps (d_c in {0.1, 0.5, 0.9}
at alpha = 0.5, alpha in {0.25, 0.5, 0.75} at d_c = 0.1) and dump the
per-repetition sweep CSVs."""
import argparse
from pathlib import Path

from vfcbf.experiments import (export_sweep_csv, run_sweep,
                               wall_approach_config)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/sweeps"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    base = wall_approach_config(seed=args.seed)
    for param, values in (("d_c", [0.1, 0.5, 0.9]),
                          ("alpha", [0.25, 0.5, 0.75])):
        result = run_sweep(base, param, values)
        path = args.out / f"sweep_{param}.csv"
        export_sweep_csv(result, path)
        print(f"{param} sweep -> {path}")
        for value, agg in result.per_value().items():
            print(f"  {param}={value}: mean du {agg['mean_du']:.3f}, "
                  f"max du {agg['max_du']:.3f}, min dist "
                  f"{agg['min_dist']:.3f} "
                  f"(range {agg['min_dist_range'][0]:.3f}"
                  f"..{agg['min_dist_range'][1]:.3f})")


if __name__ == "__main__":
    main()
