#!/usr/bin/env python3
"""Density-barrier ablation: rerun the wall approach with the barrier read
from the grid's point density instead of rendered depth, dump per-run CSVs
and the z = 0.5 m density-map slice."""
import argparse
from pathlib import Path

import numpy as np

from vfcbf.experiments import (export_csv, run_density_ablation,
                               wall_approach_config)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/ablation"))
    ap.add_argument("--values", default="-20,-30,-40")
    ap.add_argument("--slice-z", type=float, default=0.5)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    values = [float(v) for v in args.values.split(",")]
    results, slice_values = run_density_ablation(
        wall_approach_config(), values, slice_z=args.slice_z)
    for res in results:
        path = args.out / f"density_dc{res.d_c:+.0f}.csv"
        export_csv(res.records, path)
        final = res.records[-1]
        print(f"d_c={res.d_c}: collided={res.collided}, final h "
              f"{final.h_now:.1f}, final d_min {final.d_min_true:.3f} m "
              f"-> {path}")
    slice_path = args.out / f"density_slice_z{args.slice_z}.txt"
    np.savetxt(slice_path, slice_values, fmt="%.6g",
               header=f"density slice at z={args.slice_z}")
    print(f"slice -> {slice_path}")


if __name__ == "__main__":
    main()
