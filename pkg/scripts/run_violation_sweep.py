#!/usr/bin/env python3
"""Sweep the Monte-Carlo violation rate across a log-spaced epsilon grid.

Defaults mirror the headline setup (10 epochs, lr 5e-5, clip 1.0, N=1000,
B=10, delta 1/N^2, one million samples per point, both sigma variants) and
write sweep.csv plus report.json next to the working directory.
"""

import argparse
from pathlib import Path

from postdp.calibration import TrainingConfig
from postdp.simulate import log_spaced_epsilons, sweep, sweep_to_json, write_sweep_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--lr", type=float, default=5e-5)
    parser.add_argument("--clip", type=float, default=1.0)
    parser.add_argument("--dataset-size", type=int, default=1000)
    parser.add_argument("--batch-size", type=int, default=10)
    parser.add_argument("--delta", type=float, default=None, help="defaults to 1/N^2")
    parser.add_argument("--eps-min", type=float, default=0.01)
    parser.add_argument("--eps-max", type=float, default=1000.0)
    parser.add_argument("--eps-points", type=int, default=31)
    parser.add_argument("--samples", type=int, default=1_000_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--variant", choices=["split", "undersqrt", "both"], default="both")
    parser.add_argument("--out-dir", type=Path, default=Path("sweep_out"))
    args = parser.parse_args()

    cfg = TrainingConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        clipping_norm=args.clip,
        dataset_size=args.dataset_size,
        batch_size=args.batch_size,
    )
    grid = log_spaced_epsilons(args.eps_min, args.eps_max, args.eps_points)
    reports = sweep(grid, cfg, args.delta, args.samples, args.seed, args.variant)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(reports, args.out_dir / "sweep.csv")
    (args.out_dir / "report.json").write_text(sweep_to_json(reports) + "\n")

    rates = [r.violation_rate for r in reports]
    print(f"wrote {args.out_dir}/sweep.csv and report.json ({len(reports)} rows)")
    print(f"min violation rate: {min(rates):.6f}  max violation rate: {max(rates):.6f}")


if __name__ == "__main__":
    main()
