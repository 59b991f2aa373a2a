#!/usr/bin/env python3
"""Verify the DP condition before and after k-fold advanced composition.

Defaults reproduce the 1000-composition check at epsilon 1, delta 1e-8 on
the headline training configuration; optionally emits the condition as an
SMT-LIB script for an external solver.
"""

import argparse

from postdp.calibration import PrivacyBudget, TrainingConfig
from postdp.verify import DpConditionSpec, export_smtlib, verify_composed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epsilon", type=float, default=1.0)
    parser.add_argument("--delta", type=float, default=1e-8)
    parser.add_argument("--compositions", type=int, default=1000)
    parser.add_argument("--mode", choices=["taylor", "exact"], default="exact")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--lr", type=float, default=5e-5)
    parser.add_argument("--clip", type=float, default=1.0)
    parser.add_argument("--dataset-size", type=int, default=1000)
    parser.add_argument("--batch-size", type=int, default=10)
    parser.add_argument("--emit-smt", help="write the original condition as SMT-LIB here")
    args = parser.parse_args()

    cfg = TrainingConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        clipping_norm=args.clip,
        dataset_size=args.dataset_size,
        batch_size=args.batch_size,
    )
    budget = PrivacyBudget(epsilon=args.epsilon, delta=args.delta)
    result = verify_composed(budget, cfg, args.compositions, mode=args.mode)

    print(f"composed epsilon: {result.composed_budget.eps_prime!r}")
    print(f"composed delta:   {result.composed_budget.delta_prime!r}")
    print(f"sigma (composed): {result.sigma_composed!r}")
    print(f"sigma (original): {result.sigma_original!r}")
    print(f"composed condition: {result.composed.status.value}")
    print(f"original condition: {result.original.status.value}")

    if args.emit_smt:
        spec = DpConditionSpec(
            epsilon=args.epsilon,
            delta=args.delta,
            sigma=result.sigma_original,
            delta_w=result.delta_w,
        )
        with open(args.emit_smt, "w") as fh:
            fh.write(export_smtlib(spec))
        print(f"wrote {args.emit_smt}")


if __name__ == "__main__":
    main()
