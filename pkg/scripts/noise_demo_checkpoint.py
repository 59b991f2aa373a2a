#!/usr/bin/env python3
"""Build a small random checkpoint and run the noising pipeline on it.

Produces demo.st, demo_noised.st, and demo_receipt.json in the output
directory.  The default training configuration has sensitivity 0.01 so the
demo epsilon stays inside the supported budget range.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from postdp.calibration import PrivacyBudget, TrainingConfig, Variant
from postdp.mechanism import WeightSet, noise_then_account, save_weights


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epsilon", type=float, default=0.02)
    parser.add_argument("--delta", type=float, default=0.01)
    parser.add_argument("--variant", choices=[v.value for v in Variant], default="split")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", type=Path, default=Path("demo_out"))
    args = parser.parse_args()

    cfg = TrainingConfig(
        epochs=1, learning_rate=0.1, clipping_norm=1.0, dataset_size=10, batch_size=1
    )
    rng = np.random.default_rng(args.seed)
    ws = WeightSet(
        tensors={
            "embedding.weight": rng.standard_normal((8, 4)).astype(np.float32),
            "attention.query.weight": rng.standard_normal((4, 4)).astype(np.float32),
            "head.weight": rng.standard_normal((4, 2)).astype(np.float64),
        },
        metadata={"source": "demo"},
    )

    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_weights(ws, args.out_dir / "demo.st")
    noisy, receipt = noise_then_account(
        ws,
        cfg,
        PrivacyBudget(epsilon=args.epsilon, delta=args.delta),
        Variant(args.variant),
        args.seed,
    )
    save_weights(noisy, args.out_dir / "demo_noised.st")
    (args.out_dir / "demo_receipt.json").write_text(
        json.dumps(receipt.to_dict(), indent=2) + "\n"
    )
    print(f"sigma = {receipt.sigma!r} ({receipt.variant})")
    print(f"wrote {args.out_dir}/demo.st, demo_noised.st, demo_receipt.json")


if __name__ == "__main__":
    main()
