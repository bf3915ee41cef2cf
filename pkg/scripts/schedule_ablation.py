"""Compare frequency schedules: truth-playback error per step and, optionally, a short training run.

    python3 scripts/schedule_ablation.py                # playback only
    python3 scripts/schedule_ablation.py --epochs 5     # also train each schedule
"""

import argparse
import logging

import numpy as np

from freqdepth.block_spectrum import DepthMap, make_schedule
from freqdepth.progressive import reconstruct_from_truth, rmse
from freqdepth.synth import make_dataset
from freqdepth.train import TrainConfig, train_toy

SCHEDULES = {
    "default-8": None,
    # a 9-step alternative: {6,7} merged, {8,9} merged, {10..14} merged
    "nine-step": [[0], [1], [2], [3], [4], [5], [6, 7], [8, 9], list(range(10, 15))],
    "unmerged-15": [[i] for i in range(15)],
    "coarse-4": [[0], [1, 2], [3, 4, 5], list(range(6, 15))],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=40)
    ap.add_argument("--epochs", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    _, depths = make_dataset(args.seed + 1_000_003, args.count)
    print("schedule\tsteps\tplayback_rmse_per_step\ttrained_val_rmse\tmonotone_fraction")
    for name, spec in SCHEDULES.items():
        sched = make_schedule(8, spec)
        errs = np.mean([[rmse(x, DepthMap(d)) for x in reconstruct_from_truth(DepthMap(d), sched)]
                        for d in depths], axis=0)
        trained = ("-", "-")
        if args.epochs:
            res = train_toy(TrainConfig(seed=args.seed, epochs=args.epochs, merge_spec=spec))
            trained = (f"{res.report.rmse:.4f}", f"{res.report.monotone_fraction:.3f}")
        print(f"{name}\t{len(sched)}\t" + ",".join(f"{e:.3f}" for e in errs) + f"\t{trained[0]}\t{trained[1]}")


if __name__ == "__main__":
    main()
