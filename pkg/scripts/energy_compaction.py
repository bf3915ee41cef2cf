"""Average spectral energy and truth-playback RMSE per schedule step over synthetic scenes.

    python3 scripts/energy_compaction.py --count 100 --seed 0
"""

import argparse

import numpy as np

from freqdepth.block_spectrum import DepthMap, forward_block_dct, make_schedule
from freqdepth.progressive import reconstruct_from_truth, rmse
from freqdepth.synth import make_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=64)
    args = ap.parse_args()

    sched = make_schedule(8)
    _, depths = make_dataset(args.seed, args.count, args.size)
    frac = np.zeros(len(sched))
    errs = np.zeros(len(sched))
    for d in depths:
        dm = DepthMap(d)
        e = (forward_block_dct(dm).array ** 2).sum(axis=(1, 2))
        frac += [e[sched.step_mask(k)].sum() / e.sum() for k in range(len(sched))]
        errs += [rmse(x, dm) for x in reconstruct_from_truth(dm, sched)]
    frac /= len(depths)
    errs /= len(depths)
    print("step\tchannels\tenergy_fraction\tcumulative\tmean_rmse")
    for k, c in enumerate(sched.cumulative_counts()):
        print(f"{k}\t{c}\t{frac[k]:.6g}\t{frac[:k + 1].sum():.9f}\t{errs[k]:.6f}")


if __name__ == "__main__":
    main()
