"""Train the toy model with the default configuration and write the run directory.

    python3 scripts/train_default.py --out runs/default
"""

import argparse
import logging
import time

from freqdepth.train import TrainConfig, train_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/default")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=30)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    t0 = time.perf_counter()
    res = train_toy(TrainConfig(seed=args.seed, epochs=args.epochs, out=args.out))
    print(f"wall_seconds\t{time.perf_counter() - t0:.1f}")
    print(f"best_epoch\t{res.best_epoch}")
    print("\n".join(res.report.lines()))


if __name__ == "__main__":
    main()
