"""Seed sweep of the two-neuron XOR net in exact and semi-gradient mode.

Prints, per seed, the final supervised MSE and how often the unsupervised
second neuron agrees with NOR after thresholding at 0.5.
"""

import argparse

import numpy as np

from irnn.cli import train_xor
from irnn.datasets import xor_arrays


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--modes", nargs="+", default=["exact", "semi"], choices=["exact", "semi"])
    args = ap.parse_args()

    _, Y = xor_arrays()
    for mode in args.modes:
        print(f"== {mode}")
        print("seed   mse        Y2==NOR  outputs(Y1 | Y2)")
        n_pass = 0
        for seed in range(args.seeds):
            result, out, mse = train_xor(mode, args.epochs, seed)
            if result.error is not None:
                print(f"{seed:4d}   aborted: {result.error}")
                continue
            n_pass += mse < 1e-2
            agree = int(((out[:, 1] > 0.5) == (Y[:, 1] > 0.5)).sum())
            y1 = " ".join(f"{v:.2f}" for v in out[:, 0])
            y2 = " ".join(f"{v:.2f}" for v in out[:, 1])
            print(f"{seed:4d}   {mse:.2e}   {agree}/4      {y1} | {y2}")
        print(f"{n_pass}/{args.seeds} seeds below 1e-2")


if __name__ == "__main__":
    main()
