"""Final test MSE against hidden width for the feed-forward and exact implicit nets."""

import argparse

import numpy as np

from irnn.datasets import generate_pendulum_dataset
from irnn.networks import count_parameters
from irnn.training import TrainConfig, final_test_mse, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--widths", type=int, nargs="+", default=[2, 3, 5, 8])
    ap.add_argument("--samples", type=int, default=5_000)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = generate_pendulum_dataset(args.samples, 50, args.seed)
    data = (*ds.split("train"), *ds.split("test"))
    print("n_h  arch              params  mean_test_mse  runs")
    for n_h in args.widths:
        for arch, tag in (("feedforward", "feedforward"), ("two-layer-exact", "two-layer")):
            cfg = TrainConfig(arch=arch, n_h=n_h, epochs=args.epochs, seed=args.seed)
            finals = final_test_mse(run_experiment(cfg, data, args.runs))
            mean = np.mean(finals) if finals else float("nan")
            print(f"{n_h:3d}  {arch:16s}  {count_parameters(tag, 50, n_h, 2):6d}  {mean:.5f}        {len(finals)}")


if __name__ == "__main__":
    main()
