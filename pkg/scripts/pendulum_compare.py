"""Feed-forward vs semi-gradient vs exact two-layer implicit nets on the oscillator task.

Writes one metrics/summary pair per architecture under --out and prints the
mean final test MSE with its standard error.
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from irnn.datasets import generate_pendulum_dataset
from irnn.training import TrainConfig, final_test_mse, run_experiment, summarize, write_metrics, write_summary

ARCHS = ("feedforward", "two-layer-semi", "two-layer-exact")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--traj-len", type=int, default=50)
    ap.add_argument("--n-h", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/pendulum")
    args = ap.parse_args()

    ds = generate_pendulum_dataset(args.samples, args.traj_len, args.seed)
    data = (*ds.split("train"), *ds.split("test"))
    base = TrainConfig(n_h=args.n_h, epochs=args.epochs, seed=args.seed)
    for arch in ARCHS:
        results = run_experiment(replace(base, arch=arch), data, args.runs, args.jobs)
        out = Path(args.out) / arch
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(results, out / "metrics.csv")
        write_summary(summarize(results), out / "summary.csv")
        finals = np.array(final_test_mse(results))
        for r in results:
            if r.error:
                print(f"  {arch} run {r.run_id} aborted: {r.error}")
        if finals.size:
            sem = finals.std(ddof=1) / np.sqrt(finals.size) if finals.size > 1 else 0.0
            print(f"{arch:16s} final test MSE {finals.mean():.5f} +- {sem:.5f}  ({finals.size}/{args.runs} runs)")
        else:
            print(f"{arch:16s} no surviving runs")


if __name__ == "__main__":
    main()
