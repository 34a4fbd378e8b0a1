#!/usr/bin/env python3
"""Desk-scale end-to-end run on a synthetic dataset.

Generates an 8-node office, trains both agents at reduced scale, then runs
the static and dynamic protocols plus the fixed/linear-search baselines and
emits plot data.  Everything lands under --out (default runs/synthetic).
"""

import argparse
import sys

from uwb_adapt.cli import main as cli


def run(argv) -> None:
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/synthetic")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--nodes", type=int, default=8)
    parser.add_argument("--attempts", type=int, default=50)
    parser.add_argument("--q-steps", type=int, default=200_000)
    parser.add_argument("--dqn-steps", type=int, default=20_000)
    args = parser.parse_args()

    out = args.out
    common = ["--out", out, "--attempts", str(args.attempts)]

    run(["gen-synth", "--out", out, "--seed", str(args.seed),
         "--nodes", str(args.nodes), "--attempts", str(args.attempts)])
    dataset = f"{out}/results/synthetic_dataset.csv"
    schedule = f"{out}/results/dynamic_schedule.json"

    run(["features", "--dataset", dataset, *common])

    # Training measures each decision over a coarser 25-attempt block to tame
    # block-PRR noise at the reduced step budgets; the epsilon decays are the
    # full-scale constants rescaled to the shorter runs.
    run(["train-q", "--dataset", dataset, *common,
         "--steps", str(args.q_steps), "--eps-decay", "9.775e-5",
         "--block", "25", "--seed", "0"])
    run(["train-dqn", "--dataset", dataset, *common,
         "--steps", str(args.dqn_steps), "--eps-decay", "1.96e-4",
         "--block", "25", "--seed", "1"])

    models = [
        "--qtable", f"{out}/models/qtable.bin",
        "--dqn", f"{out}/models/dqn",
        "--preprocess", f"{out}/models/preprocess.json",
    ]
    run(["eval-static", "--dataset", dataset, *common, *models,
         "--reps", "3", "--seed", "7"])
    run(["eval-dynamic", "--dataset", dataset, *common, *models,
         "--schedule", schedule, "--seed", "42"])
    run(["baseline", "--dataset", dataset, *common,
         "--schedule", schedule, "--seed", "42"])
    run(["timing", "--dataset", dataset, *common, *models, "--n", "200"])
    run(["plot", "--results", f"{out}/results", "--out", out])
    print(f"\nall results under {out}/results")


if __name__ == "__main__":
    main()
