#!/usr/bin/env python3
"""Full-scale pipeline on the measured office dataset.

Expects the dataset as CSV; if its column names differ from the canonical
schema, pass a JSON mapping {canonical: actual} via --column-map and the
ingest step rewrites it canonically first.  Training runs at full scale
(500k tabular steps, 200k network steps), so expect this to take a while.
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
    parser.add_argument("--dataset", required=True, help="measured dataset CSV")
    parser.add_argument("--column-map", default=None)
    parser.add_argument("--out", default="runs/measured")
    parser.add_argument("--attempts", type=int, default=500)
    parser.add_argument("--schedule", default=None,
                        help="walk schedule JSON; default spans the easy-to-hard range")
    args = parser.parse_args()

    out = args.out
    common = ["--out", out, "--attempts", str(args.attempts)]

    dataset = args.dataset
    if args.column_map:
        run(["ingest", "--dataset", dataset, "--column-map", args.column_map, *common])
        dataset = f"{out}/results/canonical_dataset.csv"

    run(["features", "--dataset", dataset, *common])
    run(["train-q", "--dataset", dataset, *common, "--seed", "0"])
    run(["train-dqn", "--dataset", dataset, *common, "--seed", "1"])

    models = [
        "--qtable", f"{out}/models/qtable.bin",
        "--dqn", f"{out}/models/dqn",
        "--preprocess", f"{out}/models/preprocess.json",
    ]
    schedule = ["--schedule", args.schedule] if args.schedule else []
    run(["eval-static", "--dataset", dataset, *common, *models,
         "--reps", "3", "--seed", "7", "--jobs", "4"])
    run(["eval-dynamic", "--dataset", dataset, *common, *models, *schedule,
         "--seed", "42"])
    run(["baseline", "--dataset", dataset, *common, *schedule, "--seed", "42"])
    run(["timing", "--dataset", dataset, *common, *models, "--n", "500"])
    run(["plot", "--results", f"{out}/results", "--out", out])
    print(f"\nall results under {out}/results")


if __name__ == "__main__":
    main()
