"""Run the bias/MSE Monte Carlo tables from the shipped configs.

    python scripts/reproduce_tables.py                  # all four configs, 2000 reps
    python scripts/reproduce_tables.py --reps 200 table1

CSV files go to ``--out`` (one per model and scenario); bias and MSE tables
are printed with one block per estimator family and one row per ``n``.
"""

import argparse
import os
import time
from pathlib import Path

from robdiff.experiment import (ExperimentConfig, format_table, load_config, run_experiment,
                                write_report)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("names", nargs="*", default=["table1", "table3", "table5", "table7"],
                        help="config names under configs/ (default: all)")
    parser.add_argument("--reps", type=int, default=None, help="override replications")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--out", default="results/tables")
    args = parser.parse_args()

    for name in args.names:
        cfg = load_config(CONFIG_DIR / f"{name}.json")
        if args.reps is not None:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "reps": args.reps})
        start = time.perf_counter()
        report = run_experiment(cfg, threads=args.threads)
        paths = write_report(report, cfg, args.out)
        print(f"== {name}: model {cfg.model}, scenario {cfg.scenario}, reps {cfg.reps} "
              f"({time.perf_counter() - start:.0f} s)")
        print("bias (mu, sigma)")
        print(format_table(report, "bias"))
        print("MSE (mu, sigma)")
        print(format_table(report, "mse"))
        print("wrote " + ", ".join(str(p) for p in paths))


if __name__ == "__main__":
    main()
