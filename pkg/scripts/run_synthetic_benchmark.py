"""Seed sweep of the two-stage model on AR and random-walk price series.

Prints one metric row per (series, seed) plus a mean line per family, in the
``stock,model,nmse,mae,ds,n`` layout. AR series should land well under the
constant-mean level; random walks should sit near 1.

    python scripts/run_synthetic_benchmark.py --seeds 10 --n 2000
"""
import argparse
import time

import numpy as np

from somfsvm.evaluation import CSV_HEADER
from somfsvm.pipeline import config_from_dict, evaluate, prepare, train_two_stage
from somfsvm.synthetic import ar_prices, random_walk_prices

FAMILIES = {"AR": ar_prices, "RW": random_walk_prices}


def main():
    ap = argparse.ArgumentParser(description="synthetic seed sweep")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--grid", type=int, nargs=2, default=(3, 3), metavar=("ROWS", "COLS"))
    ap.add_argument("--refine-epochs", type=int, default=0)
    args = ap.parse_args()

    doc = {"som": {"rows": args.grid[0], "cols": args.grid[1]}, "n_test": 200}
    if args.refine_epochs:
        doc["refine"] = {"epochs": args.refine_epochs}
    cfg = config_from_dict(doc)

    print(CSV_HEADER)
    for family, make in FAMILIES.items():
        scores = []
        for seed in range(args.seeds):
            t0 = time.perf_counter()
            series = make(args.n, seed=seed)
            model = train_two_stage(series, cfg)
            _, test = prepare(series, cfg)
            r = evaluate(model, test)
            scores.append((r.nmse, r.mae, r.ds))
            print(r.csv_row(f"{family}{seed}"), f"# {time.perf_counter() - t0:.1f}s", flush=True)
        mean = np.mean(scores, axis=0)
        print(f"# {family} mean: nmse {mean[0]:.4f} mae {mean[1]:.4f} ds {mean[2]:.2f}")


if __name__ == "__main__":
    main()
