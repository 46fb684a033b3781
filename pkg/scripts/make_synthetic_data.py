"""Write synthetic daily price CSVs plus a manifest for ``somfsvm experiment``.

    python scripts/make_synthetic_data.py data/ --n 2714
"""
import argparse
import json
from pathlib import Path

from somfsvm.synthetic import ar_prices, random_walk_prices

# four series shaped like the usual index/stock benchmark set
SERIES = {
    "AR_A": lambda n: ar_prices(n, seed=0),
    "AR_B": lambda n: ar_prices(n, seed=1, phi=0.8),
    "RW_A": lambda n: random_walk_prices(n, seed=0),
    "RW_B": lambda n: random_walk_prices(n, seed=1, vol=0.02),
}


def write_csv(path, series):
    lines = ["Date,Close"] + [f"{d.isoformat()},{c!r}" for d, c in series.entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--n", type=int, default=2000, help="prices per series")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets = []
    for name, make in SERIES.items():
        write_csv(out / f"{name}.csv", make(args.n))
        datasets.append({"name": name, "path": f"{name}.csv"})
    manifest = {"datasets": datasets, "config": {"n_test": 200}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(datasets)} series and manifest.json to {out}")


if __name__ == "__main__":
    main()
