"""Model comparison on synthetic markets, repeated over root seeds.

Each seed generates a fresh dataset and runs the full pipeline; the script
then averages the out-of-sample errors per model across seeds.

    python3 scripts/synthetic_comparison.py --seeds 0 1 2 --out results/comparison
    python3 scripts/synthetic_comparison.py --grid src/orderbook_epf/data/table1_grid.json --seeds 0
"""
from __future__ import annotations

import argparse
import csv
import statistics
import sys
from pathlib import Path

from orderbook_epf.cli import main as cli_main


def read_comparison(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--grid", help="grid file; default: shipped pipeline grid")
    ap.add_argument("--spec", help="synthetic spec; default: shipped spec")
    ap.add_argument("--vstar", default="1000")
    ap.add_argument("--workers", default="1")
    ap.add_argument("--out", default="results/comparison")
    args = ap.parse_args(argv)

    out = Path(args.out)
    per_model: dict[str, dict[str, list[float]]] = {}
    for seed in args.seeds:
        run_dir = out / f"seed_{seed}"
        cmd = ["pipeline", "--seed", str(seed), "--vstar", args.vstar, "--workers", args.workers,
               "--out", str(run_dir)]
        if args.grid:
            cmd += ["--grid", args.grid]
        if args.spec:
            cmd += ["--spec", args.spec]
        code = cli_main(cmd)
        if code == 2:
            return 2
        if not (run_dir / "comparison.csv").exists():
            print(f"seed {seed}: no comparison table (exit {code})", file=sys.stderr)
            continue
        for row in read_comparison(run_dir / "comparison.csv"):
            if row["split"] != "out_of_sample":
                continue
            stats = per_model.setdefault(row["model"], {"rmse": [], "mae": [], "mdape": []})
            for k in stats:
                stats[k].append(float(row[k]))

    head = ["model", "n_seeds", "rmse_mean", "rmse_sd", "mae_mean", "mdape_mean"]
    lines = []
    for model, s in per_model.items():
        sd = statistics.stdev(s["rmse"]) if len(s["rmse"]) > 1 else 0.0
        lines.append([model, len(s["rmse"]), statistics.fmean(s["rmse"]), sd,
                      statistics.fmean(s["mae"]), statistics.fmean(s["mdape"])])
    print()
    print(f"{'model':<22}{'seeds':>6}{'RMSE':>9}{'sd':>8}{'MAE':>9}{'MdAPE':>8}")
    for m, n, r, sd, mae, md in lines:
        print(f"{m:<22}{n:>6}{r:>9.3f}{sd:>8.3f}{mae:>9.3f}{md:>8.3f}")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows([head, *lines])
    return 0


if __name__ == "__main__":
    sys.exit(main())
