"""Class-approximation error as the target class volume shrinks.

Fits a price-class scheme on the first 80% of a synthetic dataset for each
V* and reports how far the class-implied price lands from the exact clearing
price, in sample and on the held-out hours.

    python3 scripts/vstar_sweep.py --out results/vstar_sweep.csv
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

from orderbook_epf.data_io import load_bundle
from orderbook_epf.evaluation import split_point
from orderbook_epf.partition import approximation_report, fit_scheme, tick_scheme
from orderbook_epf.synthetic import SyntheticMarketSpec, generate_synthetic


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", help="dataset directory; default: generate the shipped synthetic spec")
    ap.add_argument("--vstar", type=float, nargs="+", default=[8000, 4000, 2000, 1000, 500, 250, 125])
    ap.add_argument("--test-fraction", type=float, default=0.2)
    ap.add_argument("--out", help="CSV to write; stdout only when absent")
    args = ap.parse_args(argv)

    bundle = load_bundle(args.data) if args.data else generate_synthetic(SyntheticMarketSpec())
    books = [bundle.books[t] for t in sorted(bundle.books)]
    cut = split_point(len(books), args.test_fraction)
    train, test = books[:cut], books[cut:]

    rows = []
    for v in sorted(args.vstar, reverse=True):
        t0 = time.perf_counter()
        scheme = fit_scheme(train, v)
        ins, oos = approximation_report(train, scheme), approximation_report(test, scheme)
        rows.append([v, scheme.n_classes, ins.mean_abs_error, oos.mean_abs_error, oos.mdape,
                     round(time.perf_counter() - t0, 2)])
    fine = tick_scheme(train)
    rows.append(["tick", fine.n_classes, approximation_report(train, fine).mean_abs_error,
                 approximation_report(test, fine).mean_abs_error, "", ""])

    head = ["v_star", "n_classes", "mae_train", "mae_test", "mdape_test", "seconds"]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(head)
    w.writerows(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows([head, *rows])
    return 0


if __name__ == "__main__":
    sys.exit(main())
