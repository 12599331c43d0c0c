"""Command-line driver: generate | partition | features | train | evaluate | pipeline.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import sys
import time
import warnings
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (
    atomic_write_text, load_bundle, load_feature_matrix, load_calendars, save_bundle,
    save_feature_matrix, CALENDAR_FILE,
)
from .daytypes import default_calendars
from .errors import ConfigError, RankDeficientWarning
from .evaluation import (
    SuiteEntry, chronological_split, comparison_csv, cv_table_csv, evaluate_suite,
    format_comparison, grid_search, resolve_columns, split_point,
)
from .features import build_feature_matrix, eligible_hours
from .models import fit, load_grid, load_model, rf_importance, save_model
from .partition import dumps_scheme, fit_scheme, load_scheme, save_scheme
from .synthetic import SyntheticMarketSpec, generate_synthetic

log = logging.getLogger("orderbook_epf")

CV_FOLDS = 5
DEFAULT_GRID = "pipeline_grid.json"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_grid(path):
    text = files("orderbook_epf.data").joinpath(DEFAULT_GRID).read_text() if path is None \
        else Path(path).read_text(encoding="utf-8")
    return text, load_grid(text)


def _check_fraction(f):
    if not 0 < f < 1:
        raise UsageError(f"--test-fraction must be in (0, 1), got {f}")


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


# --- stages ----------------------------------------------------------------

def run_generate(spec_path, out, seed=None) -> SyntheticMarketSpec:
    text = files("orderbook_epf.data").joinpath("synthetic_default.json").read_text() \
        if spec_path is None else Path(spec_path).read_text(encoding="utf-8")
    spec = SyntheticMarketSpec.from_json(text)
    if seed is not None:
        spec = SyntheticMarketSpec.from_dict({**json.loads(spec.to_json()), "seed": seed})
    bundle = generate_synthetic(spec)
    save_bundle(bundle, out)
    atomic_write_text(Path(out) / "spec.json", spec.to_json())
    print(f"generated {len(bundle.books)} auction hours into {out}")
    return spec


def train_window(bundle, test_fraction):
    """Eligible hours and the first hour of the held-back test period."""
    hours = eligible_hours(bundle.books, bundle.fundamentals, bundle.calendars)
    if len(hours) < 2:
        raise RuntimeError("fewer than two hours have complete inputs")
    cut = split_point(len(hours), test_fraction)
    return hours, hours[cut]


def run_partition(data, vstar, test_fraction, out):
    if not vstar > 0:
        raise UsageError(f"--vstar must be > 0, got {vstar}")
    _check_fraction(test_fraction)
    bundle = load_bundle(data)
    _, test_start = train_window(bundle, test_fraction)
    train_books = [bundle.books[t] for t in sorted(bundle.books) if t < test_start]
    scheme = fit_scheme(train_books, vstar)
    save_scheme(scheme, out)
    print(f"price-class scheme: {scheme.n_classes} classes from {len(train_books)} training books "
          f"(test period starts {test_start}) -> {out}")
    return scheme


def run_features(data, scheme_path, out):
    bundle = load_bundle(data)
    scheme = load_scheme(scheme_path)
    fm = build_feature_matrix(bundle.books, bundle.fundamentals, bundle.calendars, scheme)
    digest = hashlib.sha256(dumps_scheme(scheme).encode()).hexdigest()[:16]
    save_feature_matrix(fm, out, {"n_classes": scheme.n_classes, "scheme_sha256": digest})
    print(f"feature matrix: {fm.X.shape[0]} rows x {fm.X.shape[1]} features -> {out}")
    return fm


def run_train(features_path, grid_path, seed, test_fraction, workers, out):
    _check_fraction(test_fraction)
    grid_text, grid = _read_grid(grid_path)
    fm, _ = load_feature_matrix(features_path)
    train, _ = chronological_split(fm, test_fraction)
    out = Path(out)
    ids = [f"c{i:03d}" for i in range(len(grid))]
    groups: dict[str, list[int]] = {}
    for i, cfg in enumerate(grid):
        groups.setdefault(cfg.name, []).append(i)
    for name, idx in groups.items():
        if len({grid[i].features for i in idx}) > 1:
            raise ConfigError(f"grid entries named {name!r} use different feature sets")
    needs_importance = [n for n, idx in groups.items() if grid[idx[0]].top_n is not None]
    if needs_importance and not any(grid[i].family == "random_forest" for i in range(len(grid))):
        raise ConfigError(f"{needs_importance[0]}: top:N feature sets need a random_forest entry")
    order = [n for n in groups if n not in needs_importance] + needs_importance

    rows: dict[int, object] = {}
    summary: dict = {"models": {}, "failed": []}
    best_rf = None  # (cv, name, model)
    importance = None
    finals = {}
    for name in order:
        idx = groups[name]
        if name in needs_importance and importance is None:
            if best_rf is None:
                summary["failed"].append({"model": name, "error": "no random forest was trained"})
                continue
            importance = rf_importance(best_rf[2])
        configs = [grid[i] for i in idx]
        result = grid_search(train.X, train.y, configs, CV_FOLDS, seed, train.names, importance,
                             workers, [ids[i] for i in idx])
        for i, r in zip(idx, result.rows):
            rows[i] = r
        if result.best < 0:
            summary["failed"].append({"model": name, "error": "every grid cell failed"})
            continue
        best = result.rows[result.best]
        cols = resolve_columns(best.config, train.names, importance)
        try:
            model = fit(best.config, train.X[:, cols], train.y, seed, [train.names[c] for c in cols])
        except Exception as exc:
            summary["failed"].append({"model": name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        finals[name] = model
        summary["models"][name] = {"config_id": best.config_id, "cv_rmse": best.mean_rmse,
                                   "file": f"models/{_safe_name(name)}.model",
                                   "n_features": len(cols)}
        if best.config.family == "random_forest" and (best_rf is None or best.mean_rmse < best_rf[0]):
            best_rf = (best.mean_rmse, name, model)

    cv_rows = [rows[i] for i in sorted(rows)]
    atomic_write_text(out / "cv_table.csv", cv_table_csv(cv_rows, CV_FOLDS))
    for name, model in finals.items():
        save_model(model, out / summary["models"][name]["file"])
    if best_rf is not None:
        ranking = rf_importance(best_rf[2])
        atomic_write_text(out / "feature_importance.csv", "feature,importance\n" + "".join(
            f"{n},{w!r}\n" for n, w in ranking))
        summary["importance_source"] = best_rf[1]
    summary["order"] = [n for n in groups if n in finals]
    summary["grid_sha256"] = hashlib.sha256(grid_text.encode()).hexdigest()
    atomic_write_text(out / "train_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")

    n_failed_cells = sum(r.status != "ok" for r in cv_rows)
    print(f"grid search: {len(cv_rows)} cells, {n_failed_cells} failed, "
          f"{len(finals)} models trained -> {out}")
    for name in order:
        if name in summary["models"]:
            m = summary["models"][name]
            print(f"  {name:<22} best {m['config_id']}  cv rmse {m['cv_rmse']:.3f}")
    for f in summary["failed"]:
        print(f"  {f['model']:<22} FAILED: {f['error']}", file=sys.stderr)
    return not summary["failed"]


def run_evaluate(features_path, models_dir, data, test_fraction, out):
    _check_fraction(test_fraction)
    fm, _ = load_feature_matrix(features_path)
    train, test = chronological_split(fm, test_fraction)
    models_dir = Path(models_dir)
    summary_path = models_dir / "train_summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text())
        listed = [(n, models_dir / summary["models"][n]["file"]) for n in summary["order"]]
    else:
        listed = [(p.stem, p) for p in sorted((models_dir / "models").glob("*.model"))]
    if data is not None:
        calendars = load_calendars(Path(data) / CALENDAR_FILE)
    else:
        calendars = default_calendars(fm.hours[0].date, fm.hours[-1].date)
    pos = {n: i for i, n in enumerate(fm.names)}
    entries = []
    for name, path in listed:
        model = load_model(path)
        missing = [f for f in model.feature_names if f not in pos]
        if missing:
            raise RuntimeError(f"model {name!r} needs features absent from {features_path}: {missing[:3]}")
        entries.append(SuiteEntry(name, model, np.array([pos[f] for f in model.feature_names])))
    history = dict(zip(fm.hours, fm.y))
    rows = evaluate_suite(train, test, entries, history, calendars)
    atomic_write_text(Path(out) / "comparison.csv", comparison_csv(rows))
    print(format_comparison(rows))
    return rows


def run_pipeline(args) -> bool:
    out = Path(args.out)
    if args.manifest:
        m = json.loads(Path(args.manifest).read_text())
        for key in ("data", "spec", "vstar", "grid", "seed", "test_fraction"):
            setattr(args, key.replace("-", "_"), m[key])
        if m.get("grid_sha256") and args.grid and _sha256(args.grid) != m["grid_sha256"]:
            raise UsageError(f"grid file {args.grid} changed since the manifest was written")
    if not args.vstar > 0:
        raise UsageError(f"--vstar must be > 0, got {args.vstar}")
    _check_fraction(args.test_fraction)
    grid_text, _ = _read_grid(args.grid)  # validate before writing anything
    seed = args.seed
    t0 = time.perf_counter()
    if args.data is None:
        data_dir = out / "data"
        run_generate(args.spec, data_dir, seed)
    else:
        data_dir = Path(args.data)
        recorded = m.get("inputs_sha256", {}) if args.manifest else {}
        for f, digest in recorded.items():
            if _sha256(data_dir / f) != digest:
                raise UsageError(f"{data_dir / f} differs from the file recorded in the manifest")
    manifest = {
        "tool": "orderbook-epf", "version": __version__,
        "data": None if args.data is None else str(args.data),
        "spec": None if args.spec is None else str(args.spec),
        "grid": None if args.grid is None else str(args.grid),
        "grid_sha256": hashlib.sha256(grid_text.encode()).hexdigest(),
        "vstar": args.vstar, "seed": seed, "test_fraction": args.test_fraction,
        "cv_folds": CV_FOLDS,
        "inputs_sha256": {f: _sha256(data_dir / f) for f in ("books.csv", "fundamentals.csv", "calendar.csv")},
    }
    atomic_write_text(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    run_partition(data_dir, args.vstar, args.test_fraction, out / "scheme.csv")
    run_features(data_dir, out / "scheme.csv", out / "features.csv")
    ok = run_train(out / "features.csv", args.grid, seed, args.test_fraction, args.workers, out)
    run_evaluate(out / "features.csv", out, data_dir, args.test_fraction, out)
    print(f"pipeline finished in {time.perf_counter() - t0:.1f} s; manifest {out / MANIFEST}")
    return ok


# --- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orderbook-epf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--spec", help="synthetic market spec (JSON); default: shipped spec")
    g.add_argument("--seed", type=int, help="override the spec's seed")
    g.add_argument("--out", required=True, help="output directory")

    pa = sub.add_parser("partition", help="fit price classes on the training period")
    pa.add_argument("--data", required=True)
    pa.add_argument("--vstar", type=float, default=1000.0, help="target class volume in MWh")
    pa.add_argument("--test-fraction", type=float, default=0.2)
    pa.add_argument("--out", required=True, help="scheme file to write")

    f = sub.add_parser("features", help="build the feature matrix")
    f.add_argument("--data", required=True)
    f.add_argument("--scheme", required=True)
    f.add_argument("--out", required=True, help="feature CSV to write")

    t = sub.add_parser("train", help="grid search and final model fits")
    t.add_argument("--features", required=True)
    t.add_argument("--grid", help="grid file (JSON); default: shipped pipeline grid")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--test-fraction", type=float, default=0.2)
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--out", required=True, help="output directory")

    e = sub.add_parser("evaluate", help="in-sample / out-of-sample comparison")
    e.add_argument("--features", required=True)
    e.add_argument("--models", required=True, help="output directory of a train run")
    e.add_argument("--data", help="dataset directory (for its calendar)")
    e.add_argument("--test-fraction", type=float, default=0.2)
    e.add_argument("--out", required=True)

    pl = sub.add_parser("pipeline", help="run every stage")
    pl.add_argument("--data", help="dataset directory; default: generate synthetic data")
    pl.add_argument("--spec", help="synthetic spec used when --data is absent")
    pl.add_argument("--vstar", type=float, default=1000.0)
    pl.add_argument("--grid")
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--test-fraction", type=float, default=0.2)
    pl.add_argument("--workers", type=int, default=1)
    pl.add_argument("--manifest", help="re-run the settings recorded in a manifest")
    pl.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RankDeficientWarning)
            if args.command == "generate":
                run_generate(args.spec, args.out, args.seed)
            elif args.command == "partition":
                run_partition(args.data, args.vstar, args.test_fraction, args.out)
            elif args.command == "features":
                run_features(args.data, args.scheme, args.out)
            elif args.command == "train":
                if not run_train(args.features, args.grid, args.seed, args.test_fraction,
                                 args.workers, args.out):
                    return 1
            elif args.command == "evaluate":
                run_evaluate(args.features, args.models, args.data, args.test_fraction, args.out)
            elif args.command == "pipeline":
                if not run_pipeline(args):
                    return 1
    except (UsageError, ConfigError) as exc:
        print(f"orderbook-epf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"orderbook-epf {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
