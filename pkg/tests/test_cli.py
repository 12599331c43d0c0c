import csv
import json
import subprocess
import sys

import pytest

from orderbook_epf.cli import main
from orderbook_epf.data_io import load_bundle, load_feature_matrix
from orderbook_epf.partition import load_scheme

SMALL_SPEC = {"start": "2016-01-01", "end": "2016-03-31", "seed": 5}
SMALL_GRID = {"models": [
    {"family": "ols"},
    {"family": "random_forest", "name": "rf", "rf": {"n_trees": 8}},
    {"family": "mlp", "name": "mlp_top8", "features": "top:8",
     "mlp": {"layer_sizes": [4], "epochs": 3}},
    {"family": "mlp", "name": "mlp_all", "features": "all",
     "grid": {"mlp.learning_rate": [1e6, 1e-3]},
     "mlp": {"layer_sizes": [6], "activation": "relu", "optimizer": "sgd", "epochs": 3}},
]}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.json").write_text(json.dumps(SMALL_SPEC))
    (root / "grid.json").write_text(json.dumps(SMALL_GRID))
    assert main(["generate", "--spec", str(root / "spec.json"), "--out", str(root / "data")]) == 0
    return root


def test_generate_round_trip_and_determinism(workspace, tmp_path):
    bundle = load_bundle(workspace / "data")
    assert len(bundle.books) == 91 * 24
    assert main(["generate", "--spec", str(workspace / "spec.json"), "--out", str(tmp_path)]) == 0
    for name in ("books.csv", "fundamentals.csv", "calendar.csv"):
        assert (tmp_path / name).read_bytes() == (workspace / "data" / name).read_bytes()


def test_malformed_spec_exits_2(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"start": "2016-01-01", "end": "2015-01-01"}')
    assert main(["generate", "--spec", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_data_exits_1(tmp_path):
    assert main(["partition", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "s.csv")]) == 1


def test_bad_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["partition", "--out", str(tmp_path)])
    assert exc.value.code == 2


@pytest.mark.parametrize("vstar", ["0", "-5"])
def test_nonpositive_vstar_is_usage_error(workspace, tmp_path, vstar):
    out = tmp_path / "s.csv"
    assert main(["partition", "--data", str(workspace / "data"), "--vstar", vstar, "--out", str(out)]) == 2
    assert not out.exists()


@pytest.fixture(scope="module")
def staged(workspace):
    data = str(workspace / "data")
    assert main(["partition", "--data", data, "--vstar", "2000", "--out", str(workspace / "scheme.csv")]) == 0
    assert main(["features", "--data", data, "--scheme", str(workspace / "scheme.csv"),
                 "--out", str(workspace / "features.csv")]) == 0
    return workspace


def test_partition_rerun_identical(staged, tmp_path):
    out = tmp_path / "again.csv"
    assert main(["partition", "--data", str(staged / "data"), "--vstar", "2000", "--out", str(out)]) == 0
    assert out.read_bytes() == (staged / "scheme.csv").read_bytes()
    assert load_scheme(out).target_volume == 2000


def test_features_header_matches_scheme(staged, tmp_path):
    fm, meta = load_feature_matrix(staged / "features.csv")
    scheme = load_scheme(staged / "scheme.csv")
    assert int(meta["n_classes"]) == scheme.n_classes
    assert len(fm.names) == scheme.n_classes + 1 + 6 + 18
    out = tmp_path / "f.csv"
    assert main(["features", "--data", str(staged / "data"), "--scheme", str(staged / "scheme.csv"),
                 "--out", str(out)]) == 0
    assert out.read_bytes() == (staged / "features.csv").read_bytes()


def test_train_and_evaluate(staged, capsys):
    out = staged / "run"
    code = main(["train", "--features", str(staged / "features.csv"), "--grid", str(staged / "grid.json"),
                 "--seed", "1", "--out", str(out)])
    assert code == 0  # the diverging cell fails, its group still has a working config
    with open(out / "cv_table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert sum(r["status"].startswith("failed") for r in rows) == 1
    for name in ("ols", "rf", "mlp_top8", "mlp_all"):
        assert (out / "models" / f"{name}.model").exists()
    assert (out / "feature_importance.csv").exists()

    code = main(["evaluate", "--features", str(staged / "features.csv"), "--models", str(out),
                 "--data", str(staged / "data"), "--out", str(out)])
    assert code == 0
    with open(out / "comparison.csv", newline="") as fh:
        comp = list(csv.DictReader(fh))
    assert comp[0]["model"] == "naive" and comp[1]["model"] == "naive"
    assert {r["model"] for r in comp} == {"naive", "ols", "rf", "mlp_top8", "mlp_all"}
    assert "naive" in capsys.readouterr().out


def test_train_fails_when_a_group_fails(staged, tmp_path):
    grid = {"models": [{"family": "ols"}, {"family": "mlp", "name": "doomed", "mlp": {
        "layer_sizes": [6], "activation": "relu", "optimizer": "sgd", "learning_rate": 1e6, "epochs": 3}}]}
    (tmp_path / "g.json").write_text(json.dumps(grid))
    code = main(["train", "--features", str(staged / "features.csv"), "--grid", str(tmp_path / "g.json"),
                 "--out", str(tmp_path / "run")])
    assert code == 1
    assert (tmp_path / "run" / "models" / "ols.model").exists()
    summary = json.loads((tmp_path / "run" / "train_summary.json").read_text())
    assert [f["model"] for f in summary["failed"]] == ["doomed"]


def test_bad_grid_exits_2(staged, tmp_path):
    (tmp_path / "g.json").write_text('{"models": [{"family": "svm"}]}')
    assert main(["train", "--features", str(staged / "features.csv"), "--grid", str(tmp_path / "g.json"),
                 "--out", str(tmp_path / "run")]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "orderbook_epf", "partition", "--data", str(tmp_path),
                        "--vstar", "-1", "--out", str(tmp_path / "x.csv")], capture_output=True, text=True)
    assert r.returncode == 2 and "vstar" in r.stderr
