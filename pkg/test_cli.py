"""
Tests for the `ped` command line, driven through click's CliRunner.
"""

import csv
import io
import json

import numpy as np
import pytest
from click.testing import CliRunner

from ped_prune import __version__
from ped_prune.cli import COMPARE_CSV_HEADER, cli
from ped_prune.functions.io.dumps import load_labels, write_feature_dump, write_labels
from ped_prune.types import DependenceProfile, FeatureMatrix, LabelVector, UnitDependence

SMALL_TOY = ["--units", "8", "--width", "8", "--n", "300", "--epochs", "4", "--retrain-epochs", "1"]


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, args):
    return runner.invoke(cli, [str(a) for a in args])


def write_units(tmp_path, separations, n_per_class=15):
    rng = np.random.default_rng(0)
    labels = np.repeat([1, 2], n_per_class)
    paths = []
    for i, s in enumerate(separations):
        data = rng.normal(size=(2 * n_per_class, 2)) + s * (labels == 2)[:, None]
        paths.append(write_feature_dump(tmp_path / f"u{i}.pedf", FeatureMatrix(data=data, dtype="f32")))
    label_path = write_labels(tmp_path / "labels.pedl", LabelVector(labels=labels))
    return paths, label_path


def write_profile(tmp_path, values):
    path = tmp_path / "profile.json"
    profile = DependenceProfile(
        units=[UnitDependence(index=i, dependence=v, arg_pair=(1, 2)) for i, v in enumerate(values)],
        n_used=30,
    )
    path.write_text(profile.model_dump_json())
    return path


def test_version(runner):
    result = invoke(runner, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout


# ============================================================================
# ESTAT
# ============================================================================

def test_estat_profiles_every_dump(runner, tmp_path):
    paths, labels = write_units(tmp_path, [0.0, 2.0, 4.0])
    result = invoke(runner, ["estat", *paths, "--labels", labels])
    assert result.exit_code == 0, result.stderr
    payload = json.loads(result.stdout)
    assert [u["index"] for u in payload["units"]] == [0, 1, 2]
    values = [u["dependence"] for u in payload["units"]]
    assert values == sorted(values)
    assert payload["n_used"] == 30
    assert payload["config"]["dependence"]["variant"] == "v"


def test_estat_length_mismatch(runner, tmp_path):
    paths, _ = write_units(tmp_path, [1.0])
    labels = write_labels(tmp_path / "short.pedl", LabelVector(labels=[1, 2, 1]))
    result = invoke(runner, ["estat", *paths, "--labels", labels])
    assert result.exit_code == 2
    assert "LengthMismatch" in result.stderr
    assert result.stdout == ""


def test_estat_u_variant_rejects_singleton_class(runner, tmp_path):
    features = write_feature_dump(tmp_path / "f.pedf", FeatureMatrix(data=[[0.0], [1.0], [2.0]]))
    labels = write_labels(tmp_path / "y.pedl", LabelVector(labels=[1, 2, 2]))
    result = invoke(runner, ["estat", features, "--labels", labels, "--variant", "u"])
    assert result.exit_code == 2
    assert "TooFewSamples" in result.stderr


def test_estat_bad_dump(runner, tmp_path):
    bad = tmp_path / "bad.pedf"
    bad.write_bytes(b"NOPE" + b"\0" * 20)
    _, labels = write_units(tmp_path, [0.0])
    result = invoke(runner, ["estat", bad, "--labels", labels])
    assert result.exit_code == 2
    assert "BadMagic" in result.stderr
    assert "@ byte 0" in result.stderr


def test_estat_non_utf8_csv_labels(runner, tmp_path):
    paths, _ = write_units(tmp_path, [1.0])
    labels = tmp_path / "labels.csv"
    labels.write_bytes(b"label\n" + b"1\n" * 15 + b"\xe9\n" * 15)
    result = invoke(runner, ["estat", *paths, "--labels", labels])
    assert result.exit_code == 2
    assert "CsvParseError" in result.stderr
    assert "@ byte 36" in result.stderr
    assert result.stdout == ""


# ============================================================================
# SELECT
# ============================================================================

@pytest.mark.parametrize("strategy, alphas", [("cluster-head", [1, 0, 1]), ("top-k", [1, 1, 0])])
def test_select(runner, tmp_path, strategy, alphas):
    profile = write_profile(tmp_path, [0.9, 0.88, 0.1])
    result = invoke(runner, ["select", profile, "--k", 2, "--strategy", strategy])
    assert result.exit_code == 0, result.stderr
    payload = json.loads(result.stdout)
    assert payload["alphas"] == alphas
    assert payload["config"]["strategy"] == strategy


def test_select_rejects_out_of_range_k(runner, tmp_path):
    profile = write_profile(tmp_path, [0.9, 0.88, 0.1])
    result = invoke(runner, ["select", profile, "--k", 5])
    assert result.exit_code == 2
    assert "BadK" in result.stderr


def test_select_requires_k(runner, tmp_path):
    result = invoke(runner, ["select", write_profile(tmp_path, [0.9, 0.1])])
    assert result.exit_code == 2


def test_offline_pipeline(runner, tmp_path):
    """train -> dumps -> estat -> select -> estat on the survivors."""
    dumps = tmp_path / "dumps"
    result = invoke(runner, ["toynet", "train", "--units", 4, "--width", 6, "--n", 200, "--epochs", 3,
                             "--seed", 3, "--dump-dir", dumps])
    assert result.exit_code == 0, result.stderr
    trained = json.loads(result.stdout)
    assert len(trained["dumps"]) == 4

    profile = tmp_path / "profile.json"
    result = invoke(runner, ["estat", *trained["dumps"], "--labels", trained["labels"], "--out", profile])
    assert result.exit_code == 0, result.stderr

    policy = tmp_path / "policy.json"
    result = invoke(runner, ["select", profile, "--k", 2, "--out", policy])
    assert result.exit_code == 0, result.stderr
    kept = json.loads(policy.read_text())["active_set"]
    assert len(kept) == 2

    survivors = [trained["dumps"][i] for i in kept]
    result = invoke(runner, ["estat", *survivors, "--labels", trained["labels"], "--policy", policy])
    assert result.exit_code == 0, result.stderr
    second = json.loads(result.stdout)
    assert [u["index"] for u in second["units"]] == kept
    assert second["stage"] == 1
    assert second["n_units"] == 4


def test_estat_policy_must_match_dump_count(runner, tmp_path):
    paths, labels = write_units(tmp_path, [0.0, 1.0])
    policy = tmp_path / "policy.json"
    policy.write_text(json.dumps({"alphas": [1, 1, 1], "stage": 0}))
    result = invoke(runner, ["estat", *paths, "--labels", labels, "--policy", policy])
    assert result.exit_code == 2


# ============================================================================
# TOYNET
# ============================================================================

def test_ped_run_decrement(runner, tmp_path):
    out = tmp_path / "run.json"
    result = invoke(runner, ["toynet", "ped-run", *SMALL_TOY, "--stages", 4, "--seed", 7, "--out", out])
    assert result.exit_code == 0, result.stderr
    payload = json.loads(out.read_text())
    assert [s["active_count"] for s in payload["stages"]] == [7, 6, 5, 4]
    assert all("wall_time" not in s for s in payload["stages"])
    assert payload["baseline"]["param_count"] > payload["stages"][-1]["param_count"]

    rows = list(csv.reader(io.StringIO((tmp_path / "run.csv").read_text(), newline="")))
    assert rows[0] == ["stage", "params", "flops", "accuracy"]
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2, 3]


def test_ped_run_is_byte_identical_across_runs(runner, tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.json"
        result = invoke(runner, ["toynet", "ped-run", *SMALL_TOY, "--stages", 2, "--strategy", "random",
                                 "--seed", 11, "--out", out])
        assert result.exit_code == 0, result.stderr
        outputs.append((out.read_bytes(), out.with_suffix(".csv").read_bytes()))
    assert outputs[0] == outputs[1]


def test_ped_run_timings(runner):
    result = invoke(runner, ["toynet", "ped-run", *SMALL_TOY, "--stages", 1, "--timings"])
    assert result.exit_code == 0, result.stderr
    assert json.loads(result.stdout)["stages"][0]["wall_time"] >= 0


def test_ped_run_too_many_stages(runner):
    result = invoke(runner, ["toynet", "ped-run", "--units", 2, "--width", 4, "--n", 100, "--epochs", 1,
                             "--stages", 2])
    assert result.exit_code == 2
    assert "ScheduleExhausted" in result.stderr


def test_config_file_is_overridden_by_flags(runner, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "seed": 5,
        "network": {"units": 5, "width": 6},
        "data": {"n": 200},
        "training": {"epochs": 2, "retrain_epochs": 1},
        "schedule": {"n_stages": 2},
    }))
    result = invoke(runner, ["toynet", "ped-run", "--config", config, "--units", 6])
    assert result.exit_code == 0, result.stderr
    payload = json.loads(result.stdout)
    assert payload["config"]["network"]["units"] == 6
    assert payload["config"]["seed"] == 5
    assert [s["active_count"] for s in payload["stages"]] == [5, 4]


def test_invalid_config_names_field(runner, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"network": {"units": 0}}))
    result = invoke(runner, ["toynet", "train", "--config", config])
    assert result.exit_code == 2
    assert "network.units" in result.stderr


def test_grad_check_passes(runner):
    result = invoke(runner, ["toynet", "grad-check", "--units", 3, "--width", 4, "--classes", 3,
                             "--eps", 1e-6, "--seed", 1])
    assert result.exit_code == 0, result.stderr
    payload = json.loads(result.stdout)
    assert payload["passed"] is True
    assert payload["max_relative_error"] < 1e-4


def test_grad_check_with_pruned_units(runner):
    result = invoke(runner, ["toynet", "grad-check", "--units", 3, "--width", 4, "--composition", "dense",
                             "--alphas", "1,0,1", "--eps", 1e-6, "--seed", 2])
    assert result.exit_code == 0, result.stderr


def test_grad_check_failure_exits_numerical(runner):
    result = invoke(runner, ["toynet", "grad-check", "--units", 2, "--width", 3, "--tolerance", 1e-30])
    assert result.exit_code == 3
    assert "GradCheckFailed" in result.stderr
    assert json.loads(result.stdout)["passed"] is False


def test_gen_data_is_balanced(runner, tmp_path):
    out_dir = tmp_path / "data"
    result = invoke(runner, ["toynet", "gen-data", "--kind", "blobs", "--n", 100, "--classes", 4,
                             "--out-dir", out_dir])
    assert result.exit_code == 0, result.stderr
    assert json.loads(result.stdout)["class_counts"] == [25, 25, 25, 25]
    labels = load_labels(out_dir / "labels.pedl")
    assert np.bincount(labels.labels)[1:].tolist() == [25, 25, 25, 25]


# ============================================================================
# COMPARE
# ============================================================================

def test_compare_csv(runner):
    result = invoke(runner, ["compare", "--strategies", "cluster-head,random", "--seeds", "0,1,2",
                             "--stages", 3, "--units", 5, "--width", 6, "--n", 200, "--epochs", 3,
                             "--retrain-epochs", 1])
    assert result.exit_code == 0, result.stderr
    rows = list(csv.reader(io.StringIO(result.stdout, newline="")))
    assert rows[0] == COMPARE_CSV_HEADER
    assert len(rows) == 1 + 2 * 3 * 3
    assert [r[0] for r in rows[1:]] == ["cluster-head"] * 9 + ["random"] * 9
    for row in rows[1:]:
        assert 0 < float(row[3]) < 100
        assert 0 <= float(row[5]) <= 1


def test_compare_rejects_unknown_strategy(runner):
    result = invoke(runner, ["compare", "--strategies", "cluster-head,magic", "--stages", 1])
    assert result.exit_code == 2
    assert "strategies" in result.stderr
