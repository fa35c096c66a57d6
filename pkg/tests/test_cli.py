"""End-to-end command line pipeline on a small simulated field set."""
import json

import numpy as np
import pytest

from stickslip.cli import PREDICTION_COLUMNS, main
from stickslip.transfer import REPORT_COLUMNS


def well_spec(wid, fid, omega, seed, duration=480.0, **overrides):
    spec = {
        "well_id": wid, "field_id": fid, "trajectory": "vertical",
        "duration_s": duration, "string_stiffness": 600.0,
        "string_damping": 40.0, "bit_inertia": 400.0,
        "static_friction_torque": 6000.0, "kinetic_friction_torque": 3000.0,
        "velocity_weakening_rate": 0.2,
        "surface_speed_profile": [[0.0, omega]],
        "wob_profile": [[0.0, 8.0]], "flow_profile": [[0.0, 2000.0]],
        "torque_gain": 1.0, "torque_offset": 0.0,
        "noise_std": {"surface_torque": 0.5}, "seed": seed,
    }
    spec.update(overrides)
    return spec


ASSIGNMENT = {"w1": "train", "w2": "train", "w3": "train",
              "w4": "validation", "w5": "test"}

TRAIN_CONFIG = {
    "kind": "baseline", "epochs": 2, "batch_size": 8,
    "hidden_layer_count": 0, "units": 4, "learning_rate": 1e-3,
    "regularization_coefficient": 1e-4, "grl_lambda": None, "alpha": None,
    "seeds": [0], "validation_fraction": 0.1,
    "checkpoint_policy": "best-validation-mse",
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """simulate -> prepare -> train(x2) -> evaluate, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    spec_dir = root / "specs"
    spec_dir.mkdir()
    wells = [("w1", "A", 10.0, 1), ("w2", "A", 5.0, 2), ("w3", "B", 4.0, 3),
             ("w4", "C", 10.0, 4), ("w5", "D", 5.0, 5)]
    for wid, fid, omega, seed in wells:
        (spec_dir / f"{wid}.json").write_text(
            json.dumps(well_spec(wid, fid, omega, seed)))
    (root / "assign.json").write_text(json.dumps(ASSIGNMENT))
    (root / "cfg.json").write_text(json.dumps(TRAIN_CONFIG))
    (root / "cfg_adg.json").write_text(
        json.dumps({**TRAIN_CONFIG, "kind": "adg", "grl_lambda": 1.0}))

    assert main(["simulate", "--spec-dir", str(spec_dir),
                 "--out", str(root / "wells")]) == 0
    assert main(["prepare", "--wells", str(root / "wells"),
                 "--assignment", str(root / "assign.json"),
                 "--out", str(root / "split")]) == 0
    assert main(["train", "--split", str(root / "split"),
                 "--config", str(root / "cfg.json"),
                 "--out", str(root / "run_base")]) == 0
    assert main(["train", "--split", str(root / "split"),
                 "--config", str(root / "cfg_adg.json"),
                 "--out", str(root / "run_adg")]) == 0
    assert main(["evaluate", "--checkpoint", str(root / "run_base" / "checkpoint"),
                 "--split", str(root / "split"),
                 "--out", str(root / "eval")]) == 0
    return root


def test_simulate_writes_manifest_and_csvs(pipeline):
    wells_dir = pipeline / "wells"
    manifest = json.loads((wells_dir / "manifest.json").read_text())
    assert [w["well_id"] for w in manifest["wells"]] == \
        ["w1", "w2", "w3", "w4", "w5"]
    for entry in manifest["wells"]:
        assert (wells_dir / entry["file"]).is_file()
        assert entry["seconds"] == 480


def test_simulate_rerun_is_byte_identical(pipeline, tmp_path):
    assert main(["simulate", "--spec-dir", str(pipeline / "specs"),
                 "--out", str(tmp_path / "again")]) == 0
    for name in ("w1.csv", "w5.csv", "manifest.json"):
        assert (tmp_path / "again" / name).read_bytes() == \
            (pipeline / "wells" / name).read_bytes()


def test_simulate_empty_dir_exits_2(tmp_path, capsys):
    empty = tmp_path / "none"
    empty.mkdir()
    assert main(["simulate", "--spec-dir", str(empty),
                 "--out", str(tmp_path / "out")]) == 2
    assert "no well spec" in capsys.readouterr().err


def test_simulate_malformed_spec_names_file(tmp_path, capsys):
    bad = tmp_path / "specs"
    bad.mkdir()
    spec = well_spec("wx", "A", 10.0, 1)
    del spec["bit_inertia"]
    (bad / "wx.json").write_text(json.dumps(spec))
    assert main(["simulate", "--spec-dir", str(bad),
                 "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "wx.json" in err and "bit_inertia" in err


def test_simulate_divergence_exits_3(tmp_path, capsys):
    unstable = tmp_path / "specs"
    unstable.mkdir()
    spec = well_spec("boom", "A", 10.0, 1, duration=60.0,
                     string_stiffness=1e300, bit_inertia=1e-6)
    (unstable / "boom.json").write_text(json.dumps(spec))
    assert main(["simulate", "--spec-dir", str(unstable),
                 "--out", str(tmp_path / "out")]) == 3
    assert "diverged" in capsys.readouterr().err


def test_prepare_prints_histogram(pipeline, capsys, tmp_path):
    assert main(["prepare", "--wells", str(pipeline / "wells"),
                 "--assignment", str(pipeline / "assign.json"),
                 "--out", str(tmp_path / "split")]) == 0
    out = capsys.readouterr().out
    counts = {}
    for line in out.splitlines():
        if line.startswith("class "):
            cls, n = line.removeprefix("class ").split(": ")
            counts[int(cls)] = int(n)
    assert set(counts) == {1, 2, 3, 4}
    assert f"total: {sum(counts.values())} windows" in out


def test_prepare_field_straddle_exits_2(pipeline, tmp_path, capsys):
    bad = dict(ASSIGNMENT)
    bad["w2"] = "test"              # field A now straddles train and test
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["prepare", "--wells", str(pipeline / "wells"),
                 "--assignment", str(tmp_path / "bad.json"),
                 "--out", str(tmp_path / "split")]) == 2
    assert "'A'" in capsys.readouterr().err


def test_train_run_directory_layout(pipeline):
    run = pipeline / "run_base"
    assert (run / "config.json").is_file()
    assert (run / "training_log.csv").is_file()
    assert (run / "checkpoint" / "manifest.json").is_file()
    config = json.loads((run / "config.json").read_text())
    assert config["kind"] == "baseline" and config["seed"] == 0


def test_train_missing_config_exits_2(pipeline, tmp_path, capsys):
    assert main(["train", "--split", str(pipeline / "split"),
                 "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "run")]) == 2
    assert "missing.json" in capsys.readouterr().err


def test_evaluate_artifacts(pipeline):
    eval_dir = pipeline / "eval"
    lines = (eval_dir / "predictions.csv").read_text().splitlines()
    assert lines[0] == ",".join(PREDICTION_COLUMNS)
    assert len(lines) == 1 + 8          # 8 test windows from w5
    report = json.loads((eval_dir / "eval_report.json").read_text())
    assert set(report["wells"]) == {"w5"}
    well = report["wells"]["w5"]
    assert set(well) == {"mse", "ndtw", "confusion", "severe_recall"}
    assert np.array(well["confusion"]).shape == (4, 4)
    assert report["overall"]["n_windows"] == 8


def test_evaluate_is_deterministic(pipeline, tmp_path):
    assert main(["evaluate", "--checkpoint",
                 str(pipeline / "run_base" / "checkpoint"),
                 "--split", str(pipeline / "split"),
                 "--out", str(tmp_path / "eval2")]) == 0
    assert (tmp_path / "eval2" / "predictions.csv").read_bytes() == \
        (pipeline / "eval" / "predictions.csv").read_bytes()
    assert (tmp_path / "eval2" / "eval_report.json").read_bytes() == \
        (pipeline / "eval" / "eval_report.json").read_bytes()


def test_report_emits_charts_and_json(pipeline):
    assert main(["report", "--run", str(pipeline / "eval")]) == 0
    charts = sorted((pipeline / "eval" / "charts").iterdir())
    assert [p.name for p in charts] == ["series_w5.svg"]
    report = json.loads((pipeline / "eval" / "report.json").read_text())
    assert report["charts"] == ["charts/series_w5.svg"]
    assert "evaluation" in report


def test_report_missing_predictions_exits_2(tmp_path, capsys):
    assert main(["report", "--run", str(tmp_path)]) == 2
    assert "predictions" in capsys.readouterr().err


def test_transfer_writes_report(pipeline, tmp_path):
    assert main(["transfer",
                 "--checkpoint", str(pipeline / "run_base" / "checkpoint"),
                 "--checkpoint", str(pipeline / "run_adg" / "checkpoint"),
                 "--split", str(pipeline / "split"),
                 "--out", str(tmp_path / "tr"),
                 "--fraction", "0.2", "--epochs-ft", "2"]) == 0
    lines = (tmp_path / "tr" / "transfer_report.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 1 + 2          # one test well x two kinds
    assert lines[1].startswith("w5,adg,") and lines[2].startswith("w5,baseline,")


def test_transfer_duplicate_kind_exits_2(pipeline, tmp_path, capsys):
    ckpt = str(pipeline / "run_base" / "checkpoint")
    assert main(["transfer", "--checkpoint", ckpt, "--checkpoint", ckpt,
                 "--split", str(pipeline / "split"),
                 "--out", str(tmp_path / "tr")]) == 2
    assert "duplicate" in capsys.readouterr().err


def test_gridsearch_two_stage_protocol(pipeline, tmp_path):
    grid = {"regularization_values": [1e-3, 1e-4], "hidden_layer_values": [0],
            "lambda_values": [1.0], "alpha_values": [0.1],
            "validation_cases": [ASSIGNMENT], "seeds_per_cell": 1}
    (tmp_path / "grid.json").write_text(json.dumps(grid))
    assert main(["gridsearch", "--wells", str(pipeline / "wells"),
                 "--config", str(pipeline / "cfg.json"),
                 "--grid", str(tmp_path / "grid.json"),
                 "--stage", "reg", "--out", str(tmp_path / "gs_reg")]) == 0
    recommended = tmp_path / "gs_reg" / "recommended.json"
    assert recommended.is_file()
    assert (tmp_path / "gs_reg" / "grid_results.csv").is_file()
    first = json.loads(recommended.read_text())
    assert first["regularization_coefficient"] in (1e-3, 1e-4)

    assert main(["gridsearch", "--wells", str(pipeline / "wells"),
                 "--config", str(recommended),
                 "--grid", str(tmp_path / "grid.json"),
                 "--stage", "arch", "--out", str(tmp_path / "gs_arch")]) == 0
    second = json.loads((tmp_path / "gs_arch" / "recommended.json").read_text())
    assert second["hidden_layer_count"] == 0
    assert second["regularization_coefficient"] == \
        first["regularization_coefficient"]


def test_gridsearch_rejects_bad_flags(pipeline, tmp_path, capsys):
    grid = {"regularization_values": [1e-4], "hidden_layer_values": [0],
            "validation_cases": [ASSIGNMENT], "seeds_per_cell": 1}
    (tmp_path / "grid.json").write_text(json.dumps(grid))
    common = ["gridsearch", "--wells", str(pipeline / "wells"),
              "--config", str(pipeline / "cfg.json"),
              "--grid", str(tmp_path / "grid.json"),
              "--out", str(tmp_path / "gs")]
    assert main(common + ["--stage", "bonus"]) == 2
    assert "stage" in capsys.readouterr().err
    assert main(common + ["--stage", "reg", "--workers", "0"]) == 2
    bad_grid = {"regularization_values": [1e-4], "mystery": 1,
                "validation_cases": [ASSIGNMENT]}
    (tmp_path / "bad_grid.json").write_text(json.dumps(bad_grid))
    assert main(["gridsearch", "--wells", str(pipeline / "wells"),
                 "--config", str(pipeline / "cfg.json"),
                 "--grid", str(tmp_path / "bad_grid.json"),
                 "--stage", "reg", "--out", str(tmp_path / "gs2")]) == 2
    assert "mystery" in capsys.readouterr().err
