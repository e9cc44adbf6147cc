"""Command-line interface: subcommand wiring, config files, error reporting,
and artifact emission."""

import json

import pytest

from curvetune.cli import main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture()
def data_csv(tmp_path):
    out = tmp_path / "data"
    assert run_cli("gen-data", "--out", str(out), "--n", "128", "--seed", "3") == 0
    return out / "data.csv"


@pytest.fixture()
def ckpt(tmp_path, data_csv):
    out = tmp_path / "train"
    assert run_cli("train", "--out", str(out), "--data", str(data_csv),
                   "--steps", "300", "--seed", "3") == 0
    return out / "model.ckpt.json"


class TestGenData:
    def test_writes_csv_and_manifest(self, data_csv):
        lines = data_csv.read_text().splitlines()
        assert lines[0].startswith("x1[") and len(lines) == 129
        manifest = json.loads((data_csv.parent / "manifest.json").read_text())
        assert "data.csv" in {f["name"] for f in manifest["outputs"]}

    def test_sine_task(self, tmp_path):
        out = tmp_path / "sine"
        assert run_cli("gen-data", "--out", str(out), "--task", "sine", "--n", "50") == 0
        assert (out / "data.csv").read_text().splitlines()[0].count(",") == 2

    def test_env_seed_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CTKIT_SEED", "777")
        out = tmp_path / "env"
        assert run_cli("gen-data", "--out", str(out), "--n", "10") == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 777


class TestTrainAndDownstream:
    def test_train_emits_ckpt_and_curve(self, ckpt):
        assert ckpt.exists()
        curve = (ckpt.parent / "loss_curve.csv").read_text().splitlines()
        assert curve[0].startswith("step[")
        assert len(curve) >= 2

    def test_steer_grid_rows(self, tmp_path, data_csv, ckpt):
        out = tmp_path / "steer"
        assert run_cli("steer", "--out", str(out), "--data", str(data_csv),
                       "--net", str(ckpt), "--beta-lo", "0.7", "--beta-hi", "1.0",
                       "--step", "0.01") == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert len(rows) == 1 + 31
        best = json.loads((out / "steer_result.json").read_text())
        assert 0.7 <= best["best_beta"] <= 1.0

    def test_finetune_tct(self, tmp_path, data_csv, ckpt):
        out = tmp_path / "tct"
        assert run_cli("finetune-tct", "--out", str(out), "--data", str(data_csv),
                       "--net", str(ckpt), "--steps", "50") == 0
        summary = json.loads((out / "tct_summary.json").read_text())
        assert summary["trainable_params"] == 14

    def test_finetune_lora(self, tmp_path, data_csv, ckpt):
        out = tmp_path / "lora"
        assert run_cli("finetune-lora", "--out", str(out), "--data", str(data_csv),
                       "--net", str(ckpt), "--steps", "50", "--r", "1",
                       "--alpha", "1.0") == 0
        summary = json.loads((out / "lora_summary.json").read_text())
        assert summary["trainable_params"] == 17

    def test_probe(self, tmp_path, data_csv, ckpt):
        out = tmp_path / "probe"
        assert run_cli("probe", "--out", str(out), "--data", str(data_csv),
                       "--net", str(ckpt), "--steps", "50") == 0
        assert (out / "model.ckpt.json").exists()

    def test_circle_error_reports_both_values(self, tmp_path, ckpt):
        out = tmp_path / "circ"
        assert run_cli("circle-error", "--out", str(out), "--net", str(ckpt)) == 0
        rep = json.loads((out / "circle_error.json").read_text())
        assert rep["relative_gap"] <= 1e-6
        assert rep["total_closed"] > 0 and rep["total_quadrature"] > 0
        assert rep["knots"][0] == 0.0 and rep["knots"][-1] == 1.0

    def test_diagnose(self, tmp_path, ckpt):
        out = tmp_path / "diag"
        assert run_cli("diagnose", "--out", str(out), "--net", str(ckpt),
                       "--n-points", "6") == 0
        rows = (out / "diagnose_curvature.csv").read_text().splitlines()
        assert len(rows) == 7


class TestConfigAndErrors:
    def test_config_file_backfills_defaults(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n = 20  # even\ntask = sine\n")
        out = tmp_path / "cfgout"
        assert run_cli("gen-data", "--out", str(out), "--config", str(cfg)) == 0
        assert len((out / "data.csv").read_text().splitlines()) == 21

    def test_flag_overrides_config_with_warning(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n=20\n")
        out = tmp_path / "cfgout2"
        assert run_cli("gen-data", "--out", str(out), "--config", str(cfg),
                       "--n", "30") == 0
        assert "warning" in capsys.readouterr().err
        assert len((out / "data.csv").read_text().splitlines()) == 31

    def test_malformed_config_reports_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just a line\n")
        assert run_cli("gen-data", "--out", str(tmp_path / "o"),
                       "--config", str(cfg)) == 2
        assert "error:config_parse_error" in capsys.readouterr().err

    def test_missing_input_file(self, tmp_path, capsys):
        assert run_cli("circle-error", "--out", str(tmp_path / "o"),
                       "--net", str(tmp_path / "nope.json")) == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_odd_n_fails_with_reason(self, tmp_path, capsys):
        assert run_cli("gen-data", "--out", str(tmp_path / "o"), "--n", "7") == 2
        assert capsys.readouterr().err.startswith("error:ValueError")


class TestDeterminism:
    def test_gen_data_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run_cli("gen-data", "--out", str(out), "--n", "64", "--seed", "5") == 0
        assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()

    def test_train_rerun_byte_identical(self, tmp_path, data_csv):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run_cli("train", "--out", str(out), "--data", str(data_csv),
                           "--steps", "120", "--seed", "9") == 0
        for name in ("model.ckpt.json", "loss_curve.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
