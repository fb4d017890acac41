import json

import pandas as pd
import pytest

from app.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_SAMPLES, build_parser, main

from conftest import TINY_SCENARIO as TINY


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("KINETIC_UQ_CONFIG_PATH", raising=False)
    monkeypatch.delenv("KINETIC_UQ_SURROGATE_DIR", raising=False)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def test_missing_config_is_a_config_error(tmp_path):
    assert main(["run", "--model", "low", "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_invalid_config_is_a_config_error(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({**TINY, "family": "vortex"}))
    assert main(["run", "--model", "low", "--config", str(broken), "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    unreadable = tmp_path / "unreadable.json"
    unreadable.write_text("{not json")
    assert main(["run", "--model", "low", "--config", str(unreadable), "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_mismatched_samples_exit_code(tmp_path, config_file):
    samples = tmp_path / "samples.csv"
    pd.DataFrame({"id": [0], "z1": [0.0]}).to_csv(samples, index=False)
    args = ["run", "--model", "low", "--config", str(config_file), "--out", str(tmp_path / "out"), "--samples", str(samples)]
    assert main(args) == EXIT_SAMPLES


def test_samples_outside_unit_box_exit_code(tmp_path, config_file):
    samples = tmp_path / "samples.csv"
    pd.DataFrame({"id": [0], "z1": [1.5], "z2": [0.0], "z3": [0.0]}).to_csv(samples, index=False)
    args = ["run", "--model", "low", "--config", str(config_file), "--out", str(tmp_path / "out"), "--samples", str(samples)]
    assert main(args) == EXIT_SAMPLES
    assert not list((tmp_path / "out").glob("sample_*.csv"))


def test_run_from_environment_config(tmp_path, config_file, monkeypatch):
    monkeypatch.setenv("KINETIC_UQ_CONFIG_PATH", str(config_file))
    out = tmp_path / "out"
    assert main(["run", "--model", "low", "--out", str(out)]) == 0
    assert len(list(out.glob("sample_*.csv"))) == TINY["n_train"]
    assert (out / "manifest.json").exists()


def test_flag_overrides_environment_config(tmp_path, config_file, monkeypatch):
    monkeypatch.setenv("KINETIC_UQ_CONFIG_PATH", str(tmp_path / "absent.json"))
    assert main(["run", "--model", "low", "--config", str(config_file), "--out", str(tmp_path / "out")]) == 0


def test_train_then_eval(tmp_path, config_file, capsys):
    surrogate = tmp_path / "surrogate"
    assert main(["train", "--config", str(config_file), "--out", str(surrogate), "--budget", "2"]) == 0
    assert "k=2" in capsys.readouterr().out

    results = tmp_path / "eval"
    assert main(["eval", "--surrogate", str(surrogate), "--out", str(results), "--with-reference", "--r-list", "1", "2"]) == 0
    assert "r=2" in capsys.readouterr().out
    report = json.loads((results / "report.json").read_text())
    assert [row["r"] for row in report["rows"]] == [1, 2]


def test_eval_rejects_budget_beyond_selection(tmp_path, config_file):
    surrogate = tmp_path / "surrogate"
    assert main(["train", "--config", str(config_file), "--out", str(surrogate), "--budget", "1"]) == 0
    args = ["eval", "--surrogate", str(surrogate), "--out", str(tmp_path / "eval"), "--r-list", "3"]
    assert main(args) == EXIT_FAILURE


def test_eval_without_surrogate_fails(tmp_path):
    assert main(["eval", "--surrogate", str(tmp_path / "nothing"), "--out", str(tmp_path / "eval")]) == EXIT_FAILURE


def test_parser_requires_model_for_run():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--out", "somewhere"])
