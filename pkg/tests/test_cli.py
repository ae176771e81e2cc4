import json

import pytest
import yaml

from btcnetsim.cli import EXIT_INVALID, EXIT_OK, EXIT_PARTIAL, EXIT_RUNTIME, main
from btcnetsim.config import MinerToggle, dumps

from conftest import mesh5, small_config


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(dumps(small_config(duration=200.0)))
    return p


def test_validate_ok(scenario, capsys):
    assert main(["validate", str(scenario)]) == EXIT_OK
    assert "ok" in capsys.readouterr().out


def test_validate_reports_errors(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("name: bad\nnodes: 0\nduration: -1\n")
    assert main(["validate", str(p)]) == EXIT_INVALID
    assert capsys.readouterr().err.count("error:") >= 2


def test_validate_garbage(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: [unclosed\n")
    assert main(["validate", str(p)]) == EXIT_INVALID


def test_run_writes_seed_dir(scenario, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(scenario), "--seed", "42", "--out", str(out)]) == EXIT_OK
    run_dir = out / "small" / "42"
    assert {p.name for p in run_dir.iterdir()} == {"report.json", "report.csv", "fig5.dat", "series.dat"}
    assert json.loads((run_dir / "report.json").read_text())["seed"] == 42


def test_env_sets_default_out(scenario, tmp_path, monkeypatch):
    monkeypatch.setenv("BTCNETSIM_OUT", str(tmp_path / "env"))
    assert main(["run", str(scenario)]) == EXIT_OK
    assert (tmp_path / "env" / "small" / "11" / "report.json").is_file()


def test_report_reemits(scenario, tmp_path, capsys):
    main(["run", str(scenario), "--out", str(tmp_path)])
    run_dir = tmp_path / "small" / "11"
    (run_dir / "report.csv").unlink()
    assert main(["report", str(run_dir), "--format", "csv"]) == EXIT_OK
    assert (run_dir / "report.csv").is_file()
    assert main(["report", str(tmp_path / "nowhere")]) == EXIT_RUNTIME


def test_runtime_error_exit(tmp_path):
    cfg = mesh5(miner_schedule=[MinerToggle(1.0, i, False) for i in range(5)])
    p = tmp_path / "dead.yaml"
    p.write_text(dumps(cfg))
    assert main(["run", str(p), "--out", str(tmp_path)]) == EXIT_RUNTIME


def _sweep_file(tmp_path, base):
    p = tmp_path / "sweep.yaml"
    p.write_text(yaml.safe_dump({"base": base.to_dict(), "axis": "difficulty",
                                 "points": [0.01, 0.02], "repetitions": 2}))
    return p


def test_sweep_command(tmp_path, capsys):
    p = _sweep_file(tmp_path, mesh5(block_cap=20))
    assert main(["validate", str(p)]) == EXIT_OK
    assert main(["sweep", str(p), "--workers", "1", "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "fig8.dat").is_file()
    assert capsys.readouterr().out.count("point ") == 2


def test_partial_sweep_exit(tmp_path):
    base = mesh5(block_cap=20, miner_schedule=[MinerToggle(0.5, i, False) for i in range(5)])
    p = _sweep_file(tmp_path, base)
    assert main(["sweep", str(p), "--workers", "1", "--out", str(tmp_path / "o")]) == EXIT_PARTIAL


def test_preset_print(capsys):
    assert main(["preset", "fig9", "--print"]) == EXIT_OK
    spec = yaml.safe_load(capsys.readouterr().out)
    assert spec["axis"] == "difficulty"


def test_unknown_preset_is_usage_error():
    with pytest.raises(SystemExit):
        main(["preset", "fig1"])
