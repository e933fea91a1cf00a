import json
import shutil

import pytest

from searchcast import cli
from searchcast.evaluate import REPORT_FILES


def copy_world(src, dst, skip=()):
    dst.mkdir()
    for p in src.iterdir():
        if p.is_file() and p.name not in skip:
            shutil.copy2(p, dst / p.name)
    return dst / "config.json"


def test_golden_run_writes_every_report(golden_run):
    assert golden_run.exit_code == 0
    for name in REPORT_FILES + ("lag_table.csv", "coefficient_trace.csv", "run_metadata.json"):
        assert (golden_run.out / name).is_file()


def test_missing_truth_feed(golden_run, tmp_path, capsys):
    config = copy_world(golden_run.world, tmp_path / "w", skip=("truth_states.csv",))
    assert cli.main(["forecast", "--config", str(config)]) == 2
    err = capsys.readouterr().err
    assert str(tmp_path / "w" / "truth_states.csv") in err


def test_evaluate_reproduces_backtest_scores(golden_run, tmp_path):
    out = tmp_path / "eval"
    code = cli.main(["evaluate", "--config", str(golden_run.config), "--out", str(out),
                     "--forecasts", str(golden_run.out / "forecasts.csv")])
    assert code == 0
    for name in REPORT_FILES:
        assert (out / name).read_bytes() == (golden_run.out / name).read_bytes(), name


def test_report_prints_summary(golden_run, capsys):
    assert cli.main(["report", "--config", str(golden_run.config)]) == 0
    text = capsys.readouterr().out
    assert "ENSEMBLE" in text and "rmse" in text and "share" in text


def test_stage_commands(golden_run, tmp_path, capsys):
    out = tmp_path / "stages"
    base = ["--config", str(golden_run.config), "--out", str(out)]
    assert cli.main(["ingest-check"] + base) == 0
    assert "62 geos" in capsys.readouterr().out
    assert cli.main(["preprocess"] + base) == 0
    assert (out / "query_activity.csv").is_file()
    assert cli.main(["select-features"] + base) == 0
    assert (out / "lag_table.csv").read_bytes() == (golden_run.out / "lag_table.csv").read_bytes()


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"argo": {"bogus": 1}}))
    assert cli.main(["forecast", "--config", str(cfg)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert cli.main(["forecast"]) == 2


def test_corrupt_input_exits_1(golden_run, tmp_path, capsys):
    config = copy_world(golden_run.world, tmp_path / "w")
    (tmp_path / "w" / "input_states.csv").write_text("date,state,cases,deaths\n2020-01-05,NY,1,x\n")
    assert cli.main(["forecast", "--config", str(config)]) == 1
    assert "[ingest]" in capsys.readouterr().err


def test_evaluate_without_forecasts(golden_run, tmp_path):
    assert cli.main(["evaluate", "--config", str(golden_run.config),
                     "--forecasts", str(tmp_path / "none.csv")]) == 2


def test_synth_options(tmp_path):
    assert cli.main(["synth", "--seed", "3", "--weeks", "20", "--snr", "5", "--out", str(tmp_path),
                     "--clamp-nonneg"]) == 0
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["synth"]["n_weeks"] == 20 and cfg["synth"]["snr"] == 5.0 and cfg["clamp_nonneg"] is True
    with pytest.raises(SystemExit):
        cli.main(["unknown-command"])
