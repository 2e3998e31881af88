import csv
import json
import os
import shutil
import time

import numpy as np
import pandas as pd
import pytest

from k3prf.cli import build_parser, main
from k3prf.config import CONFIG_KEYS


@pytest.fixture
def toy_csv(data_dir):
    return os.path.join(data_dir, "toy_panel.csv")


def run(*args):
    return main([str(a) for a in args])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_data_file_exits_3(tmp_path, capsys):
    assert run("forecast", "--data", tmp_path / "nope.csv", "--target", "Y", "--out", tmp_path) == 3
    assert "data error" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, toy_csv, capsys):
    assert run("forecast", "--data", toy_csv, "--target", "TARGET", "--sigma", "-2", "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "config error" in err and "k3prf.config" in err
    cfg = tmp_path / "c.yaml"
    cfg.write_text("bogus: 1\n")
    assert run("backtest", "--config", cfg, "--out", tmp_path) == 2
    assert run("forecast", "--data", toy_csv, "--out", tmp_path) == 2  # no target


def test_numerical_failure_exits_4(tmp_path, capsys):
    rng = np.random.default_rng(0)
    idx = pd.date_range("1990-01-01", periods=60, freq="QS")
    a = rng.standard_normal(60)
    df = pd.DataFrame({"A": a, "B": 2 * a + 1, "C": rng.standard_normal(60), "Y": rng.standard_normal(60)}, index=idx)
    path = tmp_path / "p.csv"
    df.to_csv(path)
    code = run("forecast", "--data", path, "--target", "Y", "--kernel", "linear", "--proxies", "cols:A,B",
               "--horizons", "1", "--out", tmp_path / "o")
    assert code == 4
    assert "numerical failure" in capsys.readouterr().err


def test_forecast_shape_contract(tmp_path, toy_csv):
    out = tmp_path / "f"
    assert run("forecast", "--data", toy_csv, "--target", "TARGET", "--horizons", "1,4", "--out", out, "--threads", 1) == 0
    rows = read_rows(out / "forecast.csv")
    T = 100
    for h in (1, 4):
        sub = [r for r in rows if r["horizon"] == str(h)]
        assert sum(r["kind"] == "fitted" for r in sub) == T - h
        fc = [r for r in sub if r["kind"] == "forecast"]
        assert len(fc) == 1 and fc[0]["origin"] == "1974-10-01"
    assert all(r["schema_version"] == "1" for r in rows)
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "forecast" and man["seed"] == 0 and len(man["config_hash"]) == 64


def test_forecast_rerun_is_byte_identical(tmp_path, toy_csv):
    for name, threads in (("a", 1), ("b", 3)):
        assert run("forecast", "--data", toy_csv, "--target", "TARGET", "--horizons", "2",
                   "--out", tmp_path / name, "--threads", threads) == 0
    for f in ("forecast.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_forecast_with_linear_kernel_and_theory_proxies(tmp_path, toy_csv):
    assert run("forecast", "--data", toy_csv, "--target", "TARGET", "--horizons", "1", "--kernel", "linear",
               "--proxies", "cols:X00", "--out", tmp_path) == 0
    rows = read_rows(tmp_path / "forecast.csv")
    assert rows[0]["sigma"] == ""


def test_tune_single_point_grid(tmp_path, toy_csv):
    cfg = tmp_path / "t.yaml"
    cfg.write_text(f"data: {toy_csv}\ntarget: TARGET\nhorizons: [1, 3]\nsigma_multipliers: [2.0]\n")
    assert run("tune", "--config", cfg, "--out", tmp_path / "o") == 0
    res = json.loads((tmp_path / "o" / "tune.json").read_text())
    for h in ("1", "3"):
        r = res["horizons"][h]
        assert r["selected"] == pytest.approx(2.0 * r["anchor"]) and len(r["grid"]) == 1


def test_tune_rejects_non_gaussian(tmp_path, toy_csv):
    assert run("tune", "--data", toy_csv, "--target", "TARGET", "--kernel", "linear", "--out", tmp_path) == 2


def test_backtest_outputs(tmp_path, toy_csv):
    cfg = tmp_path / "b.yaml"
    cfg.write_text(f"data: {toy_csv}\ntarget: TARGET\nhorizons: [1]\nmethods: [AR, PC, 3PRF]\n")
    assert run("backtest", "--config", cfg, "--out", tmp_path / "o") == 0
    names = sorted(os.listdir(tmp_path / "o"))
    assert names == ["forecasts.csv", "manifest.json", "report.csv", "report.json"]
    rows = read_rows(tmp_path / "o" / "report.csv")
    assert {r["method"] for r in rows} >= {"AR", "PC", "3PRF"}


def test_compare_matches_golden_table(tmp_path, data_dir):
    assert run("compare", os.path.join(data_dir, "golden_report.json"), "--out", tmp_path) == 0
    with open(os.path.join(data_dir, "golden_tolerance_table.csv"), "rb") as fh:
        assert (tmp_path / "tolerance_table.csv").read_bytes() == fh.read()


def test_compare_missing_report(tmp_path):
    assert run("compare", tmp_path / "none.json", "--out", tmp_path) == 3


def test_simulate_tiny_grid(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("simulate:\n  grid: [[40, 40], [80, 80]]\n  n_reps: 10\n  K_g: 2\n")
    start = time.perf_counter()
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--seed", 3) == 0
    assert time.perf_counter() - start < 60
    lines = (tmp_path / "o" / "rate_curve.csv").read_text().splitlines()
    assert lines[0].startswith("schema_version,M,T,delta_MT")
    cfg.write_text("simulate:\n  gird: []\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2


@pytest.mark.parametrize("command", ["forecast", "backtest", "tune", "simulate", "compare"])
def test_help_documents_every_config_key(command, capsys):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args([command, "--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    for key in CONFIG_KEYS:
        assert f"  {key}:" in text
    for flag in ("--config", "--data", "--target", "--horizons", "--kernel", "--sigma", "--proxies",
                 "--window-frac", "--seed", "--out", "--threads"):
        assert flag in text
    assert "K3PRF_LOG" in text


def test_console_script_installed():
    assert shutil.which("k3prf") is not None
