import csv
import json
import time
from dataclasses import fields

import pytest

from sharpdec.cli import main
from sharpdec.experiments import SweepConfig, run_campaign
from sharpdec.records import (CSV_COLUMNS, ConfigError, ResultRecord, RunConfig,
                              cache_lookup, cache_store, config_hash, write_csv)

GOLDEN_HEADER = ("campaign,d,sigma,R,p,lhs,rhs,ratio,M,comparability,incidence,"
                 "fractal_constant,amplitude_median,lhs_slope,rhs_slope,ratio_slope,passed")

SHORT = [256.0, 512.0, 1024.0, 2048.0]


@pytest.fixture(autouse=True)
def cache_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SHARPDEC_CACHE", str(tmp_path / "cache"))
    return tmp_path / "cache"


@pytest.fixture(scope="module")
def record():
    cfg = SweepConfig(R_list=SHORT)
    return ResultRecord.from_report(run_campaign("decoupling", cfg), cfg, 1.5)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_golden_header(tmp_path, record):
    write_csv(tmp_path / "t.csv", [record])
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == GOLDEN_HEADER
    assert ",".join(CSV_COLUMNS) == GOLDEN_HEADER


def test_csv_values_round_trip(tmp_path, record):
    write_csv(tmp_path / "t.csv", [record])
    rows = read_csv(tmp_path / "t.csv")
    assert len(rows) == 4
    for row, src in zip(rows, record.report["rows"]):
        assert float(row["lhs"]) == src["lhs"]
        assert float(row["ratio"]) == src["ratio"]
    assert rows[0]["incidence"] == "" and rows[0]["passed"] == "true"


def test_json_round_trip_exact(record):
    back = ResultRecord.from_dict(json.loads(record.to_json()))
    assert back == record


def test_cache_round_trip(tmp_path, record):
    cache_store(tmp_path, record)
    assert cache_lookup(tmp_path, record.config_hash) == record
    assert cache_lookup(tmp_path, "0" * 64) is None


def test_corrupt_cache_warns(tmp_path, record):
    path = cache_store(tmp_path, record)
    path.write_text("{not json")
    with pytest.warns(UserWarning, match="corrupt"):
        assert cache_lookup(tmp_path, record.config_hash) is None
    assert not list(tmp_path.glob(".tmp-*"))


def _perturbed(cfg, name):
    val = getattr(cfg, name)
    if name == "R_list":
        return val[:-1] + [val[-1] * 2]
    if name == "campaigns":
        return val[:1]
    if name == "sigma":
        return 0.3
    if name in ("threshold", "sample_spacing", "cd"):
        return val / 2
    if isinstance(val, int):
        return val + 1
    return val * 1.5 + 0.01


@pytest.mark.parametrize("name", [f.name for f in fields(SweepConfig)])
def test_hash_changes_with_every_field(name):
    cfg = SweepConfig()
    other = SweepConfig(**{**cfg.to_dict(), name: _perturbed(cfg, name)})
    assert config_hash(cfg, "decoupling") != config_hash(other, "decoupling")


def test_hash_ignores_output_location():
    a = RunConfig.from_dict({"out": "a", "cache_dir": "x"})
    b = RunConfig.from_dict({"out": "b", "use_cache": False})
    assert config_hash(a.sweep, "corollary") == config_hash(b.sweep, "corollary")
    assert config_hash(a.sweep, "corollary") != config_hash(a.sweep, "decoupling")


@pytest.mark.parametrize("doc", [{"sigma": 0.7}, {"d": 1}, {"bogus": 1},
                                 {"R_list": [256, 512]}, {"campaigns": ["x"]}])
def test_config_errors(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_identical_runs_bit_identical():
    cfg = SweepConfig(R_list=SHORT, seed=7)
    a = ResultRecord.from_report(run_campaign("corollary", cfg), cfg, 1.0)
    b = ResultRecord.from_report(run_campaign("corollary", cfg), cfg, 2.0)
    assert json.dumps(a.content(), sort_keys=True) == json.dumps(b.content(), sort_keys=True)


def test_cli_decouple_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 2, "sigma": 0.25}))
    out = tmp_path / "out"
    assert main(["decouple", "--config", str(cfg), "--out", str(out)]) == 0
    csvs = list(out.glob("decoupling_*.csv"))
    assert len(csvs) == 1 and len(read_csv(csvs[0])) == 6
    rec = json.loads(next(out.glob("decoupling_*.json")).read_text())
    assert rec["passed"] is True

    t0 = time.perf_counter()
    assert main(["decouple", "--config", str(cfg), "--out", str(out)]) == 0
    assert time.perf_counter() - t0 < 1.0


def test_cli_no_cache_recomputes(tmp_path, cache_env):
    args = ["corollary", "--R", "2^8,2^9,2^10,2^11", "--out", str(tmp_path), "--no-cache"]
    assert main(args) == 0
    assert not cache_env.exists()


def test_cli_sigma_out_of_range(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"sigma": 0.7}))
    assert main(["decouple", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "0 < sigma < 1/2" in capsys.readouterr().err


def test_cli_missing_config(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "none.json")]) == 2


def test_cli_budget_refusal(tmp_path, capsys):
    assert main(["amplitude", "--budget", "10", "--out", str(tmp_path)]) == 3
    assert "budget" in capsys.readouterr().err


def test_cli_failure_exit(tmp_path):
    # a tolerance of zero cannot be met by a finite-size fit
    cfg = tmp_path / "strict.json"
    cfg.write_text(json.dumps({"tol": 0.0, "eps_slack": 0.0, "R_list": SHORT}))
    assert main(["amplitude", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_cli_sweep_writes_combined_csv(tmp_path):
    out = tmp_path / "o"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"R_list": SHORT, "campaigns": ["amplitude", "corollary"]}))
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert [r["campaign"] for r in rows] == ["amplitude"] * 4 + ["corollary"] * 4


def test_cli_fit(tmp_path, capsys):
    path = tmp_path / "synthetic.csv"
    Rs = [2.0 ** k for k in range(8, 14)]
    path.write_text("R,value\n" + "".join(f"{R!r},{R ** -0.75!r}\n" for R in Rs))
    assert main(["fit", "--input", str(path), "--predicted", "-0.75"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "slope -0.750000"


def test_cli_eval(capsys):
    assert main(["eval", "--R", "256", "--point", "0,0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x1,t,re,im,abs"
    assert float(lines[1].split(",")[2]) == pytest.approx(0.0234375, abs=1e-15)


def test_cli_cache_commands(tmp_path, capsys, cache_env):
    assert main(["amplitude", "--R", "2^8,2^9,2^10,2^11", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["cache", "list"]) == 0
    assert len(capsys.readouterr().out.split()) == 1
    assert main(["cache", "clear"]) == 0
    assert not cache_env.exists()
