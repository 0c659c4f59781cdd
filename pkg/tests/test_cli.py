import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from stochprox import cli
from stochprox.benchmarks import BENCHMARKS
from stochprox.sppa import Schedule, certificate_for, rho, rho_prime
from stochprox.stochastic import ModelError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, name="euclidean", **over):
    dist, x0 = BENCHMARKS[name]()
    (tmp_path / "scen.json").write_text(json.dumps(dist.to_json()))
    cfg = {"schema": 1, "scenarios": "scen.json", "schedule": "harmonic", "N": 300, "R": 20, "seed": 4,
           "x0": x0.to_json(), "eps": [0.25, 1.0], "lambda_conf": [0.5, 1.0]}
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_csv_and_sidecar(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out" / "run.csv"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert ",".join(rows[0]) == "n,lambda_n,mean_sq_dist,stderr,remark_bound,fast_bound,tail_freq_eps_0.25,tail_freq_eps_1"
    assert rows[1][0] == "0" and rows[-1][0] == "300"
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["schema"] == 1
    assert set(side["certificate"]) == {"b", "c", "alpha_bar", "Lambda", "C", "D", "sigma", "u"}
    assert side["certificate"]["b"] == pytest.approx(16 + 1e-9)
    # harmonic runs carry the remark bound but no fast bound
    assert rows[1][4] != "" and rows[1][5] == ""


def test_run_fast_harmonic_has_fast_bound(tmp_path):
    cfg = write_config(tmp_path, schedule="fast_harmonic")
    out = tmp_path / "f.csv"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out)
    cert = json.loads(out.with_suffix(".json").read_text())["certificate"]
    assert rows[1][4] == "" and float(rows[1][5]) == pytest.approx(cert["u"] / 2)


def test_run_single_row_for_zero_steps(tmp_path):
    cfg = write_config(tmp_path, N=0, R=1)
    out = tmp_path / "z.csv"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2 and rows[1][0] == "0"


def test_run_is_byte_identical(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, name="hyperboloid")
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    cli.main(["run", "--config", str(cfg), "--out", str(a)])
    cli.main(["run", "--config", str(cfg), "--out", str(b)])
    monkeypatch.setenv("SPPA_THREADS", "3")
    cli.main(["run", "--config", str(cfg), "--out", str(c)])
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    assert a.with_suffix(".json").read_bytes() == c.with_suffix(".json").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["run", "--config", str(cfg), "--out", str(a)])
    cli.main(["run", "--config", str(cfg), "--out", str(b), "--seed", "123456789"])
    assert a.read_bytes() != b.read_bytes()
    assert json.loads(b.with_suffix(".json").read_text())["seed"] == 123456789


def test_run_to_stdout(tmp_path, capsys):
    cfg = write_config(tmp_path, N=4, R=2)
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.startswith("n,lambda_n,")


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(N=-1),
    lambda c: c.update(R=0),
    lambda c: c.update(schedule="constant"),
    lambda c: c.pop("x0"),
    lambda c: c.update(scenarios="missing.json"),
    lambda c: c.update(eps=[0.0]),
    lambda c: c.update(schema=2),
])
def test_invalid_config_exits_2(tmp_path, mutate, capsys):
    path = write_config(tmp_path)
    cfg = json.loads(path.read_text())
    mutate(cfg)
    path.write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(path)]) == 2
    assert "error" in capsys.readouterr().err


def test_corrupted_scenario_file_exits_2(tmp_path):
    path = write_config(tmp_path)
    (tmp_path / "scen.json").write_text('{"space": {"kind": "eucl')
    assert cli.main(["run", "--config", str(path)]) == 2
    assert cli.main(["verify", "--config", str(path)]) == 2
    (tmp_path / "scen.json").write_text(json.dumps({"space": {"kind": "euclidean", "dim": 1},
                                                    "scenarios": [{"p": 0.7, "alpha": 1.0, "anchor": {"coords": [0.0]}}]}))
    assert cli.main(["run", "--config", str(path)]) == 2


def test_model_error_exits_3(tmp_path, monkeypatch):
    path = write_config(tmp_path)

    def boom(*a, **k):
        raise ModelError("no verified zero")

    monkeypatch.setattr(cli, "monte_carlo", boom)
    assert cli.main(["run", "--config", str(path)]) == 3


def test_bad_seed_exits_2(tmp_path):
    assert cli.main(["run", "--config", str(write_config(tmp_path)), "--seed", "-1"]) == 2


# --- rates ----------------------------------------------------------------------------------


def test_rates_table(tmp_path, capsys):
    path = write_config(tmp_path)
    assert cli.main(["rates", "--config", str(path), "--eps", "1", "0.01", "0.1"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0][:4] == ["eps", "chi", "log_rho", "rho"]
    assert [float(r[0]) for r in rows[1:]] == [1.0, 0.01, 0.1]
    dist, x0 = BENCHMARKS["euclidean"]()
    s = Schedule("harmonic")
    cert = certificate_for(dist, s, x0)
    for r in rows[1:]:
        e = float(r[0])
        assert int(r[1]) == math.ceil(2 * cert.c / e)
        assert float(r[2]) == pytest.approx(rho(cert, s, e).log_value, rel=1e-15)
        assert float(r[5]) == pytest.approx(rho_prime(cert, s, 0.5, e).log_value, rel=1e-15)
        assert float(r[7]) == pytest.approx(float(r[2]), rel=1e-15)


def test_rates_uses_configured_eps(tmp_path, capsys):
    path = write_config(tmp_path, rates_eps=[2.0, 0.5, 0.25])
    assert cli.main(["rates", "--config", str(path)]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 4


def test_rates_refuses_fast_schedule(tmp_path):
    assert cli.main(["rates", "--config", str(write_config(tmp_path, schedule="fast_harmonic"))]) == 2


# --- verify and sweep -------------------------------------------------------------------------


def test_verify_quick_passes(tmp_path):
    out = tmp_path / "report.json"
    assert cli.main(["verify", "--level", "quick", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["schema"] == 1 and rep["passed"]
    assert all(set(c) == {"check", "cases", "min_slack", "violations", "runtime"} for c in rep["checks"])
    assert rep["exploratory"][0]["check"] == "spider:A3"


def test_verify_bad_tolerance_exits_1(tmp_path, capsys):
    assert cli.main(["verify", "--level", "quick", "--tol", "-1", "--out", str(tmp_path / "r.json")]) == 1
    assert "FAIL" in capsys.readouterr().err


def test_verify_with_config(tmp_path):
    path = write_config(tmp_path, name="spider")
    out = tmp_path / "r.json"
    assert cli.main(["verify", "--config", str(path), "--out", str(out)]) == 0
    names = [c["check"] for c in json.loads(out.read_text())["checks"]]
    assert "config:ineq2" in names


def test_sweep(tmp_path):
    base = json.loads(write_config(tmp_path).read_text())
    spec = {"base": base, "grid": {"schedule": ["harmonic", "fast_harmonic"], "seed": [1, 1 << 40]}}
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", str(path), "--out", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert rows[0][:3] == ["run", "schedule", "seed"] and len(rows) == 5
    assert rows[1][1] == "harmonic" and rows[4][2] == str(1 << 40)
    assert all((out / f"run_{i:03d}.csv").exists() for i in range(4))
    assert json.loads((out / "run_003.json").read_text())["schedule"] == "fast_harmonic"


def test_sweep_rejects_bad_grid(tmp_path):
    base = json.loads(write_config(tmp_path).read_text())
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({"base": base, "grid": {"colour": [1]}}))
    assert cli.main(["sweep", "--config", str(path)]) == 2
    path.write_text(json.dumps({"base": base, "grid": {"N": [10, -3]}}))
    assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "never")]) == 2
    assert not (tmp_path / "never").exists()


def test_shipped_configs_parse():
    from stochprox.config import ExperimentConfig

    for path in CONFIGS.glob("*_harmonic.json"):
        cfg = ExperimentConfig.load(path)
        assert cfg.N >= 1 and cfg.R >= 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "stochprox", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("run", "rates", "verify", "sweep"):
        assert cmd in res.stdout
