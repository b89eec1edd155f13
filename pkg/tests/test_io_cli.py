import json
import subprocess
import sys

import numpy as np
import pytest

from meanfield import rng as rngmod
from meanfield.cli import main
from meanfield.io import load_flow, read_trajectory, sha256, write_flow, write_trajectory
from meanfield.model import gompertz
from meanfield.particles import simulate


def test_trajectory_round_trip(tmp_path, cfg):
    ens = simulate(cfg, 7, 1.0, rngmod.stream(1, rngmod.INITIAL_ENSEMBLE))
    p = tmp_path / "t.csv"
    write_trajectory(p, ens)
    times, hist, theta = read_trajectory(p)
    np.testing.assert_array_equal(hist, ens.history)
    np.testing.assert_array_equal(theta, ens.theta)
    np.testing.assert_allclose(times, np.arange(11) * cfg.dt)
    raw = p.read_bytes()
    assert b"\r\n" not in raw
    assert raw.splitlines()[0] == b"step,time_day,plant_id,s_m_units,x,y,S,gamma"


def test_bad_trajectory(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory(p)


def test_flow_round_trip(tmp_path, small_flow):
    write_flow(tmp_path, small_flow)
    back = load_flow(tmp_path)
    assert back.n_done == small_flow.n_done
    theta = small_flow.test[:10]
    for n in (0, 1, 10, 20):
        np.testing.assert_allclose(back.reconstruct(theta, n), small_flow.reconstruct(theta, n),
                                   rtol=1e-13)
    np.testing.assert_array_equal(back.J[1:], small_flow.J[1:])
    rep = json.loads((tmp_path / "scheme_report.json").read_text())
    assert len(rep["J"]) == 20 and len(rep["alpha"][0]) == small_flow.scheme.K


def test_load_flow_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_flow(tmp_path)


# -- command line -------------------------------------------------------------

@pytest.fixture(scope="module")
def flow_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("flow")
    assert main(["mfl", "--m", "120", "--k", "20", "--steps", "20", "--out-dir", str(d)]) == 0
    return d


def test_simulate_single_plant_is_gompertz(tmp_path, cfg):
    out = tmp_path / "one.csv"
    assert main(["simulate", "--n", "1", "--horizon", "10", "--set", "dt=0.01",
                 "--out", str(out)]) == 0
    _, hist, theta = read_trajectory(out)
    t = np.arange(len(hist)) * 0.01
    exact = gompertz(t, theta[0, 2], theta[0, 3], cfg.s0)
    assert np.max(np.abs(hist[:, 0] - exact) / exact) < 1e-3
    man = json.loads((tmp_path / "one.manifest.json").read_text())
    assert man["config"]["dt"] == 0.01
    assert man["outputs"]["one.csv"] == sha256(out)


def test_simulate_row_count(tmp_path):
    out = tmp_path / "big.csv"
    assert main(["simulate", "--n", "501", "--horizon", "10", "--out", str(out)]) == 0
    with open(out) as fh:
        rows = sum(1 for _ in fh) - 1
    assert rows == 101 * 501


def test_missing_key_exit_code(tmp_path, cfg, capsys):
    d = cfg.to_dict()
    del d["s0"]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(d))
    assert main(["simulate", "--config", str(p), "--n", "2", "--out", str(tmp_path / "x.csv")]) == 2
    assert "s0" in capsys.readouterr().err


def test_invalid_override_exit_code(tmp_path):
    assert main(["simulate", "--n", "2", "--set", "dt=-1", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["simulate", "--n", "2", "--set", "nope=1", "--out", str(tmp_path / "x.csv")]) == 2


def test_mfl_zero_steps(tmp_path):
    assert main(["mfl", "--m", "30", "--k", "5", "--steps", "0", "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "scheme_report.json").read_text())
    assert rep["J"] == [] and rep["iterations"] == 0


def test_mfl_report_is_reproducible(tmp_path, flow_dir):
    assert main(["mfl", "--m", "120", "--k", "20", "--steps", "20",
                 "--out-dir", str(tmp_path)]) == 0
    assert sha256(tmp_path / "scheme_report.json") == sha256(flow_dir / "scheme_report.json")


def test_compare_single_N(tmp_path, flow_dir):
    out = tmp_path / "c.json"
    assert main(["compare", "--flow-dir", str(flow_dir), "--n-list", "11", "--reps", "2",
                 "--t", "2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert len(rep["chaos"]["mean_discrepancy"]) == 1 and rep["discrepancy_slope"] is None


def test_compare_with_trajectory(tmp_path, flow_dir):
    traj = tmp_path / "t.csv"
    assert main(["simulate", "--n", "15", "--horizon", "2", "--out", str(traj)]) == 0
    out = tmp_path / "c.json"
    assert main(["compare", "--flow-dir", str(flow_dir), "--traj", str(traj), "--n-list", "5,9",
                 "--reps", "2", "--t", "1", "--times", "0,1,2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["w1_curve"]["N"] == 15 and len(rep["w1_curve"]["w1"]) == 3
    assert rep["discrepancy_slope"] is not None


def test_compare_beyond_horizon(tmp_path, flow_dir):
    assert main(["compare", "--flow-dir", str(flow_dir), "--n-list", "11", "--reps", "2",
                 "--t", "10", "--out", str(tmp_path / "c.json")]) == 3


def test_missing_flow_dir(tmp_path):
    assert main(["surface", "--flow-dir", str(tmp_path / "nope"), "--out",
                 str(tmp_path / "s.csv")]) == 2


def test_density_three_files(tmp_path, flow_dir):
    out = tmp_path / "d"
    assert main(["density", "--flow-dir", str(flow_dir), "--times", "0,1,2", "--samples", "300",
                 "--emit-plotscript", "--out-dir", str(out)]) == 0
    csvs = sorted(p.name for p in out.glob("*.csv"))
    assert csvs == ["density_n0000.csv", "density_n0010.csv", "density_n0020.csv"]
    side = json.loads((out / "density_n0010.json").read_text())
    assert side["n"] == 10 and side["t_days"] == pytest.approx(1.0) and "clip_count" in side
    assert "density_n0020.csv" in (out / "density.gp").read_text()


def test_surface_row_count(tmp_path, flow_dir):
    out = tmp_path / "s.csv"
    assert main(["surface", "--flow-dir", str(flow_dir), "--time", "2", "--grid", "50",
                 "--mc", "4", "--emit-plotscript", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,y,e_n" and len(lines) == 2501
    assert (tmp_path / "s.gp").is_file()


def test_constants(tmp_path, capsys):
    out = tmp_path / "k.json"
    assert main(["constants", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["K1"] == pytest.approx(np.log(20))
    assert main(["constants"]) == 0
    assert json.loads(capsys.readouterr().out)["K4"] == pytest.approx(2 + np.log(20))


def test_rates_and_bounds(tmp_path, flow_dir):
    r = tmp_path / "r.json"
    assert main(["rates", "--sizes", "8,16,32", "--reps", "3", "--out", str(r)]) == 0
    assert json.loads(r.read_text())["sizes"] == [8, 16, 32]
    b = tmp_path / "b.json"
    assert main(["bounds", "--flow-dir", str(flow_dir), "--n", "11", "--times", "0.5,1",
                 "--out", str(b)]) == 0
    run = json.loads(b.read_text())["runs"][0]
    assert run["bound"][0] == run["w1"][0]


def test_replay_reproduces_hashes(tmp_path, flow_dir, capsys):
    out = tmp_path / "orig" / "s.csv"
    out.parent.mkdir()
    assert main(["surface", "--flow-dir", str(flow_dir), "--time", "1", "--grid", "4",
                 "--mc", "5", "--out", str(out)]) == 0
    assert main(["replay", str(tmp_path / "orig" / "s.manifest.json"),
                 "--into", str(tmp_path / "again")]) == 0
    assert "MISMATCH" not in capsys.readouterr().out
    assert main(["replay", str(flow_dir / "manifest.json"), "--into", str(tmp_path / "f")]) == 0


def test_replay_detects_change(tmp_path, flow_dir):
    out = tmp_path / "k.json"
    assert main(["constants", "--out", str(out)]) == 0
    man_path = tmp_path / "k.manifest.json"
    man = json.loads(man_path.read_text())
    man["outputs"]["k.json"] = "0" * 64
    man_path.write_text(json.dumps(man))
    assert main(["replay", str(man_path), "--into", str(tmp_path / "r")]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "meanfield.cli", "constants"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "K24" in proc.stdout
