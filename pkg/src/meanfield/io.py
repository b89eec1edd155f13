"""File formats: trajectories, flow snapshots, densities, surfaces, manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .config import ModelConfig, SchemeConfig
from .particles import ParticleEnsemble
from .scheme import FlowApproximation, GPState, QuadraticMean, _centered_features

FLOAT = "%.17g"
TRAJECTORY_HEADER = ["step", "time_day", "plant_id", "s_m_units", "x", "y", "S", "gamma"]
SNAPSHOT_HEADER = ["theta_x", "theta_y", "theta_S", "theta_gamma", "s_value", "set_label"]
REPORT_NAME = "scheme_report.json"
SET_LABELS = ("omega", "train", "test")


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def dump_json(path: str | Path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(v: float) -> str:
    return FLOAT % v


# -- trajectories ----------------------------------------------------------

def write_trajectory(path: str | Path, ensemble: ParticleEnsemble) -> None:
    """One row per (step, plant); sizes in metres (the ``s_m_units`` column)."""
    hist = ensemble.history
    if hist is None:
        raise ValueError("ensemble has no recorded history")
    dt = ensemble.config.dt
    th = [[_fmt(v) for v in row] for row in ensemble.theta]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for k, sizes in enumerate(hist):
            t = _fmt(k * dt)
            for i, s in enumerate(sizes):
                w.writerow([k, t, i, _fmt(s), *th[i]])


def read_trajectory(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(times, history (steps x N), theta (N x 4))``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: not a trajectory file (header {rows[:1]})")
    data = np.array(rows[1:], dtype=float)
    if data.size == 0:
        raise ValueError(f"{path}: empty trajectory")
    steps = data[:, 0].astype(int)
    ids = data[:, 2].astype(int)
    n_steps, N = steps.max() + 1, ids.max() + 1
    if len(data) != n_steps * N:
        raise ValueError(f"{path}: expected {n_steps * N} rows, found {len(data)}")
    hist = np.empty((n_steps, N))
    hist[steps, ids] = data[:, 3]
    times = np.empty(n_steps)
    times[steps] = data[:, 1]
    theta = np.empty((N, 4))
    theta[ids] = data[:, 4:8]
    return times, hist, theta


# -- flow snapshots --------------------------------------------------------

def snapshot_name(n: int) -> str:
    return f"flow_{n:04d}.csv"


def write_flow(out_dir: str | Path, fa: FlowApproximation) -> list[Path]:
    """Write one snapshot CSV per iteration and the scheme report; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    sets = (fa.omega, fa.train, fa.test)
    for n in range(fa.n_done + 1):
        values = (fa.flow_omega[n], fa.flow_train[n], fa.flow_test[n])
        p = out / snapshot_name(n)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = _writer(fh)
            w.writerow(SNAPSHOT_HEADER)
            for label, theta, s in zip(SET_LABELS, sets, values):
                for row, v in zip(theta, s):
                    w.writerow([*map(_fmt, row), _fmt(v), label])
        paths.append(p)
    p = out / REPORT_NAME
    dump_json(p, scheme_report(fa))
    paths.append(p)
    return paths


def scheme_report(fa: FlowApproximation) -> dict:
    """Test errors, fitted means and GP weights for iterations ``1..n_done``."""
    alphas = fa.alpha[1:]
    return {
        "config": fa.config.to_dict(),
        "scheme": fa.scheme.to_dict(),
        "seeds": {"master": fa.scheme.seed,
                  "streams": ["omega-sample", "train-set", "test-set"]},
        "iterations": fa.n_done,
        "J": [_json_float(v) for v in fa.J[1:]],
        "J_poly": [_json_float(v) for v in fa.J_poly[1:]],
        "poly": [p.to_dict() for p in fa.poly[1:]],
        "alpha_norm": [None if a is None else float(np.linalg.norm(a)) for a in alphas],
        "alpha": [None if a is None else a.tolist() for a in alphas],
    }


def _read_snapshot(path: Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SNAPSHOT_HEADER:
        raise ValueError(f"{path}: not a flow snapshot")
    out = {}
    for label in SET_LABELS:
        sel = [r[:5] for r in rows[1:] if r[5] == label]
        arr = np.array(sel, dtype=float).reshape(-1, 5)
        out[label] = (arr[:, :4], arr[:, 4])
    return out


def load_flow(flow_dir: str | Path) -> FlowApproximation:
    """Rebuild a scheme state from a directory written by :func:`write_flow`."""
    d = Path(flow_dir)
    report_path = d / REPORT_NAME
    if not report_path.is_file():
        raise FileNotFoundError(f"{report_path} not found")
    rep = json.loads(report_path.read_text(encoding="utf-8"))
    cfg = ModelConfig.from_dict(rep["config"])
    scfg = SchemeConfig(**rep["scheme"])
    snaps = [_read_snapshot(d / snapshot_name(n)) for n in range(rep["iterations"] + 1)]
    omega, train, test = (snaps[0][k][0] for k in SET_LABELS)
    fa = FlowApproximation(cfg, scfg, omega, train, test)
    nan = float("nan")
    fa.poly.append(QuadraticMean.constant(cfg.s0))
    fa.gp.append(None)
    fa.J.append(nan)
    fa.J_poly.append(nan)
    for snap in snaps:
        fa.flow_omega.append(snap["omega"][1])
        fa.flow_train.append(snap["train"][1])
        fa.flow_test.append(snap["test"][1])
    for n in range(1, rep["iterations"] + 1):
        mean = QuadraticMean.from_dict(rep["poly"][n - 1])
        fa.poly.append(mean)
        fa.J.append(nan if rep["J"][n - 1] is None else rep["J"][n - 1])
        fa.J_poly.append(nan if rep["J_poly"][n - 1] is None else rep["J_poly"][n - 1])
        a = rep["alpha"][n - 1]
        if a is None:
            fa.gp.append(None)
            continue
        alpha = np.asarray(a, dtype=float)
        prev = fa.flow_omega[n - 1]
        F = _centered_features(train, fa.poly[n - 1], omega, prev, cfg, None)
        fa.gp.append(GPState(mean, fa.poly[n - 1], prev.copy(), alpha, F.T @ alpha))
    return fa


# -- densities and surfaces ------------------------------------------------

def write_density(path: str | Path, est, meta: dict) -> Path:
    """Density CSV ``s,density`` plus a sidecar ``.json`` with the metadata."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["s", "density"])
        for s, v in zip(est.grid, est.values):
            w.writerow([_fmt(s), _fmt(v)])
    side = path.with_suffix(".json")
    dump_json(side, {**meta, "bandwidth": est.bandwidth, "clip_count": est.clipped,
                     "samples": est.n_samples, "support": list(est.support)})
    return side


def write_surface(path: str | Path, surf) -> None:
    """Row-major ``x,y,e_n`` (x outer, y inner)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["x", "y", "e_n"])
        for i, x in enumerate(surf.x):
            for j, y in enumerate(surf.y):
                w.writerow([_fmt(x), _fmt(y), _fmt(surf.values[i, j])])


def density_plotscript(csv_names: list[str], title: str = "size density") -> str:
    plots = ", \\\n     ".join(f"'{n}' using 1:2 with lines title '{n}'" for n in csv_names)
    return ("set datafile separator ','\n"
            "set key autotitle columnhead\n"
            f"set title '{title}'\nset xlabel 's (m)'\nset ylabel 'density (1/m)'\n"
            f"plot {plots}\n")


def surface_plotscript(csv_name: str, grid: int) -> str:
    return ("set datafile separator ','\n"
            f"set dgrid3d {grid},{grid}\nset hidden3d\n"
            "set xlabel 'x (m)'\nset ylabel 'y (m)'\nset zlabel 'e_n (m)'\n"
            f"splot '{csv_name}' every ::1 using 1:2:3 with lines notitle\n")
