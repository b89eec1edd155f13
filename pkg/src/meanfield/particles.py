"""Finite-population simulator: explicit Euler on the N-plant system."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .config import ModelConfig
from .model import GAMMA, S, _competition_sq, in_domain, sample_initial, to_log_coords
from .transport import PointCloud

log = logging.getLogger(__name__)


@dataclass
class ParticleEnsemble:
    """Sizes of N plants with frozen parameters, plus the size history.

    ``history[k]`` holds all sizes after ``k`` steps; parameters never change.
    """

    config: ModelConfig
    theta: np.ndarray
    sizes: np.ndarray
    time: float = 0.0
    step_index: int = 0
    history: np.ndarray | None = None
    warnings: list[dict] = field(default_factory=list)
    clamp: bool = False

    @property
    def N(self) -> int:
        return len(self.sizes)

    @classmethod
    def from_initial(cls, cfg: ModelConfig, initial: np.ndarray, clamp: bool = False,
                     record: bool = True) -> "ParticleEnsemble":
        initial = np.asarray(initial, dtype=float)
        if initial.ndim != 2 or initial.shape[1] != 5 or len(initial) < 1:
            raise ValueError("initial must be an (N, 5) array with N >= 1")
        theta = initial[:, 1:].copy()
        theta.setflags(write=False)
        sizes = initial[:, 0].copy()
        hist = sizes[None, :].copy() if record else None
        return cls(cfg, theta, sizes, history=hist, clamp=clamp)

    def phase_points(self, t_index: int | None = None) -> np.ndarray:
        """Phase points ``(s, x, y, S, gamma)`` at a recorded step (default: current)."""
        if t_index is None:
            s = self.sizes
        else:
            if self.history is None or not 0 <= t_index < len(self.history):
                raise IndexError(f"t_index {t_index} outside recorded history")
            s = self.history[t_index]
        return np.column_stack([s, self.theta])


def velocity(sizes: np.ndarray, theta: np.ndarray, cfg: ModelConfig,
             return_competition: bool = False):
    """Per-plant ``ds_i/dt``, averaging the interaction over all ``j != i``.

    A lone plant follows the isolated Gompertz drift ``gamma s log(S / s)``.
    """
    sizes = np.asarray(sizes, dtype=float)
    n = len(sizes)
    gamma = theta[:, GAMMA]
    if n == 1:
        v = gamma * sizes * np.log(theta[:, S] / sizes)
        return (v, np.zeros((1, 1))) if return_competition else v
    dx = theta[:, 0, None] - theta[None, :, 0]
    dy = theta[:, 1, None] - theta[None, :, 1]
    comp = _competition_sq(sizes[:, None], sizes[None, :], dx * dx + dy * dy, cfg)
    np.fill_diagonal(comp, 0.0)
    # Summing each row in sorted order makes the result independent of the
    # particle labelling, bit for bit.
    mean_c = np.sort(comp, axis=1).sum(axis=1) / (n - 1)
    light = np.log(theta[:, S] / cfg.s_m)
    v = gamma * sizes * (light * (1.0 - mean_c) - np.log(sizes / cfg.s_m))
    return (v, comp) if return_competition else v


def _check(ensemble: ParticleEnsemble, comp: np.ndarray | None) -> None:
    cfg = ensemble.config
    bad = ~in_domain(ensemble.sizes, ensemble.theta, cfg)
    if np.any(bad):
        ensemble.warnings.append({
            "step": ensemble.step_index, "kind": "size-out-of-domain",
            "count": int(bad.sum()), "plants": np.flatnonzero(bad)[:10].tolist(),
        })
    if comp is not None and comp.size > 1:
        lo, hi = float(comp.min()), float(comp.max())
        if lo < 0.0 or hi > 1.0:
            ensemble.warnings.append({
                "step": ensemble.step_index, "kind": "competition-out-of-range",
                "min": lo, "max": hi,
            })


def step(ensemble: ParticleEnsemble) -> ParticleEnsemble:
    """Advance the ensemble by one Euler step of ``config.dt`` (in place, returned)."""
    cfg = ensemble.config
    v, comp = velocity(ensemble.sizes, ensemble.theta, cfg, return_competition=True)
    if ensemble.step_index == 0:
        _check(ensemble, None)
    if comp.size > 1 and (comp.min() < 0.0 or comp.max() > 1.0):
        ensemble.warnings.append({
            "step": ensemble.step_index, "kind": "competition-out-of-range",
            "min": float(comp.min()), "max": float(comp.max()),
        })
    new = ensemble.sizes + cfg.dt * v
    if ensemble.clamp:
        new = np.clip(new, np.nextafter(cfg.s_m, np.inf), ensemble.theta[:, S])
    ensemble.sizes = new
    ensemble.step_index += 1
    ensemble.time = ensemble.step_index * cfg.dt
    if ensemble.history is not None:
        ensemble.history = np.vstack([ensemble.history, new[None, :]])
    _check(ensemble, None)
    return ensemble


def n_steps(horizon: float, dt: float) -> int:
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    return int(math.ceil(horizon / dt - 1e-9))


def integrate(cfg: ModelConfig, initial: np.ndarray, steps: int,
              clamp: bool = False) -> ParticleEnsemble:
    """Run ``steps`` Euler steps from ``initial`` and keep the full size history."""
    ens = ParticleEnsemble.from_initial(cfg, initial, clamp=clamp, record=False)
    hist = np.empty((steps + 1, ens.N))
    hist[0] = ens.sizes
    _check(ens, None)
    for k in range(steps):
        v, comp = velocity(ens.sizes, ens.theta, cfg, return_competition=True)
        if comp.size > 1 and (comp.min() < 0.0 or comp.max() > 1.0):
            ens.warnings.append({
                "step": k, "kind": "competition-out-of-range",
                "min": float(comp.min()), "max": float(comp.max()),
            })
        new = ens.sizes + cfg.dt * v
        if clamp:
            new = np.clip(new, np.nextafter(cfg.s_m, np.inf), ens.theta[:, S])
        ens.sizes = new
        ens.step_index = k + 1
        hist[k + 1] = new
        _check(ens, None)
    ens.time = steps * cfg.dt
    ens.history = hist
    if ens.warnings:
        log.warning("%d validity warning(s); first at step %d",
                    len(ens.warnings), ens.warnings[0]["step"])
    return ens


def simulate(cfg: ModelConfig, N: int, horizon: float,
             rng: np.random.Generator | None = None, clamp: bool = False) -> ParticleEnsemble:
    """Draw N plants from the initial law and integrate them up to ``horizon`` days."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if rng is None:
        rng = rngmod.stream(cfg.seed, rngmod.INITIAL_ENSEMBLE)
    initial = sample_initial(cfg, N, rng)
    return integrate(cfg, initial, n_steps(horizon, cfg.dt), clamp=clamp)


def empirical_measure(ensemble: ParticleEnsemble, t_index: int) -> PointCloud:
    """Equal-weight cloud of the N phase points (log-size coordinates) at a recorded step."""
    z = ensemble.phase_points(t_index)
    return PointCloud(to_log_coords(z, ensemble.config))


def tracked_plant_experiment(cfg: ModelConfig, focal_theta, N_list, horizon: float,
                             seed: int | None = None) -> dict[int, np.ndarray]:
    """Size series of one focal plant (index 0) among ``N - 1`` random competitors.

    Competitor sets are nested: the population of size N reuses the first
    ``N - 1`` competitors drawn for the largest N.
    """
    N_list = [int(n) for n in N_list]
    if not N_list:
        raise ValueError("N_list must be nonempty")
    if min(N_list) < 1:
        raise ValueError("every N must be >= 1")
    seed = cfg.seed if seed is None else seed
    focal = np.asarray(focal_theta, dtype=float).reshape(4)
    pool = sample_initial(cfg, max(max(N_list) - 1, 1), rngmod.stream(seed, rngmod.COMPETITORS))
    steps = n_steps(horizon, cfg.dt)
    out = {}
    for n in N_list:
        initial = np.vstack([np.concatenate(([cfg.s0], focal)), pool[: n - 1]])
        out[n] = integrate(cfg, initial, steps).history[:, 0].copy()
    return out


def run_report(ensemble: ParticleEnsemble, seed: int) -> dict:
    return {
        "seed": int(seed),
        "N": ensemble.N,
        "dt": ensemble.config.dt,
        "steps": ensemble.step_index,
        "warnings": ensemble.warnings,
    }
