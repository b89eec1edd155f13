"""Comparisons between finite populations and the mean-field approximation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .config import ModelConfig
from .model import sample_initial, sample_parameters, to_log_coords
from .particles import integrate, n_steps
from .scheme import FlowApproximation, sample_mfl
from .transport import (PointCloud, dobrushin_bound, moments, initial_cloud,
                        support_radius, w1_exact)

REFERENCE_SIZE = 4096
CORRELATION_PARTNERS = 10


class CoverageError(ValueError):
    """Requested time lies beyond the computed mean-field iterations."""


def iteration_for(t: float, fa: FlowApproximation) -> int:
    n = int(round(t / fa.config.dt))
    if abs(n * fa.config.dt - t) > 1e-9 * max(1.0, t):
        raise CoverageError(f"t = {t} is not a multiple of dt = {fa.config.dt}")
    if n > fa.n_done:
        raise CoverageError(f"t = {t} needs iteration {n}, flow only covers {fa.n_done}")
    return n


@dataclass
class ChaosResult:
    N_list: list[int]
    t: float
    reps: int
    mean_discrepancy: list[float]
    correlation: list[float | None]
    focal: list[float]

    def to_dict(self) -> dict:
        return {
            "N_list": self.N_list, "t": self.t, "reps": self.reps,
            "mean_discrepancy": self.mean_discrepancy,
            "correlation": self.correlation, "focal_theta": self.focal,
        }


def chaos_propagation_test(cfg: ModelConfig, fa: FlowApproximation, N_list, t: float,
                           reps: int, seed: int | None = None, focal_theta=None) -> ChaosResult:
    """Focal-plant discrepancy to the mean-field flow, and pair correlations, per N.

    Plant 0 is the same in every replicate; the other ``N - 1`` plants are
    redrawn.  The independence proxy is the across-replicate correlation of
    ``s_i(t)`` and ``s_j(t)`` for two redrawn plants, averaged over all label
    pairs among the first ten of them (``None`` when undefined).
    """
    seed = cfg.seed if seed is None else seed
    n = iteration_for(t, fa)
    steps = n_steps(t, cfg.dt) if t > 0 else 0
    if focal_theta is None:
        focal = sample_parameters(cfg, 1, rngmod.stream(seed, "focal"))[0]
    else:
        focal = np.asarray(focal_theta, dtype=float).reshape(4)
    target = float(fa.reconstruct(focal[None, :], n)[0])
    discrepancy, correlation = [], []
    for N in N_list:
        N = int(N)
        if N < 2:
            raise ValueError("chaos test needs N >= 2")
        finals = np.empty((reps, min(N, CORRELATION_PARTNERS + 1)))
        for r in range(reps):
            others = sample_initial(cfg, N - 1, rngmod.stream(seed, rngmod.COMPETITORS, N, r))
            initial = np.vstack([np.concatenate(([cfg.s0], focal)), others])
            ens = integrate(cfg, initial, steps)
            finals[r] = ens.history[-1, : finals.shape[1]]
        discrepancy.append(float(np.mean(np.abs(finals[:, 0] - target))))
        if reps < 2:
            correlation.append(None)
            continue
        labels = range(1, finals.shape[1])
        pairs = [(i, j) for i in labels for j in labels if i < j]
        if not pairs:
            correlation.append(None)
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            c = float(np.mean([np.corrcoef(finals[:, i], finals[:, j])[0, 1] for i, j in pairs]))
        correlation.append(c if np.isfinite(c) else None)
    return ChaosResult([int(x) for x in N_list], t, reps, discrepancy, correlation, focal.tolist())


def mfl_cloud(fa: FlowApproximation, n: int, size: int, seed: int) -> PointCloud:
    """Mean-field sample at iteration n in log-size phase coordinates.

    Parameters come from a fixed reference draw of 4096 points subsampled
    to ``size``, so clouds at different iterations share their parameters.
    """
    cfg = fa.config
    theta = sample_parameters(cfg, REFERENCE_SIZE, rngmod.stream(seed, rngmod.REFERENCE_CLOUD))
    if size > REFERENCE_SIZE:
        raise ValueError(f"size {size} exceeds the reference cloud ({REFERENCE_SIZE})")
    idx = np.sort(rngmod.stream(seed, rngmod.SUBSAMPLE, size).choice(REFERENCE_SIZE, size, replace=False))
    theta = theta[idx]
    sizes = fa.reconstruct(theta, n)
    return PointCloud(to_log_coords(np.column_stack([sizes, theta]), cfg))


@dataclass
class BoundCheck:
    N: int
    times: list[float]
    w1: list[float]
    bound: list[float]

    def to_dict(self) -> dict:
        return {"N": self.N, "times": self.times, "w1": self.w1,
                "bound": [b if np.isfinite(b) else "inf" for b in self.bound]}


def w1_versus_time(fa: FlowApproximation, history: np.ndarray, theta: np.ndarray,
                   times, seed: int, with_bound: bool = True) -> BoundCheck:
    """W1 between a particle run and the mean-field sample at several times.

    ``history`` is the particle size history (steps x N) started at ``t = 0``.
    The bound at each time uses moments of a large initial-law reference
    sample and the measured W1 at ``t = 0``.
    """
    cfg = fa.config
    N = history.shape[1]
    def cloud_at(k: int) -> PointCloud:
        return PointCloud(to_log_coords(np.column_stack([history[k], theta]), cfg))

    w0 = w1_exact(cloud_at(0), mfl_cloud(fa, 0, N, seed), cfg)
    M1, M2 = moments(initial_cloud(cfg, 10**5, rngmod.stream(seed, "moments")), cfg)
    R0 = support_radius(cfg)
    w1s, bounds = [], []
    for t in times:
        n = iteration_for(t, fa)
        if n >= len(history):
            raise CoverageError(f"particle history does not reach t = {t}")
        w1s.append(w0 if n == 0 else w1_exact(cloud_at(n), mfl_cloud(fa, n, N, seed), cfg))
        if with_bound:
            bounds.append(dobrushin_bound(t, cfg, M1, M2, R0, w0, N) if N >= 2 else float("inf"))
    return BoundCheck(N, [float(t) for t in times], w1s, bounds)
