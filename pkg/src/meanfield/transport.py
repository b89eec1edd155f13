"""Wasserstein-1 distances, moments and the stability-bound diagnostic."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, stats
from scipy.spatial.distance import cdist

from . import rng as rngmod
from .config import ModelConfig
from .model import norm_weights, phase_norm, sample_initial, theory_constants, to_log_coords
from .parallel import worker_count

MAX_ASSIGNMENT = 5000


class CloudSizeError(ValueError):
    pass


@dataclass(frozen=True)
class PointCloud:
    """Equal-weight point cloud in log-size phase coordinates ``(r, x, y, S, gamma)``."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("empty point cloud")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def subsample(self, n: int, rng: np.random.Generator) -> "PointCloud":
        if n > self.n:
            raise CloudSizeError(f"cannot subsample {n} points from {self.n}")
        return PointCloud(self.points[np.sort(rng.choice(self.n, size=n, replace=False))])


def cost_matrix(a: PointCloud, b: PointCloud, cfg: ModelConfig) -> np.ndarray:
    w = norm_weights(cfg)
    return cdist(a.points * w, b.points * w, metric="cityblock")


def w1_exact(a: PointCloud, b: PointCloud, cfg: ModelConfig) -> float:
    """Exact W1 between equal-size clouds under the weighted phase norm."""
    if a.n != b.n:
        raise CloudSizeError(f"cloud sizes differ ({a.n} vs {b.n}); subsample to the smaller one")
    if a.n > MAX_ASSIGNMENT:
        raise CloudSizeError(f"cloud size {a.n} exceeds the assignment capacity {MAX_ASSIGNMENT}")
    cost = cost_matrix(a, b, cfg)
    rows, cols = optimize.linear_sum_assignment(cost)
    return math.fsum(cost[rows, cols]) / a.n


def w1_marginal_1d(a, b) -> float:
    """W1 between two equal-length samples on the line (sorted coupling)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise CloudSizeError(f"sample lengths differ ({a.size} vs {b.size})")
    return math.fsum(np.abs(a - b)) / a.size


def moments(cloud: PointCloud, cfg: ModelConfig) -> tuple[float, float]:
    """Mean phase norm and mean squared phase norm of a cloud."""
    norms = phase_norm(cloud.points, cfg)
    return float(np.mean(norms)), float(np.mean(norms**2))


def initial_cloud(cfg: ModelConfig, n: int, rng: np.random.Generator) -> PointCloud:
    return PointCloud(to_log_coords(sample_initial(cfg, n, rng), cfg))


def support_radius(cfg: ModelConfig) -> float:
    """Phase norm of the corner ``(R_M, L, L, S_M, gamma_M)`` bounding the support."""
    return float(phase_norm(np.array([cfg.R_M, cfg.L, cfg.L, cfg.S_M, cfg.gamma_M]), cfg))


@dataclass
class RateResult:
    sizes: list[int]
    mean_w1: list[float]
    std_w1: list[float]
    slope: float
    slope_stderr: float

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes, "mean_w1": self.mean_w1, "std_w1": self.std_w1,
            "slope": self.slope, "slope_stderr": self.slope_stderr,
        }


def loglog_slope(x, y) -> tuple[float, float]:
    if len(x) < 2:
        return float("nan"), float("nan")
    if len(x) == 2:
        lx, ly = np.log(x), np.log(y)
        return float((ly[1] - ly[0]) / (lx[1] - lx[0])), float("nan")
    fit = stats.linregress(np.log(x), np.log(y))
    return float(fit.slope), float(fit.stderr)


def dudley_rate_experiment(cfg: ModelConfig, sizes, reps: int, seed: int | None = None) -> RateResult:
    """Mean two-sample W1 between independent N-samples of the initial law, per N.

    Each ``(N, rep)`` pair draws from its own sub-stream, so the result does
    not depend on the worker count.
    """
    sizes = [int(n) for n in sizes]
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if reps < 3:
        raise ValueError("reps must be >= 3")
    seed = cfg.seed if seed is None else seed

    def one(job: tuple[int, int]) -> float:
        n, r = job
        a = initial_cloud(cfg, n, rngmod.stream(seed, "dudley", n, r, 0))
        b = initial_cloud(cfg, n, rngmod.stream(seed, "dudley", n, r, 1))
        return w1_exact(a, b, cfg)

    jobs = [(n, r) for n in sizes for r in range(reps)]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        values = np.array(list(pool.map(one, jobs))).reshape(len(sizes), reps)
    means = values.mean(axis=1)
    slope, err = loglog_slope(np.array(sizes, float), means)
    return RateResult(sizes, means.tolist(), values.std(axis=1, ddof=1).tolist(), slope, err)


# -- stability bound -------------------------------------------------------

SIMPSON_PANELS = 1000


def growth_envelope(t, K1: float, M1: float) -> np.ndarray:
    """Bound on the flow growth: ``((3 + 2 M1) exp(2 K1 (1 + M1) t) - 1) / (2 (1 + M1))``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return ((3 + 2 * M1) * np.exp(2 * K1 * (1 + M1) * t) - 1) / (2 * (1 + M1))


def bound_rate_f(t, K1: float, K24: float, M1: float, R0: float) -> np.ndarray:
    Mt = growth_envelope(t, K1, M1)
    with np.errstate(over="ignore", invalid="ignore"):
        return 2 * K24 * Mt * (1 + 2 * Mt * (2 + R0 + M1))


def bound_source_E(t, K1: float, K24: float, M1: float, M2: float) -> np.ndarray:
    Mt = growth_envelope(t, K1, M1)
    with np.errstate(over="ignore", invalid="ignore"):
        return 2 * K24 * Mt * (1 + M1 + 4 * Mt * (1 + 2 * M1 + M1**2 + M2))


def dobrushin_bound(t: float, cfg: ModelConfig, M1: float, M2: float, R0: float,
                    w1_at_0: float, N: int) -> float:
    """Limit form of the stability bound on ``W1(mu_N[t], mu[t])``.

    ``exp(F(t)) (w1_at_0 + 1/(N-1) int_0^t E(tau) exp(-F(tau)) dtau)`` with
    ``F = int f``; both integrals use composite Simpson on 1000 panels.
    Returns ``inf`` once the double-exponential growth overflows.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if N < 2:
        raise ValueError("N must be >= 2")
    if t == 0:
        return float(w1_at_0)
    K = theory_constants(cfg)
    tau = np.linspace(0.0, t, SIMPSON_PANELS + 1)
    f = bound_rate_f(tau, K.K1, K.K24, M1, R0)
    if not np.all(np.isfinite(f)):
        return float("inf")
    F = integrate.cumulative_simpson(f, x=tau, initial=0.0)
    if not np.all(np.isfinite(F)) or F[-1] > 700:
        return float("inf")
    E = bound_source_E(tau, K.K1, K.K24, M1, M2)
    inner = integrate.simpson(E * np.exp(-F), x=tau)
    with np.errstate(over="ignore"):
        value = math.exp(F[-1]) * (w1_at_0 + inner / (N - 1))
    return value if math.isfinite(value) else float("inf")
