"""Beta-kernel size densities and parameter-marginalized expectation surfaces."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import rng as rngmod
from .model import size_bounds
from .scheme import FlowApproximation, sample_mfl

GRID_POINTS = 512
_SAMPLE_CHUNK = 4096


class SupportError(ValueError):
    """A sample lies outside the density support."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


@dataclass
class DensityEstimate:
    support: tuple[float, float]
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    n_samples: int
    clipped: int = 0
    meta: dict = field(default_factory=dict)

    def integral(self) -> float:
        return float(integrate.trapezoid(self.values, self.grid))

    def mass(self, lo: float | None = None, hi: float | None = None) -> float:
        """Trapezoid mass of the estimate restricted to ``[lo, hi]``."""
        lo = self.support[0] if lo is None else lo
        hi = self.support[1] if hi is None else hi
        keep = (self.grid >= lo) & (self.grid <= hi)
        if keep.sum() < 2:
            return 0.0
        return float(integrate.trapezoid(self.values[keep], self.grid[keep]))


def _beta_logpdf(u: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # xlogy keeps the boundary nodes finite: 0 * log 0 = 0 when a or b equals 1
    return (special.xlogy(a - 1, u) + special.xlog1py(b - 1, -u)
            - special.betaln(a, b))


def beta_kde(samples, support: tuple[float, float], bandwidth: float | None = None,
             grid_points: int = GRID_POINTS) -> DensityEstimate:
    """Beta-kernel density estimate on a closed interval.

    Samples are mapped to ``u`` in [0, 1]; each contributes the Beta density
    with shapes ``u_i / b + 1`` and ``(1 - u_i) / b + 1``, so no mass leaks
    past the ends. Default bandwidth is ``len(samples) ** -0.4``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    lo, hi = map(float, support)
    if not hi > lo:
        raise ValueError("support must satisfy lo < hi")
    if x.size == 0:
        raise ValueError("no samples")
    bad = np.flatnonzero(~((x >= lo) & (x <= hi)))
    if bad.size:
        i = int(bad[0])
        raise SupportError(f"sample {i} = {x[i]!r} outside [{lo}, {hi}]", i)
    b = x.size ** -0.4 if bandwidth is None else float(bandwidth)
    if not b > 0:
        raise ValueError("bandwidth must be > 0")
    grid = np.linspace(lo, hi, grid_points)
    ug = (grid - lo) / (hi - lo)
    u = (x - lo) / (hi - lo)
    # roundoff from the affine map would make an edge kernel vanish on its own node
    tol = 8 * np.finfo(float).eps * max(abs(lo), abs(hi)) / (hi - lo)
    u[u < tol] = 0.0
    u[u > 1.0 - tol] = 1.0
    acc = np.zeros(grid_points)
    for start in range(0, u.size, _SAMPLE_CHUNK):
        ui = u[start:start + _SAMPLE_CHUNK, None]
        acc += np.exp(_beta_logpdf(ug[None, :], ui / b + 1.0, (1.0 - ui) / b + 1.0)).sum(axis=0)
    values = acc / x.size / (hi - lo)
    return DensityEstimate((lo, hi), grid, values, b, int(x.size))


def size_marginal_snapshots(fa: FlowApproximation, iterations, count: int = 10_000,
                            seed: int | None = None, bandwidth: float | None = None,
                            grid_points: int = GRID_POINTS) -> dict[int, DensityEstimate]:
    """Density of the mean-field size marginal at each requested iteration.

    Reconstructed sizes that fall outside ``[s_m, S_M]`` are clipped back and
    counted in ``clipped``.
    """
    cfg = fa.config
    seed = fa.scheme.seed if seed is None else seed
    support = (cfg.s_m, cfg.S_M)
    out = {}
    for n in iterations:
        n = int(n)
        if n > fa.n_done:
            raise IndexError(f"iteration {n} not computed (have 0..{fa.n_done})")
        sizes, _ = sample_mfl(fa, n, count, rngmod.stream(seed, rngmod.MFL_SAMPLE, n))
        outside = int(np.count_nonzero((sizes < support[0]) | (sizes > support[1])))
        est = beta_kde(np.clip(sizes, *support), support, bandwidth, grid_points)
        est.clipped = outside
        est.meta = {"n": n, "t_days": n * cfg.dt}
        out[n] = est
    return out


@dataclass
class ExpectationSurface:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # values[i, j] at (x[i], y[j])
    mc_count: int
    n: int


def expectation_surface(fa: FlowApproximation, n: int, grid: int = 50, mc: int = 1000,
                        seed: int | None = None) -> ExpectationSurface:
    """Mean reconstructed size over growth parameters at each plot location.

    The same uniforms ``u, u'`` are reused at every node, which keeps the
    surface smooth in ``(x, y)``.
    """
    cfg = fa.config
    seed = fa.scheme.seed if seed is None else seed
    if grid < 2 or mc < 1:
        raise ValueError("need grid >= 2 and mc >= 1")
    xs = np.linspace(0.0, cfg.L, grid)
    ys = np.linspace(0.0, cfg.L, grid)
    if n == 0:
        return ExpectationSurface(xs, ys, np.full((grid, grid), cfg.s0), mc, 0)
    u = rngmod.stream(seed, rngmod.MARGINAL_U).random(mc)
    v = rngmod.stream(seed, rngmod.MARGINAL_UPRIME).random(mc)
    values = np.empty((grid, grid))
    for i, x in enumerate(xs):
        S1, _, g1, _ = size_bounds(x, ys, cfg)
        theta = np.empty((grid, mc, 4))
        theta[..., 0] = x
        theta[..., 1] = ys[:, None]
        theta[..., 2] = S1 + cfg.sigma_S * u
        theta[..., 3] = g1[:, None] + cfg.sigma_gamma * v
        values[i] = fa.reconstruct(theta.reshape(-1, 4), n).reshape(grid, mc).mean(axis=1)
    return ExpectationSurface(xs, ys, values, mc, n)
