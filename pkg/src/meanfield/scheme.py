"""Semi-Lagrangian approximation of the mean-field characteristic flow.

The flow ``s_n(theta)`` is advanced by an explicit Euler step whose velocity
is a Monte-Carlo average over a fixed parameter sample ``omega``.  Off-sample
values are reconstructed by Gaussian-process conditioning on a training set,
with a quadratic polynomial mean and a covariance kernel built from the
interaction function itself.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from . import rng as rngmod
from .config import ModelConfig, SchemeConfig
from .model import _interaction_s, sample_parameters

log = logging.getLogger(__name__)

Interaction = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, ModelConfig], np.ndarray]

_ROW_CHUNK = 2048


class SchemeError(RuntimeError):
    """Numerical failure of the scheme at a given iteration."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


class FitError(SchemeError):
    pass


class ReconstructionError(SchemeError):
    pass


def _g(interaction: Interaction | None) -> Interaction:
    return _interaction_s if interaction is None else interaction


def interaction_matrix(s_points, points, s_omega, omega, cfg: ModelConfig,
                       interaction: Interaction | None = None) -> np.ndarray:
    """``G[p, i] = g(s_points[p], points[p], s_omega[i], omega[i])``."""
    g = _g(interaction)
    s_points = np.asarray(s_points, dtype=float)
    points = np.asarray(points, dtype=float)
    return g(s_points[:, None], points[:, None, :], np.asarray(s_omega)[None, :],
             np.asarray(omega)[None, :, :], cfg)


def induction_step(values, points, omega_values, omega, cfg: ModelConfig,
                   interaction: Interaction | None = None, iteration: int | None = None) -> np.ndarray:
    """One Euler step of the empirical flow at ``points``.

    Competitor states are always the omega-sample values ``omega_values``;
    a point that belongs to omega interacts with itself, as in the plain mean.
    """
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise SchemeError("flow values must be > 0", iteration)
    out = np.empty_like(values)
    for lo in range(0, len(values), _ROW_CHUNK):
        sl = slice(lo, lo + _ROW_CHUNK)
        G = interaction_matrix(values[sl], points[sl], omega_values, omega, cfg, interaction)
        out[sl] = values[sl] + cfg.dt * G.mean(axis=1)
    if not np.all(np.isfinite(out)) or np.any(out <= 0):
        raise SchemeError("non-positive or non-finite flow value after update", iteration)
    return out


# -- quadratic mean --------------------------------------------------------

_PAIRS = [(i, j) for i in range(4) for j in range(i, 4)]


def _monomials(theta: np.ndarray) -> np.ndarray:
    quad = np.column_stack([theta[:, i] * theta[:, j] for i, j in _PAIRS])
    return np.column_stack([np.ones(len(theta)), theta, quad])


@dataclass(frozen=True)
class QuadraticMean:
    """``a + b.theta + c . vec(theta theta^T)`` with ``c`` symmetric (16 entries)."""

    a: float
    b: np.ndarray
    c: np.ndarray

    @classmethod
    def constant(cls, value: float) -> "QuadraticMean":
        return cls(float(value), np.zeros(4), np.zeros(16))

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        C = self.c.reshape(4, 4)
        return self.a + theta @ self.b + np.einsum("...i,ij,...j->...", theta, C, theta)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b.tolist(), "c": self.c.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticMean":
        return cls(float(d["a"]), np.asarray(d["b"], float), np.asarray(d["c"], float))


def fit_polynomial_mean(omega, values) -> QuadraticMean:
    """Least-squares quadratic fit of ``values`` over the parameter sample.

    The fit runs on the 15 distinct monomials of standardized parameters, then
    maps back to raw coordinates; off-diagonal quadratic weights are split
    evenly between ``(i, j)`` and ``(j, i)``.
    """
    omega = np.asarray(omega, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(omega) < 15:
        raise FitError(f"need at least 15 sample points for a quadratic fit, got {len(omega)}")
    mu = omega.mean(axis=0)
    sd = omega.std(axis=0)
    if np.any(sd == 0):
        raise FitError("degenerate sample: a parameter coordinate is constant")
    Z = _monomials((omega - mu) / sd)
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise FitError("rank-deficient quadratic design")
    coef, *_ = np.linalg.lstsq(Z, values, rcond=None)
    a_z, b_z, q = coef[0], coef[1:5], coef[5:]
    Cz = np.zeros((4, 4))
    for (i, j), w in zip(_PAIRS, q):
        if i == j:
            Cz[i, i] = w
        else:
            Cz[i, j] = Cz[j, i] = w / 2
    D = 1.0 / sd
    C = D[:, None] * Cz * D[None, :]
    b = D * b_z - 2.0 * C @ mu
    a = a_z - b_z @ (D * mu) + mu @ C @ mu
    return QuadraticMean(float(a), b, C.ravel())


# -- kernel and reconstruction ---------------------------------------------

def _centered_features(points, mean_prev: QuadraticMean, omega, omega_prev,
                       cfg: ModelConfig, interaction: Interaction | None) -> np.ndarray:
    G = interaction_matrix(mean_prev(points), points, omega_prev, omega, cfg, interaction)
    return G - G.mean(axis=1, keepdims=True)


def kernel(theta1, theta2, mean_prev: QuadraticMean, omega, omega_prev,
           cfg: ModelConfig, interaction: Interaction | None = None) -> np.ndarray:
    """Covariance kernel ``k_n`` between two sets of parameters.

    ``(dt^2 / M)`` times the empirical covariance over omega of the
    interaction evaluated at the previous polynomial mean; the covariance is
    the biased one, ``(1/M) sum g1 g2 - (1/M^2) sum g1 sum g2``, computed in
    centred form.
    """
    theta1 = np.atleast_2d(np.asarray(theta1, dtype=float))
    theta2 = np.atleast_2d(np.asarray(theta2, dtype=float))
    M = len(omega)
    F1 = _centered_features(theta1, mean_prev, omega, omega_prev, cfg, interaction)
    F2 = F1 if theta2 is theta1 else _centered_features(theta2, mean_prev, omega, omega_prev,
                                                        cfg, interaction)
    return cfg.dt**2 / M * (F1 @ F2.T) / M


@dataclass
class GPState:
    """Everything needed to evaluate the reconstruction at iteration n >= 1."""

    mean: QuadraticMean
    mean_prev: QuadraticMean
    omega_prev: np.ndarray
    alpha: np.ndarray
    weights: np.ndarray  # centred training features contracted with alpha, length M


def solve_weights(K: np.ndarray, residual: np.ndarray, jitter: float,
                  iteration: int | None = None) -> np.ndarray:
    """Solve ``(K + jitter * mean(diag K) I) alpha = residual`` by Cholesky."""
    K = 0.5 * (K + K.T)
    scale = float(np.mean(np.diag(K)))
    if not np.isfinite(scale):
        raise ReconstructionError("non-finite kernel matrix", iteration)
    A = K + jitter * scale * np.eye(len(K))
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise ReconstructionError(f"kernel system is singular ({exc})", iteration) from exc
    alpha = linalg.cho_solve(factor, residual)
    if not np.all(np.isfinite(alpha)):
        raise ReconstructionError("kernel solve produced non-finite weights", iteration)
    return alpha


def condition(train, train_values, mean: QuadraticMean, mean_prev: QuadraticMean,
              omega, omega_prev, cfg: ModelConfig, jitter: float,
              interaction: Interaction | None = None, iteration: int | None = None) -> GPState:
    """Condition the GP on the training values and precompute reconstruction weights."""
    M = len(omega)
    F = _centered_features(np.asarray(train, float), mean_prev, omega, omega_prev, cfg, interaction)
    K = cfg.dt**2 / M * (F @ F.T) / M
    alpha = solve_weights(K, np.asarray(train_values) - mean(train), jitter, iteration)
    return GPState(mean, mean_prev, np.asarray(omega_prev, float).copy(), alpha, F.T @ alpha)


def gp_reconstruct(theta, state: GPState, omega, cfg: ModelConfig,
                   interaction: Interaction | None = None) -> np.ndarray:
    """Posterior mode ``m_n(theta) + sum_j alpha_j k_n(theta, theta_j)``."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    M = len(omega)
    out = np.empty(len(theta))
    for lo in range(0, len(theta), _ROW_CHUNK):
        sl = slice(lo, lo + _ROW_CHUNK)
        F = _centered_features(theta[sl], state.mean_prev, omega, state.omega_prev, cfg, interaction)
        out[sl] = state.mean(theta[sl]) + cfg.dt**2 / M**2 * (F @ state.weights)
    return out


# -- full scheme -----------------------------------------------------------

@dataclass
class FlowApproximation:
    """Per-iteration state of the scheme (index 0 is the initial condition)."""

    config: ModelConfig
    scheme: SchemeConfig
    omega: np.ndarray
    train: np.ndarray
    test: np.ndarray
    flow_omega: list[np.ndarray] = field(default_factory=list)
    flow_train: list[np.ndarray] = field(default_factory=list)
    flow_test: list[np.ndarray] = field(default_factory=list)
    poly: list[QuadraticMean] = field(default_factory=list)
    gp: list[GPState | None] = field(default_factory=list)
    J: list[float] = field(default_factory=list)
    J_poly: list[float] = field(default_factory=list)
    interaction: Interaction | None = None

    @property
    def n_done(self) -> int:
        return len(self.flow_omega) - 1

    @property
    def alpha(self) -> list[np.ndarray | None]:
        return [None if st is None else st.alpha for st in self.gp]

    def reconstruct(self, theta, n: int) -> np.ndarray:
        """Reconstructed flow ``s_hat_n(theta)`` at iteration ``n``."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if not 0 <= n <= self.n_done:
            raise IndexError(f"iteration {n} not computed (have 0..{self.n_done})")
        if n == 0:
            return np.full(len(theta), self.config.s0)
        st = self.gp[n]
        if st is None:
            raise ReconstructionError("kernel solve failed at this iteration", n)
        return gp_reconstruct(theta, st, self.omega, self.config, self.interaction)

    def mean(self, theta, n: int) -> np.ndarray:
        return self.poly[n](np.atleast_2d(np.asarray(theta, dtype=float)))


def initialize(cfg: ModelConfig, scfg: SchemeConfig,
               interaction: Interaction | None = None) -> FlowApproximation:
    omega = sample_parameters(cfg, scfg.M, rngmod.stream(scfg.seed, rngmod.OMEGA_SAMPLE))
    train = sample_parameters(cfg, scfg.K, rngmod.stream(scfg.seed, rngmod.TRAIN_SET))
    test = sample_parameters(cfg, scfg.K, rngmod.stream(scfg.seed, rngmod.TEST_SET))
    fa = FlowApproximation(cfg, scfg, omega, train, test, interaction=interaction)
    fa.flow_omega.append(np.full(scfg.M, cfg.s0))
    fa.flow_train.append(np.full(scfg.K, cfg.s0))
    fa.flow_test.append(np.full(scfg.K, cfg.s0))
    fa.poly.append(QuadraticMean.constant(cfg.s0))
    fa.gp.append(None)
    fa.J.append(float("nan"))
    fa.J_poly.append(float("nan"))
    return fa


def advance(fa: FlowApproximation) -> FlowApproximation:
    """Run one iteration: flow update, polynomial fit, GP weights, test errors."""
    cfg, scfg = fa.config, fa.scheme
    n = fa.n_done + 1
    prev = fa.flow_omega[-1]
    g = fa.interaction
    fa.flow_omega.append(induction_step(prev, fa.omega, prev, fa.omega, cfg, g, n))
    fa.flow_train.append(induction_step(fa.flow_train[-1], fa.train, prev, fa.omega, cfg, g, n))
    fa.flow_test.append(induction_step(fa.flow_test[-1], fa.test, prev, fa.omega, cfg, g, n))
    try:
        mean = fit_polynomial_mean(fa.omega, fa.flow_omega[n])
    except FitError as exc:
        raise FitError(str(exc), n) from exc
    fa.poly.append(mean)
    truth = fa.flow_test[n]
    fa.J_poly.append(float(np.sqrt(np.mean((mean(fa.test) - truth) ** 2))))
    try:
        st = condition(fa.train, fa.flow_train[n], mean, fa.poly[n - 1], fa.omega, prev,
                       cfg, scfg.jitter, g, n)
    except ReconstructionError as exc:
        log.warning("%s; test error recorded as missing", exc)
        fa.gp.append(None)
        fa.J.append(float("nan"))
        return fa
    fa.gp.append(st)
    rec = gp_reconstruct(fa.test, st, fa.omega, cfg, g)
    fa.J.append(float(np.sqrt(np.mean((rec - truth) ** 2))))
    return fa


def run_scheme(cfg: ModelConfig, scfg: SchemeConfig,
               interaction: Interaction | None = None) -> FlowApproximation:
    """Initialize and run ``scfg.n_max`` iterations of the scheme."""
    fa = initialize(cfg, scfg, interaction)
    for _ in range(scfg.n_max):
        advance(fa)
    return fa


def sample_mfl(fa: FlowApproximation, n: int, count: int,
               rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Approximate sample of the mean-field law at iteration ``n``.

    Returns ``(sizes, theta)`` with ``theta`` drawn afresh from the initial
    parameter law and ``sizes = s_hat_n(theta)``.
    """
    if rng is None:
        rng = rngmod.stream(fa.scheme.seed, rngmod.MFL_SAMPLE, n)
    theta = sample_parameters(fa.config, count, rng)
    if count == 0:
        return np.empty(0), theta
    return fa.reconstruct(theta, n), theta
