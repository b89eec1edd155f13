"""Light-competition growth model: interaction, initial law, constants.

Parameters are carried as float arrays whose last axis is ``(x, y, S, gamma)``.
Phase points add the state in front: ``(s, x, y, S, gamma)`` in size
coordinates or ``(r, x, y, S, gamma)`` with ``r = log(s / s_m)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig

X, Y, S, GAMMA = range(4)


class DomainError(ValueError):
    """Input outside the domain where the model is defined."""


@dataclass(frozen=True)
class Parameters:
    x: float
    y: float
    S: float
    gamma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.S, self.gamma], dtype=float)


@dataclass(frozen=True)
class PhaseVector:
    """A phase point; ``coord`` says whether ``state`` is a size or a log-size."""

    state: float
    params: Parameters
    coord: str = "s"

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.state], self.params.as_array()))

    def to_r(self, cfg: ModelConfig) -> "PhaseVector":
        if self.coord == "r":
            return self
        if not self.state > 0:
            raise DomainError("size must be > 0 to take its log")
        return PhaseVector(math.log(self.state / cfg.s_m), self.params, "r")

    def to_s(self, cfg: ModelConfig) -> "PhaseVector":
        if self.coord == "s":
            return self
        return PhaseVector(cfg.s_m * math.exp(self.state), self.params, "s")


@dataclass(frozen=True)
class LipschitzConstants:
    K1: float
    K2: float
    K3: float
    K4: float
    K24: float


def _finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input")


def competition_factor(s1, s2, d, cfg: ModelConfig) -> np.ndarray:
    """Shading exerted by a plant of size ``s2`` at distance ``d`` on one of size ``s1``."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    d = np.asarray(d, dtype=float)
    _finite(s1, s2, d)
    if np.any(s1 <= 0) or np.any(s2 <= 0):
        raise DomainError("sizes must be > 0")
    return _competition_sq(s1, s2, d * d, cfg)


def _competition_sq(s1, s2, d2, cfg: ModelConfig) -> np.ndarray:
    # Unchecked kernel of competition_factor, on squared distances.
    height = np.log(s2 / cfg.s_m)
    proximity = 2.0 * cfg.R_M * (1.0 + d2 / cfg.sigma_x**2)
    return height / proximity * (1.0 + np.tanh(np.log(s2 / s1) / cfg.sigma_r))


def _sq_distance(theta1: np.ndarray, theta2: np.ndarray) -> np.ndarray:
    dx = theta1[..., X] - theta2[..., X]
    dy = theta1[..., Y] - theta2[..., Y]
    return dx * dx + dy * dy


def interaction_s(s1, theta1, s2, theta2, cfg: ModelConfig) -> np.ndarray:
    """Growth rate (m/day) of plant 1 under competition from plant 2.

    Broadcasts over leading axes; ``theta`` arrays end in ``(x, y, S, gamma)``.
    """
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    theta1 = np.asarray(theta1, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    _finite(s1, s2, theta1, theta2)
    if np.any(s1 <= 0) or np.any(s2 <= 0):
        raise DomainError("sizes must be > 0")
    return _interaction_s(s1, theta1, s2, theta2, cfg)


def _interaction_s(s1, theta1, s2, theta2, cfg: ModelConfig) -> np.ndarray:
    c = _competition_sq(s1, s2, _sq_distance(theta1, theta2), cfg)
    gamma1 = theta1[..., GAMMA]
    light = np.log(theta1[..., S] / cfg.s_m)
    return gamma1 * s1 * (light * (1.0 - c) - np.log(s1 / cfg.s_m))


def interaction_r(r1, theta1, r2, theta2, cfg: ModelConfig) -> np.ndarray:
    """Interaction in log-size coordinates (1/day)."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    theta1 = np.asarray(theta1, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    _finite(r1, r2, theta1, theta2)
    proximity = 2.0 * cfg.R_M * (1.0 + _sq_distance(theta1, theta2) / cfg.sigma_x**2)
    c = r2 / proximity * (1.0 + np.tanh((r2 - r1) / cfg.sigma_r))
    light = np.log(theta1[..., S] / cfg.s_m)
    return theta1[..., GAMMA] * (light * (1.0 - c) - r1)


def gompertz(t, S_eq, gamma, s_init) -> np.ndarray:
    """Closed-form isolated growth ``S exp(-exp(-gamma t) log(S / s_init))``."""
    t = np.asarray(t, dtype=float)
    return S_eq * np.exp(-np.exp(-gamma * t) * np.log(S_eq / s_init))


def size_bounds(x, y, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Conditional supports ``S1(x), S2(x), gamma1(y), gamma2(y)`` of the initial law."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    S1 = cfg.S_m + x / cfg.L * (cfg.S_M - cfg.sigma_S - cfg.S_m)
    g1 = cfg.gamma_m + y / cfg.L * (cfg.gamma_M - cfg.sigma_gamma - cfg.gamma_m)
    return S1, S1 + cfg.sigma_S, g1, g1 + cfg.sigma_gamma


def sample_parameters(cfg: ModelConfig, count: int, rng: np.random.Generator,
                      x=None, y=None) -> np.ndarray:
    """Draw ``count`` i.i.d. parameter vectors from the heterogeneous initial law.

    ``x`` or ``y`` may be given to draw conditionally on a position.
    """
    cfg.validate()
    if count < 0:
        raise ValueError("count must be >= 0")
    # Always consume the same uniforms so forcing x does not shift the rest.
    u = rng.random((count, 4))
    xs = u[:, 0] * cfg.L if x is None else np.broadcast_to(np.asarray(x, float), (count,))
    ys = u[:, 1] * cfg.L if y is None else np.broadcast_to(np.asarray(y, float), (count,))
    S1, _, g1, _ = size_bounds(xs, ys, cfg)
    theta = np.empty((count, 4))
    theta[:, X] = xs
    theta[:, Y] = ys
    theta[:, S] = S1 + cfg.sigma_S * u[:, 2]
    theta[:, GAMMA] = g1 + cfg.sigma_gamma * u[:, 3]
    return theta


def sample_initial(cfg: ModelConfig, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` initial phase points ``(s0, x, y, S, gamma)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    theta = sample_parameters(cfg, count, rng)
    return np.column_stack([np.full(count, cfg.s0), theta])


def theory_constants(cfg: ModelConfig) -> LipschitzConstants:
    g = cfg.gamma_M
    K1 = g * max(1.0, cfg.R_M)
    K2 = g * max(1.0, 1.0 / (4.0 * cfg.sigma_r))
    K3 = g * max(1.0, 1.0 / (2.0 * cfg.sigma_r))
    K4 = g * max(2.0 + cfg.R_M, 1.0 + 2.0 * cfg.L**2 / cfg.sigma_x**2)
    return LipschitzConstants(K1, K2, K3, K4, K2 + K4)


def norm_weights(cfg: ModelConfig) -> np.ndarray:
    """Reciprocal reference vector ``1 / (1, L, L, s_m, gamma_m)``."""
    return 1.0 / np.array([1.0, cfg.L, cfg.L, cfg.s_m, cfg.gamma_m])


def phase_norm(z, cfg: ModelConfig) -> np.ndarray:
    """Weighted L1 norm of log-size phase points ``(r, x, y, S, gamma)``."""
    z = np.asarray(z, dtype=float)
    return np.abs(z) @ norm_weights(cfg)


def to_log_coords(z_s, cfg: ModelConfig) -> np.ndarray:
    z = np.array(z_s, dtype=float)
    if np.any(z[..., 0] <= 0):
        raise DomainError("sizes must be > 0")
    z[..., 0] = np.log(z[..., 0] / cfg.s_m)
    return z


def to_size_coords(z_r, cfg: ModelConfig) -> np.ndarray:
    z = np.array(z_r, dtype=float)
    z[..., 0] = cfg.s_m * np.exp(z[..., 0])
    return z


def in_domain(s, theta, cfg: ModelConfig) -> np.ndarray:
    """Elementwise membership ``s_m < s <= S`` and ``s_m < S <= s_m e^R_M``."""
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    S_eq = theta[..., S]
    return ((s > cfg.s_m) & (s <= S_eq) & (S_eq > cfg.s_m)
            & (S_eq <= cfg.s_m * math.exp(cfg.R_M) * (1 + 1e-12)))
