"""Model and scheme configuration.

Field names of :class:`ModelConfig` are the JSON keys of the config file.
They are case-sensitive (``S_m`` and ``s_m`` are different quantities).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    """Raised for missing, unknown or inconsistent configuration values."""


@dataclass(frozen=True)
class ModelConfig:
    L: float
    S_m: float
    S_M: float
    sigma_S: float
    gamma_m: float
    gamma_M: float
    sigma_gamma: float
    s0: float
    s_m: float
    R_M: float
    sigma_x: float
    sigma_r: float
    dt: float
    seed: int = 0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{f.name}: expected a number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"{f.name}: must be finite")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed: must be a nonnegative integer")
        positive = ("L", "S_m", "sigma_S", "gamma_m", "gamma_M", "sigma_gamma",
                    "s0", "s_m", "sigma_x", "sigma_r", "dt")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be > 0")
        if not self.S_m + self.sigma_S < self.S_M:
            raise ConfigError("S_m + sigma_S < S_M is violated")
        if not self.gamma_m + self.sigma_gamma <= self.gamma_M:
            raise ConfigError("gamma_m + sigma_gamma <= gamma_M is violated")
        if not self.s_m < self.S_m:
            raise ConfigError("s_m < S_m is violated (equilibrium sizes must exceed s_m)")
        # Tolerate rounding when R_M is written out as log(S_M/s_m).
        if self.R_M < math.log(self.S_M / self.s_m) * (1 - 1e-12):
            raise ConfigError("R_M >= log(S_M/s_m) is violated")
        if not self.s_m < self.s0 <= self.S_m:
            raise ConfigError("initial size must satisfy s_m < s0 <= S_m")

    @property
    def r0(self) -> float:
        """Initial log-size ``log(s0/s_m)``."""
        return math.log(self.s0 / self.s_m)

    def with_overrides(self, **kwargs: Any) -> "ModelConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelConfig":
        names = [f.name for f in fields(cls)]
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        missing = [n for n in names if n not in data and n != "seed"]
        if missing:
            raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
        return cls(**{n: data[n] for n in names if n in data})

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a flat JSON object")
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def reference_config(**overrides: Any) -> ModelConfig:
    """Reference configuration of the competition experiments."""
    s_m = 5e-2
    S_M = 1.0
    L = 1.0
    base = dict(
        L=L, S_m=0.8, S_M=S_M, sigma_S=1e-2,
        gamma_m=0.1, gamma_M=1.0, sigma_gamma=1e-2,
        s0=0.3, s_m=s_m, R_M=math.log(S_M / s_m),
        sigma_x=L, sigma_r=math.log(0.1 / s_m),
        dt=0.1, seed=0,
    )
    base.update(overrides)
    return ModelConfig(**base)


@dataclass(frozen=True)
class SchemeConfig:
    """Sizes of the Monte-Carlo sample, the train/test sets and the iteration count."""

    M: int = 1000
    K: int = 100
    n_max: int = 100
    jitter: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ConfigError("M must be >= 2")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.n_max < 0:
            raise ConfigError("n_max must be >= 0")
        if not (self.jitter >= 0 and math.isfinite(self.jitter)):
            raise ConfigError("jitter must be a finite number >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
