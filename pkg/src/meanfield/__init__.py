"""Finite and mean-field simulation of heterogeneous plant populations in competition."""
from .config import ConfigError, ModelConfig, SchemeConfig, reference_config
from .particles import ParticleEnsemble, integrate, simulate
from .scheme import FlowApproximation, run_scheme

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ModelConfig", "SchemeConfig", "reference_config",
    "ParticleEnsemble", "integrate", "simulate",
    "FlowApproximation", "run_scheme",
]
