"""Deterministic discrete-event simulator of a proof-of-work Bitcoin network."""
from .config import ScenarioConfig, load, validate
from .engine import Simulation, run
from .kernels import BACKEND
from .metrics import MetricsReport, hash_share

__all__ = ["BACKEND", "MetricsReport", "ScenarioConfig", "Simulation", "hash_share", "load", "run", "validate"]
__version__ = "0.1.0"
