"""Adaptive rescaling solver for one-dimensional blow-up problems."""

from .pde_core import ConfigError, EquationKind, RunConfig, derived_constants
from .rescaler import BlewUp, LevelStack, NoBlowupDetected, run

__all__ = ["ConfigError", "EquationKind", "RunConfig", "derived_constants",
           "BlewUp", "LevelStack", "NoBlowupDetected", "run"]
__version__ = "0.1.0"
