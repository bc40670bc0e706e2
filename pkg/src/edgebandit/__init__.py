"""Learning where to rent edge compute: contextual-combinatorial bandits for SBS placement."""

from .errors import (CapacityError, ConfigError, DomainError, EdgeBanditError, InfeasibleError,
                     ParameterError, ProtocolError, UnreachableError)
from .scenario import ScenarioConfig
from .simulation import run_experiment

__all__ = [
    "CapacityError", "ConfigError", "DomainError", "EdgeBanditError", "InfeasibleError",
    "ParameterError", "ProtocolError", "UnreachableError", "ScenarioConfig", "run_experiment",
]
__version__ = "0.1.0"
