"""Frozen variables in random boolean CSPs: models, thresholds, *-cores and freezing."""
from ._backend import BACKEND
from .errors import (CheckFailure, ConfigError, ConstructionError, ContractError, CSPError,
                     DomainError, InputError, SamplingError, ScaleError)

__version__ = "0.1.0"
