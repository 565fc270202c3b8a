"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: input/config problems exit 2, scale
problems exit 3 and failed invariant checks exit 4.
"""


class CSPError(Exception):
    """Base class for all errors raised by frozencsp."""


class InputError(CSPError, ValueError):
    """Malformed argument: wrong arity, bad sign vector, k out of range."""


class ConfigError(InputError):
    """Unreadable or inconsistent model file / experiment config."""


class ContractError(CSPError):
    """A documented precondition on the *state* of an argument was violated."""


class DomainError(CSPError, ValueError):
    """The quantity is undefined for this model or parameter."""


class ConstructionError(CSPError, ValueError):
    """A model construction produced something violating a required property."""


class SamplingError(CSPError, RuntimeError):
    """A rejection sampler exceeded its retry cap."""


class ScaleError(CSPError):
    """The requested exhaustive computation is beyond desk scale."""


class CheckFailure(CSPError, AssertionError):
    """An invariant that must hold on every instance failed."""
