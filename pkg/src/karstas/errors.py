"""Exception hierarchy shared across the package.

The CLI maps these onto categorized exit codes, so raising the right
class matters more than the message wording.
"""


class KarstasError(Exception):
    """Base class for all package errors."""


class ConfigError(KarstasError):
    """Invalid or inconsistent run configuration."""


class InputError(KarstasError):
    """Malformed input data (CSV parse failures, bad series, missing columns)."""


class ParameterError(KarstasError):
    """Physical or calibration parameters outside their admissible set."""


class EvaluationError(KarstasError):
    """A forward-model or misfit evaluation produced a non-finite value."""


class ChainError(KarstasError):
    """Sampler could not be started or produced a degenerate chain."""
