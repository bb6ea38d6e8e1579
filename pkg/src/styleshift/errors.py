"""Exception hierarchy shared across the package.

CLI exit-code mapping: usage errors -> 1, data errors -> 2,
numerical failures -> 3.
"""


class StyleShiftError(Exception):
    """Base class for all package errors."""


class InvalidInputError(StyleShiftError, ValueError):
    """An operation received arguments violating its preconditions."""


class InvalidConfigError(StyleShiftError, ValueError):
    """A configuration value is outside its allowed range."""


class DataError(StyleShiftError):
    """A dataset, manifest, or checkpoint on disk is missing or malformed."""


class NumericalError(StyleShiftError):
    """A computation produced NaN/Inf and cannot continue."""
