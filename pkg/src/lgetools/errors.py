"""Exception hierarchy shared across the package."""


class LgeToolsError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(LgeToolsError):
    """Invalid arguments or data that violate a documented contract."""


class VolumeFormatError(ValidationError):
    """A volume directory does not conform to the container format."""


class EmptyMaskError(ValidationError):
    """An operation that needs at least one foreground pixel got none."""


class UndefinedStatisticError(ValidationError):
    """A statistic is undefined for the given input (e.g. zero denominator)."""
