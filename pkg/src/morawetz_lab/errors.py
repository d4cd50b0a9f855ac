"""Exception types raised across the package."""


class LabError(Exception):
    """Base class for all errors raised by morawetz_lab."""


class SupportError(LabError):
    """Initial data violates the causality margin of the grid."""


class InstabilityError(LabError):
    """A field norm grew past the blow-up threshold during evolution."""


class CausalityError(LabError):
    """The field reached the Dirichlet boundary layer."""


class CoverageError(LabError):
    """A trajectory does not cover the time or space range an operation needs."""


class NyquistError(LabError):
    """Recorded sampling is too coarse for the requested frequency band."""


class ConfigError(LabError):
    """A scenario configuration could not be parsed or validated."""
