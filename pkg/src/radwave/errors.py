"""Exception types raised across the package."""


class RadwaveError(Exception):
    """Base class for all package errors."""


class InvalidArgument(RadwaveError, ValueError):
    """A precondition on an argument or configuration value is violated."""


class ResourceLimit(RadwaveError):
    """A grid or trajectory would exceed the configured memory cap."""


class IntegrationFailure(RadwaveError):
    """A linear integration produced non-finite values."""

    def __init__(self, message, t=None, node=None):
        super().__init__(message)
        self.t = t
        self.node = node


class UnsupportedProfile(RadwaveError):
    """A profile has no closed-form antiderivative for the d'Alembert oracle."""


class InvalidSequence(RadwaveError):
    """Accumulator or derivative inputs are out of sequence or too short."""


class LocalExistenceFailure(RadwaveError):
    """The local solve on [0, 1] blew up; the amplitude is too large."""


class InsufficientData(RadwaveError):
    """Too few usable records for a fit."""
