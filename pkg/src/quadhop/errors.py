"""Exception types shared across the toolkit."""


class QuadhopError(Exception):
    """Base class for all toolkit errors."""


class UnreachableError(QuadhopError):
    """Requested pose lies outside the mechanism workspace."""


class SingularError(QuadhopError):
    """Mechanism is at (or too close to) a kinematic singularity."""


class JointLimitError(QuadhopError):
    """A motor angle left its admissible range."""


class IntegrationDivergedError(QuadhopError):
    """Simulation state blew up; results are invalid."""


class ToppleError(QuadhopError):
    """Body pitch exceeded the stability limit during landing."""


class SlipError(QuadhopError):
    """Stance violated the friction cone under --strict handling."""


class InfeasibleError(QuadhopError):
    """No command satisfies the requested objective."""


class AllFilteredError(QuadhopError):
    """Selection criteria rejected every candidate design."""


class CalibrationFailedError(QuadhopError):
    """Calibration search found no parameters within tolerance."""
