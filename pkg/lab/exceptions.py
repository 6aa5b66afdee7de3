"""
Error hierarchy for the lab

Every error carries the process exit code the management commands report.
"""


class LabError(Exception):
    """Base class for lab failures"""

    exit_code = 1


class ArgumentError(LabError, ValueError):
    """Bad dimension, time, shape or option"""

    exit_code = 2


class CapabilityError(LabError):
    """Operation not supported by the generator form"""

    exit_code = 2


class ConditioningError(LabError):
    """Conditioning on a state outside the support"""

    exit_code = 3


class DegenerateStateError(LabError):
    """Masked schedule already fully masked at the start time"""

    exit_code = 3


class DistributionValidationError(LabError):
    """Invalid distribution, kernel or rate matrix"""

    exit_code = 3


class TrainingError(LabError):
    """Non-finite gradient or divergence during training"""

    exit_code = 1

    def __init__(self, message, diagnostics=None, trace=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.trace = trace


class BoundViolation(LabError):
    """A verified inequality did not hold"""

    exit_code = 1
