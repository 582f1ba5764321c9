"""
Error hierarchy shared by the library and the command-line tools.

Every error carries the process exit code the tools/ scripts return for it:
2 for validation problems, 3 for broken invariants or failed training, 4 for I/O.
"""


class AugSegError(Exception):
    exit_code = 1


class ValidationError(AugSegError, ValueError):
    exit_code = 2


class DimensionError(ValidationError):
    pass


class PromptBoundsError(ValidationError):
    pass


class InjectionOrderError(ValidationError):
    pass


class InjectionSiteError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class IncompleteMatrixError(ValidationError):
    pass


class UndefinedMetricError(ValidationError):
    pass


class StateError(AugSegError):
    exit_code = 3


class InvariantViolationError(AugSegError):
    exit_code = 3


class TrainingFailureError(AugSegError):
    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class NumericError(AugSegError, ArithmeticError):
    exit_code = 3


class ArtifactFormatError(AugSegError, OSError):
    exit_code = 4


def exit_code_for(exc):
    if isinstance(exc, AugSegError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 4
    return 1
