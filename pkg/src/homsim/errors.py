"""Exception hierarchy.

Every error raised by the package derives from :class:`HomsimError`. The
``exit_code`` attribute is what the command-line front end returns.
"""


class HomsimError(Exception):
    exit_code = 1


class ConfigError(HomsimError, ValueError):
    exit_code = 2


class ParameterError(ConfigError):
    """Invalid physical parameters (rates, probabilities, times)."""


class DomainError(HomsimError, ValueError):
    """Argument outside the domain of an operation."""

    exit_code = 3


class DataError(HomsimError):
    exit_code = 3


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AnalysisError(DataError):
    pass


class BinningError(AnalysisError, ValueError):
    pass


class FitError(AnalysisError):
    pass


class NumericalError(HomsimError, ArithmeticError):
    exit_code = 4


class IntegrationAccuracyError(NumericalError):
    pass


class GridError(NumericalError, ValueError):
    pass


class AccuracyError(NumericalError):
    """Quadrature did not converge under grid refinement."""


class FitDegenerateError(NumericalError):
    pass


class MapConstructionError(NumericalError):
    pass


class ExtrapolationError(DomainError):
    pass


class UnreachableError(DomainError):
    pass


class SelfTestFailure(HomsimError):
    exit_code = 5
