"""Exception hierarchy.

Every numerical failure raised by the library derives from ``NumericalError``
and every malformed input from ``ValidationError``; the CLI maps the two
families onto distinct exit codes.
"""


class FiniteGapError(Exception):
    """Base class for all library errors."""


class ValidationError(FiniteGapError, ValueError):
    """Malformed or inconsistent user input."""


class NumericalError(FiniteGapError, ArithmeticError):
    """A computation could not be carried out to the requested accuracy."""


# curve
class CutConstructionFailed(NumericalError):
    pass


class StepTooLarge(NumericalError):
    pass


# periods
class BasisConstructionFailed(NumericalError):
    pass


class SingularC(NumericalError):
    pass


class PathInvalid(NumericalError):
    pass


class NotSymplectic(ValidationError):
    pass


# theta
class ThetaOverflow(NumericalError):
    pass


class OnThetaDivisor(NumericalError):
    def __init__(self, message, sites=None):
        super().__init__(message)
        self.sites = [] if sites is None else list(sites)


# toda
class WindowTooNarrow(ValidationError):
    pass


class AnchorInconsistent(NumericalError):
    pass


class NotStationary(NumericalError):
    pass


class RootFindFailed(NumericalError):
    pass


# finitegap
class SpecialDivisor(NumericalError):
    pass


class CalibrationDegenerate(NumericalError):
    pass


class PoleAtDivisor(NumericalError):
    pass


# spectrum
class MeanNotConverged(NumericalError):
    pass


class PathBlocked(NumericalError):
    pass


class ArcEscapedBox(NumericalError):
    pass


class SeedStalled(NumericalError):
    pass


class EigenFailed(NumericalError):
    pass
