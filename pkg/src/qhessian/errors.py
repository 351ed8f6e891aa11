"""Exception hierarchy shared by every module of the package."""


class QHessianError(Exception):
    """Base class for all package errors."""


class SymmetryError(QHessianError):
    """A matrix (field) that must be hyperhermitian is not, beyond tolerance."""


class GroupingError(QHessianError):
    """A 4n real spectrum could not be split into near-equal quadruples."""


class SingularError(QHessianError):
    """Inversion of a (numerically) singular hyperhermitian matrix."""


class DomainError(QHessianError):
    """A cone function was evaluated outside its cone."""


class ConvergenceError(QHessianError):
    """An inner scalar iteration (bracketing, bisection) failed."""


class AdmissibilityError(QHessianError):
    """An iterate left the admissible cone at some grid point."""


class LineSearchError(QHessianError):
    """No admissible, decreasing Newton step was found."""


class MaxIterError(QHessianError):
    """Newton iteration cap reached before the residual tolerance."""


class KrylovError(QHessianError):
    """The inner Krylov solve stagnated."""


class StepFailure(QHessianError):
    """A continuity step failed; carries the failing t and last good state."""

    def __init__(self, message, t=None, last_state=None):
        super().__init__(message)
        self.t = t
        self.last_state = last_state
