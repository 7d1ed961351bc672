"""Exception types shared across the package."""


class QSError(Exception):
    """Base class for all package errors."""


class NotASquare(QSError):
    """The element has no square root in Q_p (odd valuation or non-residue unit)."""


class NegativeSquare(QSError):
    """A real square root of a negative quantity was requested."""


class PrecisionExhausted(QSError):
    """Stated p-adic precision does not certify the requested result."""


class NotIsotropic(QSError):
    """The quadratic form has no nontrivial zero over the given field."""


class NotStandardForm(QSError):
    """Operation requires a form in standard shape x1*xn + a2*x2^2 + ..."""


class NoIsometry(QSError):
    """No isometry exists for the requested vector pair (value mismatch)."""


class ValueMismatch(QSError):
    """Target vector does not take the required form value."""


class NotSaturated(QSError):
    """Generators do not form a basis of the intersection with the lattice."""


class NotUnimodular(QSError):
    """Lattice covolume is not 1."""


class BudgetExceeded(QSError):
    """Combinatorial enumeration exceeded its work budget."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateForm(QSError):
    """Gram matrix is singular at the stated precision."""
