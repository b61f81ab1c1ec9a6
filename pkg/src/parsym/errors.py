"""Exception hierarchy shared by all modules.

The CLI maps these onto exit statuses: :class:`PreconditionError` and its
subclasses exit with 2, :class:`NonConvergenceError` and its subclasses with 3.
"""


class ParsymError(Exception):
    """Base class for every error raised by the package."""


class PreconditionError(ParsymError):
    """An input violates a documented precondition or modelling assumption."""


class ProfileError(PreconditionError):
    """Invalid Lagrangean parameters (e.g. a power ``p <= 1``)."""


class GeometryError(PreconditionError):
    """Malformed polygon or grid."""


class TopologyError(PreconditionError):
    """A parallel surface is not a single closed curve."""


class UndefinedNormalError(PreconditionError):
    """The boundary has a corner at the requested point."""


class EmptyLevelSetError(PreconditionError):
    """A level-set based operation found no curve."""


class NonConvergenceError(ParsymError):
    """An iterative method exhausted its budget.

    ``diagnostics`` carries whatever the method recorded (energies,
    residuals, iteration counts) so callers can inspect the failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InversionError(NonConvergenceError):
    """Bracketing of ``f'`` failed while evaluating the conjugate derivative."""


class EstimationError(NonConvergenceError):
    """No restart of the Cheeger estimator converged."""
