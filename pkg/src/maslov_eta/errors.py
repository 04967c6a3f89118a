"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An input violates a stated precondition (wrong shape, not hermitian, ...)."""


class TransversalityError(PreconditionError):
    """A pair of projections required to be transverse is not."""


class BranchCutError(PreconditionError):
    """A unitary has spectrum too close to 1, where the logarithm branch is cut."""


class DegeneracyError(PreconditionError):
    """A hermitian matrix has near-zero spectrum beyond the structurally forced kernel."""


class ContinuityBreakError(RuntimeError):
    """A quantity that must be constant over a parameter grid is not."""


class TruncationError(RuntimeError):
    """A requested truncation level cannot deliver the requested accuracy."""


class DegreeOverflowError(ValueError):
    """A form operation would produce a degree beyond the grid dimension."""
