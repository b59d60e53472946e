"""Exception types shared across the package."""


class SplitflowError(Exception):
    """Base class for all library errors."""


class ValidationError(SplitflowError):
    """Input violates a structural invariant (non-unitary, non-skew, bad shape...)."""


class BranchCutError(SplitflowError):
    """Principal matrix log hit an eigenvalue at (or too close to) -1.

    For discrete loops this signals that the discretization is too coarse;
    refine the sampling and retry.
    """


class DiscretizationError(SplitflowError):
    """Sampling resolution is inadequate for the requested object."""


class ConvergenceError(SplitflowError):
    """An iterative procedure failed to reach its tolerance."""


class SnapError(ConvergenceError):
    """A flow limit is not close enough to a geodesic loop to read off integer weights."""


class TruncationError(SplitflowError):
    """A spectral/Toeplitz truncation is too small; result unstable under enlargement."""


class SmoothnessError(SplitflowError):
    """Fourier coefficients do not decay enough for the requested truncation."""


class QuadratureError(SplitflowError):
    """A quadrature residue exceeded its integrality tolerance."""


class GaugeConditionError(SplitflowError):
    """A (complex) gauge field is too ill-conditioned to apply safely."""


class InvalidConnectionError(ValidationError):
    """Two-chart data fails the overlap compatibility check."""
