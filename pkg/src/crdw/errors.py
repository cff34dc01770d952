"""Exception types shared across the package.

Every error raised by library code derives from CrdwError so callers can
catch one base class at the CLI boundary.
"""


class CrdwError(Exception):
    pass


class NotSchurStable(CrdwError):
    """A matrix required to have spectral radius < 1 does not."""


class NonConvergence(CrdwError):
    """An iterative routine hit its cap before reaching its residual target."""


class NotPositiveDefinite(CrdwError):
    """Cholesky factorization met a nonpositive pivot."""


class NotPSD(CrdwError):
    """A covariance has an eigenvalue below the negative tolerance."""


class NoInputCoupling(CrdwError):
    """No power of the closed loop couples the input to the output; the
    watermark never reaches the measurements."""


class AffineDependence(CrdwError):
    """Polytope vertices are affinely dependent; the vertex set does not
    span a (d-1)-dimensional face."""


class NormNotContractive(CrdwError):
    """The closed-form slack bound requires the observer loop to be a
    2-norm contraction and it is not."""


class NotPSDAtStep(CrdwError):
    """A scheduled covariance loses positive semidefiniteness at some step."""


class InsufficientData(CrdwError):
    """Fewer records than the requested window or diagnostic needs."""


class ParseError(CrdwError):
    """Scenario file could not be parsed."""


class ValidationError(CrdwError):
    """Scenario file parsed but violates an invariant; the message names it."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}" if detail else invariant)
