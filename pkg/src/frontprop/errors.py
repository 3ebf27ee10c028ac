"""Exception types raised across the package."""


class FrontpropError(Exception):
    """Base class for all package errors."""


class GridMismatch(FrontpropError, ValueError):
    pass


class EmptyShape(FrontpropError, ValueError):
    pass


class NoEta(FrontpropError, ValueError):
    """The discrete (H2) certificate fails for every positive eta0."""


class FullShape(NoEta):
    """The shape covers the whole grid, so there is no exterior."""


EmptyComplement = FullShape


class BadBand(FrontpropError, ValueError):
    pass


class CflViolation(FrontpropError, ValueError):
    pass


class NegativeVelocity(FrontpropError, ValueError):
    pass


class DomainTooSmall(FrontpropError, RuntimeError):
    pass


class NoBand(FrontpropError, RuntimeError):
    pass


class BadDelta(FrontpropError, ValueError):
    pass


class H3Violation(FrontpropError, ValueError):
    def __init__(self, inequality, message=None):
        self.inequality = inequality
        super().__init__(message or f"(H3) violated: {inequality}")


class HypothesisViolation(FrontpropError, ValueError):
    """A declared constant of a user-supplied model failed spot verification."""


class AlphaRangeViolation(HypothesisViolation):
    pass


class PaddingTooSmall(FrontpropError, ValueError):
    pass


class SolverDivergence(FrontpropError, RuntimeError):
    pass


class NoConvergence(FrontpropError, RuntimeError):
    def __init__(self, history, message=None):
        self.history = list(history)
        super().__init__(message or f"Picard iteration did not converge; residuals {self.history}")


class EmptyLevelSet(FrontpropError, ValueError):
    pass


class TouchesBoundary(FrontpropError, ValueError):
    pass


class BadParams(FrontpropError, ValueError):
    pass


class CertificateMissing(FrontpropError, ValueError):
    pass


class NonpositiveInput(FrontpropError, ValueError):
    pass


class NotMonotone(FrontpropError, ValueError):
    pass


class StepFailure(FrontpropError, RuntimeError):
    pass


class BandOutsideEta(FrontpropError, ValueError):
    pass


class ScenarioError(FrontpropError, ValueError):
    """Malformed scenario or suite file."""
