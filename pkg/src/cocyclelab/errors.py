"""Exception hierarchy shared by all modules."""


class CocycleLabError(ValueError):
    """Base class for precondition failures raised by the library."""


class SingularMatrix(CocycleLabError):
    pass


class DegenerateSingularValues(CocycleLabError):
    pass


class DimensionMismatch(CocycleLabError):
    pass


class Overflow(CocycleLabError):
    pass


class NotDiagonalizable(CocycleLabError):
    def __init__(self, residual, message=None):
        self.residual = residual
        super().__init__(message or f"not simultaneously diagonalizable (best residual {residual:.3e})")


class NotInvariant(CocycleLabError):
    def __init__(self, deviation, message=None):
        self.deviation = deviation
        super().__init__(message or f"line is not invariant (max deviation {deviation:.3e})")


class ZeroEigenvalue(CocycleLabError):
    pass


class ZeroLyapunov(CocycleLabError):
    pass


class ZeroRho(CocycleLabError):
    pass


class NotHyperbolic(CocycleLabError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"matrix {index} is not hyperbolic")


class ConesCollapsed(CocycleLabError):
    pass


class NotStochastic(CocycleLabError):
    pass


class LedgerInfeasible(CocycleLabError):
    pass


class ChainTooShort(CocycleLabError):
    pass


class NoConvergence(CocycleLabError):
    def __init__(self, iterations, residual=float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")


class DegenerateCurvature(CocycleLabError):
    pass


class ZeroWeight(CocycleLabError):
    pass


class GridTooNarrow(CocycleLabError):
    pass


class ConfigInvalid(CocycleLabError):
    pass


class ExperimentFailed(CocycleLabError):
    pass
