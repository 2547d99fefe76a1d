"""Exception hierarchy.  Every error carries enough context to act on."""


class LnRobustError(Exception):
    """Base class for all package errors."""


class UnboundedQuantileError(LnRobustError, ValueError):
    pass


class DegenerateBandError(LnRobustError, ValueError):
    pass


class QuadratureError(LnRobustError, ArithmeticError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class InvalidPolicyError(LnRobustError, ValueError):
    pass


class OutOfRangeError(LnRobustError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InsufficientDataError(LnRobustError, ValueError):
    pass


class ConvergenceError(LnRobustError, ArithmeticError):
    def __init__(self, message, last_iterate=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class SingularMatrixError(LnRobustError, ArithmeticError):
    pass


class InsufficientWinsorizingError(LnRobustError, ValueError):
    """Proportions too small for the number of censored points.

    ``min_a`` / ``min_b`` hold the smallest admissible proportions.
    """

    def __init__(self, message, min_a=None, min_b=None):
        super().__init__(message)
        self.min_a = min_a
        self.min_b = min_b


class CaseViolationError(InsufficientWinsorizingError):
    pass


class InvalidThresholdError(LnRobustError, ValueError):
    pass


class OptimizationError(LnRobustError, ArithmeticError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class AdaptivityError(LnRobustError, ValueError):
    pass
