"""Exception hierarchy shared by every module."""


class RpsError(Exception):
    """Base class for all package errors."""


class DomainError(RpsError, ValueError):
    pass


class GridAlignmentError(RpsError, ValueError):
    """A time or step size does not land on the required grid."""


class ExtentError(GridAlignmentError):
    """A requested window lies outside the stored Wiener path."""


class ConditionError(RpsError):
    """A standing condition on the SDE fails.

    ``condition`` names the failing condition ("A", "1", "2", "A'", "1'");
    ``report`` carries the ConditionReport when one was built.
    """

    def __init__(self, condition, message, report=None):
        super().__init__(f"condition ({condition}) violated: {message}")
        self.condition = condition
        self.report = report


class DivergenceError(RpsError, FloatingPointError):
    def __init__(self, message, step=None, seed=None, depth=None):
        parts = [message]
        if step is not None:
            parts.append(f"step={step}")
        if seed is not None:
            parts.append(f"seed={seed}")
        if depth is not None:
            parts.append(f"k={depth}")
        super().__init__(", ".join(parts))
        self.step = step
        self.seed = seed
        self.depth = depth


class DegenerateFitError(RpsError, ValueError):
    pass


class NumericalRankError(RpsError, ArithmeticError):
    pass


class LogarithmExistenceError(RpsError, ArithmeticError):
    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class ConfigError(RpsError, ValueError):
    pass
