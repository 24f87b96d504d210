"""Exception and warning types raised across the package."""


class PDPError(Exception):
    """Base class for all errors raised by pdpopt."""


class DimensionMismatch(PDPError, ValueError):
    pass


class SlaterViolation(PDPError, ValueError):
    pass


class GradientMismatch(PDPError, ValueError):
    pass


class NonPositiveGamma(PDPError, ValueError):
    pass


class AsymmetricAdjacency(PDPError, ValueError):
    pass


class ModeMismatch(PDPError, ValueError):
    pass


class ProxFailure(PDPError, RuntimeError):
    pass


class EmptyHistory(PDPError, ValueError):
    pass


class NoConvergence(PDPError, RuntimeError):
    pass


class TooLarge(PDPError, ValueError):
    pass


class InfeasibleProblem(PDPError, ValueError):
    pass


class InnerSolveFailure(PDPError, RuntimeError):
    pass


class ConfigError(PDPError, ValueError):
    """Invalid experiment configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ConfigWarning(UserWarning):
    """A solver parameter lies outside the range covered by the convergence theory."""
