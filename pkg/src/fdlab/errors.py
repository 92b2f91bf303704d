"""Exception types raised across fdlab."""


class FdlabError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(FdlabError, ValueError):
    pass


class ShapeMismatch(FdlabError, ValueError):
    pass


class RankDeficient(FdlabError, ValueError):
    pass


class DimOrderViolation(FdlabError, ValueError):
    pass


class NotOrthonormal(FdlabError, ValueError):
    pass


class FullAmbient(FdlabError, ValueError):
    pass


class AlreadyContained(FdlabError, ValueError):
    pass


class TargetUnreachable(FdlabError, RuntimeError):
    pass


class NotPositiveDefinite(FdlabError, ValueError):
    pass


class DimConstraintViolated(FdlabError, ValueError):
    pass


class SingularNormalEquations(FdlabError, ValueError):
    pass


class NumericalBlowup(FdlabError, FloatingPointError):
    pass


class PreconditionViolated(FdlabError, ValueError):
    pass


class HypothesisViolated(FdlabError, ValueError):
    """The hypotheses of the result under test do not hold on this input."""


class ConfigError(FdlabError, ValueError):
    pass


class DidNotConverge(UserWarning):
    """Warning category: a flow hit ``t_max`` or the halving limit first."""
