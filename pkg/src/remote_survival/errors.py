"""Exception hierarchy shared by every module of the package."""


class RemoteSurvivalError(Exception):
    """Base class for all errors raised by this package."""


# model / spectral layer
class NotMetzler(RemoteSurvivalError, ValueError):
    pass


class Supercritical(RemoteSurvivalError, ValueError):
    pass


class NonPositiveVariance(RemoteSurvivalError, ValueError):
    pass


class DegeneratePerron(RemoteSurvivalError):
    """The Perron eigenvalue is not simple (or the eigenvectors are not unique)."""


# cumulant layer
class InfiniteLambdaAtZero(RemoteSurvivalError, ValueError):
    pass


class SolverFailure(RemoteSurvivalError):
    pass


class NotStabilized(RemoteSurvivalError):
    """A limit computed by ladder / horizon doubling failed its convergence test."""


class CriticalModel(RemoteSurvivalError, ValueError):
    pass


class ReducibleModel(RemoteSurvivalError, ValueError):
    pass


class NoClosedForm(RemoteSurvivalError):
    pass


# laws
class UndefinedConditioning(RemoteSurvivalError, ValueError):
    pass


class UncoveredCase(RemoteSurvivalError):
    pass


# monte carlo
class InvalidStep(RemoteSurvivalError, ValueError):
    pass


class ZeroDenominator(RemoteSurvivalError, ZeroDivisionError):
    pass


class TooFewSurvivors(RemoteSurvivalError):
    pass


# stats
class EmptyEnsemble(RemoteSurvivalError, ValueError):
    pass


class NoCdf(RemoteSurvivalError):
    pass


# cli
class ConfigError(RemoteSurvivalError):
    pass
