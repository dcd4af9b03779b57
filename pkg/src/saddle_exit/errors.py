"""Exception hierarchy.

Errors are grouped into families so that front ends can map them to exit
codes: configuration (1), spectral assumption (2), geometry (3) and
numerical convergence (4).
"""


class SaddleExitError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(SaddleExitError, ValueError):
    exit_code = 1


class InvalidN(ConfigError):
    pass


class TooFewSamples(SaddleExitError, ValueError):
    exit_code = 4


# spectral assumption: simple, real, positive, strictly dominant eigenvalue
class SpectralAssumptionError(SaddleExitError):
    exit_code = 2


class LeadingEigenvalueNotSimpleReal(SpectralAssumptionError):
    pass


class GeometryError(SaddleExitError):
    exit_code = 3


class OutsideDomain(GeometryError):
    pass


class LeftEnclosure(GeometryError):
    pass


class NoCrossing(GeometryError):
    pass


class NoExit(GeometryError):
    pass


class TangentialIntersection(GeometryError):
    pass


class NotOnStableManifold(GeometryError):
    pass


class ConvergenceError(SaddleExitError):
    exit_code = 4


class NoConvergence(ConvergenceError):
    pass


class StepTooLarge(ConvergenceError):
    pass


class NonmonotoneTable(ConvergenceError):
    pass


class TailNotConverged(ConvergenceError):
    pass


class NonFinite(ConvergenceError):
    pass
