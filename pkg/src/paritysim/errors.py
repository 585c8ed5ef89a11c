"""Exception types raised by the library."""


class ParitySimError(Exception):
    """Base class for all library-specific errors."""


class ZeroOddCat(ParitySimError):
    """Odd cat state requested at zero amplitude, where it is undefined."""


class OrderTooHigh(ParitySimError):
    """Moment order exceeds what the truncated space can represent."""


class VacuumState(ParitySimError):
    """Photon-number expectation too small for a normalized correlation."""


class BadEfficiency(ParitySimError):
    """Transmission efficiency outside the physical range (0, 1]."""


class GridTooSmall(ParitySimError):
    """Convolution kernel support extends beyond the sampled grid."""


class DegenerateReferences(ParitySimError):
    """Reference populations too close together to define a parity scale."""


class NotConverged(ParitySimError):
    """Constrained solver hit its iteration cap before meeting tolerance.

    Carries the best iterate found so the caller can inspect it.
    """

    def __init__(self, message, best=None, objective=None, kkt_residual=None):
        super().__init__(message)
        self.best = best
        self.objective = objective
        self.kkt_residual = kkt_residual


class InsufficientStatistics(ParitySimError):
    """Requested moment order carries no information at the given shot count."""


class SingularConfusion(ParitySimError):
    """Readout confusion matrix is not invertible."""


class ConfigError(ParitySimError):
    """Scenario configuration is malformed; message names the offending key."""
