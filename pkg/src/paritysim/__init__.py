"""Truncated Fock-space toolkit for parity detection of propagating fields.

Subpackages:

* ``fock``       -- states, operators, Wigner values, moments, fidelity
* ``channels``   -- photon loss, convolution and mode-mismatch forward models
* ``detector``   -- phenomenological parity detector, heralding, parity trains
* ``tomography`` -- tomogram/record synthesis and maximum-likelihood inversion
* ``cli``        -- config-driven scenario runner
"""

from . import channels, detector, fock, tomography
from .errors import (
    BadEfficiency,
    ConfigError,
    DegenerateReferences,
    GridTooSmall,
    InsufficientStatistics,
    NotConverged,
    OrderTooHigh,
    ParitySimError,
    SingularConfusion,
    VacuumState,
    ZeroOddCat,
)

__version__ = "0.1.0"

__all__ = [
    "channels",
    "detector",
    "fock",
    "tomography",
    "BadEfficiency",
    "ConfigError",
    "DegenerateReferences",
    "GridTooSmall",
    "InsufficientStatistics",
    "NotConverged",
    "OrderTooHigh",
    "ParitySimError",
    "SingularConfusion",
    "VacuumState",
    "ZeroOddCat",
    "__version__",
]
