"""Compositional probabilistic safety certification for interconnected
stochastic hybrid systems.

The pipeline: verify or calibrate per-subsystem barrier certificates,
augment them across flow/jump dynamics, compose the network through a
small-gain condition, evaluate finite/infinite-horizon safety bounds,
and cross-check with seeded Monte Carlo simulation.
"""

__version__ = "0.1.0"

from .poly import Polynomial, Box, combine, differentiate, substitute, align
from .certify import (
    Verdict,
    CertResult,
    bernstein_enclosure,
    prove_nonneg,
    global_extremum,
)
from .errors import (
    ShsafeError,
    InputError,
    ModelError,
    CapabilityError,
    ExtremumError,
    CalibrationError,
    FeasibilityError,
)

__all__ = [
    "__version__",
    "Polynomial", "Box", "combine", "differentiate", "substitute", "align",
    "Verdict", "CertResult", "bernstein_enclosure", "prove_nonneg", "global_extremum",
    "ShsafeError", "InputError", "ModelError", "CapabilityError",
    "ExtremumError", "CalibrationError", "FeasibilityError",
]
