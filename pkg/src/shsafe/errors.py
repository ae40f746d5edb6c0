"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes, so new failure modes should subclass
one of the categories below rather than raising bare exceptions.
"""


class ShsafeError(Exception):
    """Base class for all package errors."""


class InputError(ShsafeError, ValueError):
    """Caller handed us something malformed or out of domain."""


class ModelError(InputError):
    """A model document failed to parse; carries the path to the bad field."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class CapabilityError(ShsafeError):
    """The engine cannot decide within its configured resources
    (degree cap, subdivision depth, box budget, missing moments)."""


class ExtremumError(CapabilityError):
    """Global extremum search exhausted its budget; carries the best
    certified interval found so far."""

    def __init__(self, message, lower, upper):
        self.lower = lower
        self.upper = upper
        super().__init__(f"{message} (best interval [{lower}, {upper}])")


class CalibrationError(ShsafeError):
    """Constant calibration found no feasible value inside the search
    bounds; names the binding certificate condition."""

    def __init__(self, condition, message=""):
        self.condition = condition
        super().__init__(message or f"calibration infeasible for condition {condition!r}")


class FeasibilityError(ShsafeError):
    """Weight search failed; carries the best residual reached."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (best residual {residual:.3e})")
