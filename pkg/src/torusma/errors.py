"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`MAError`.
The ``family`` attribute groups errors for the command-line exit codes.
"""


class MAError(Exception):
    family = "internal"


class FeasibilityError(MAError):
    """A node matrix ``omega + H(phi)`` left the positive cone."""

    family = "feasibility"


class GridMismatchError(MAError, ValueError):
    family = "input"


# density
class PoleOnNodeError(MAError, ValueError):
    family = "input"


class IntegrabilityError(MAError, ValueError):
    family = "input"


class ZeroMassError(MAError, ValueError):
    family = "input"


class InconclusiveError(MAError):
    """A refinement study showed neither contraction nor growth."""

    family = "inconclusive"

    def __init__(self, message, sequence=None):
        super().__init__(message)
        self.sequence = sequence


# capacity
class NonConvergenceError(MAError):
    family = "convergence"

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class HViolationError(MAError, ValueError):
    family = "input"


class NoStartError(MAError):
    family = "convergence"


# solver
class NewtonDivergenceError(MAError):
    family = "convergence"

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class MassMismatchError(MAError, ValueError):
    family = "input"


class LinearSolveError(MAError):
    family = "convergence"


class TIterationStallError(MAError):
    family = "convergence"


# cli
class ConfigError(MAError, ValueError):
    family = "config"


class MixedKindError(MAError, ValueError):
    family = "config"
