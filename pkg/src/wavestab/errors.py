"""Exception types shared across the package."""


class WavestabError(Exception):
    """Base class for all package errors."""


class InvalidFieldError(WavestabError):
    """A grid field has the wrong length or non-finite entries."""


class ResolutionError(WavestabError):
    """Tail or spectral-decay tolerance violated at the current grid.

    Carries a short diagnosis string so callers can decide whether to
    enlarge the period, double the mode count, or give up.
    """

    def __init__(self, message, tail_ratio=None, decay_ratio=None):
        super().__init__(message)
        self.tail_ratio = tail_ratio
        self.decay_ratio = decay_ratio


class ConvergenceError(WavestabError):
    """Newton iteration exceeded its budget."""

    def __init__(self, message, residual_norm=None, iterations=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations


class ContinuationStalledError(WavestabError):
    """Arclength step underflow; carries the last good branch record."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class NearSingularError(WavestabError):
    """Surface map derivative below floor (near-limiting crest)."""


class AssemblyError(WavestabError):
    """A linear solve inside operator assembly failed."""


class TrackingError(WavestabError):
    """Eigenvalue continuation lost its target (pairing ambiguity)."""


class BracketingError(WavestabError):
    """Bisection on a sign change stagnated."""


class NotDifferentiableError(WavestabError):
    """Branch neighbors straddle a turning point; no derivative in c."""


class InsufficientDataError(WavestabError):
    """Too few branch points for the requested finite differences."""


class ConfigError(WavestabError):
    """Run configuration failed validation."""
