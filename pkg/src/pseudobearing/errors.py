"""Exception hierarchy shared across the package."""


class PseudoBearingError(Exception):
    """Base class for all package errors."""


class GeometryError(PseudoBearingError, ValueError):
    """Degenerate geometry, e.g. coincident source and receiver."""


class DomainError(PseudoBearingError, ValueError):
    """An argument lies outside the domain of a formula."""


class OutOfBoundsError(PseudoBearingError, ValueError):
    """A query point lies outside the terrain grid."""


class InsufficientDataError(PseudoBearingError, ValueError):
    pass


class StaleWindowError(PseudoBearingError, ValueError):
    """Consecutive samples in a window are separated by too large a gap."""


class ContractError(PseudoBearingError, ValueError):
    """Inputs are mutually inconsistent (e.g. dimension mismatch)."""


class MissionComplete(PseudoBearingError):
    """Raised by the planner when no unlocalized source remains."""


class ConfigError(PseudoBearingError, ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
