"""Domain errors. All subclass ValueError so callers catching bad input keep working."""


class ConfigError(ValueError):
    """Run configuration is missing, unreadable or inconsistent."""


class ModelValidationError(ValueError):
    """A PWA model file could not be loaded or breaks the model invariants."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class InfeasiblePastError(ValueError):
    """The realized input prefix already violates the burden constraints."""


class SolverGuardError(ValueError):
    """A solver precondition (big-M validity, enumeration size) does not hold."""
