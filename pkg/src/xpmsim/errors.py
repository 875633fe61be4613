"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the physically or numerically valid domain."""


class CalibrationError(RuntimeError):
    """Calibration anchors are infeasible (non-positive or out of range)."""


class ConfigError(ValueError):
    """A configuration document violates the schema or an invariant."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
