"""Custom exceptions for RobustNav."""

from typing import Optional, Any


class RobustNavError(Exception):
    """Base exception for all RobustNav errors."""

    def __init__(self, message: str, *args: Any, **kwargs: Any) -> None:
        self.message = message
        super().__init__(message, *args, **kwargs)


class ConfigurationError(RobustNavError):
    """Raised when a parameter or configuration file is invalid."""

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line: Optional[int] = None,
    ) -> None:
        self.field = field
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class InvalidKernelError(ConfigurationError):
    """Raised when a robust kernel is constructed with invalid parameters."""

    def __init__(
        self,
        message: str,
        kind: Optional[str] = None,
        parameter: Optional[str] = None,
    ) -> None:
        self.kind = kind
        self.parameter = parameter
        super().__init__(message, field=parameter)


class ScenarioInfeasibleError(ConfigurationError):
    """Raised when a route violates the simulator's motion limits."""

    def __init__(
        self,
        message: str,
        limit: Optional[float] = None,
        value: Optional[float] = None,
    ) -> None:
        self.limit = limit
        self.value = value
        super().__init__(message, field="route")


class DataFormatError(RobustNavError):
    """Raised when an input file does not conform to its schema."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
    ) -> None:
        self.path = path
        self.line = line
        prefix = f"{path}: " if path else ""
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(f"{prefix}{message}{suffix}")


class GraphError(RobustNavError):
    """Raised when a factor references a missing variable or has a bad arity."""

    def __init__(self, message: str, key: Optional[Any] = None) -> None:
        self.key = key
        super().__init__(message)


class EstimationError(RobustNavError):
    """Base class for numerical failures during estimation."""

    pass


class InsufficientObservationsError(EstimationError):
    """Raised when an epoch has too few satellites for a fix."""

    def __init__(
        self,
        message: str = "Insufficient observations",
        count: int = 0,
        required: int = 4,
    ) -> None:
        self.count = count
        self.required = required
        super().__init__(f"{message}: {count} available, {required} required")


class GeometryError(EstimationError):
    """Raised when satellite geometry is too poorly conditioned to solve."""

    def __init__(
        self,
        message: str = "Degenerate satellite geometry",
        condition_number: Optional[float] = None,
    ) -> None:
        self.condition_number = condition_number
        super().__init__(message)


class ConvergenceError(EstimationError):
    """Raised when an iterative method fails to converge."""

    def __init__(
        self,
        message: str = "Iteration did not converge",
        iterations: int = 0,
        residual: Optional[float] = None,
    ) -> None:
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class SingularSystemError(EstimationError):
    """Raised when damped normal equations cannot be factorized."""

    def __init__(
        self,
        message: str = "Normal equations are singular",
        damping: Optional[float] = None,
    ) -> None:
        self.damping = damping
        super().__init__(message)


class IntegrationError(EstimationError):
    """Raised when an IMU integration step receives an invalid time step."""

    def __init__(
        self,
        message: str = "Invalid IMU integration step",
        dt: Optional[float] = None,
    ) -> None:
        self.dt = dt
        super().__init__(message)


class TuningError(RobustNavError):
    """Raised when every cell of a parameter grid failed."""

    def __init__(
        self,
        message: str = "All grid cells failed",
        failed_cells: int = 0,
    ) -> None:
        self.failed_cells = failed_cells
        super().__init__(message)
