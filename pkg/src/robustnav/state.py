"""Navigation state, sensor sample and observation records."""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from robustnav.exceptions import ConfigurationError, DataFormatError
from robustnav.lie import is_rotation


def _vector3(values: Sequence[float], name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.shape != (3,):
        raise ConfigurationError(f"{name} must have 3 components", field=name)
    if not np.all(np.isfinite(array)):
        raise ConfigurationError(f"{name} must be finite", field=name)
    return array


@dataclass(frozen=True)
class ImuSample:
    """One IMU reading: body-frame angular rate and specific force."""

    timestamp: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "gyro", _vector3(self.gyro, "gyro"))
        object.__setattr__(self, "accel", _vector3(self.accel, "accel"))


@dataclass(frozen=True)
class ImuBias:
    """Gyroscope (rad/s) and accelerometer (m/s^2) biases."""

    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "gyro_bias", _vector3(self.gyro_bias, "gyro_bias"))
        object.__setattr__(self, "accel_bias", _vector3(self.accel_bias, "accel_bias"))

    @classmethod
    def zero(cls) -> "ImuBias":
        """Zero bias."""
        return cls()

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "ImuBias":
        """Create from the 6-vector ``[accel, gyro]`` used by the estimators."""
        return cls(gyro_bias=vector[3:6], accel_bias=vector[0:3])

    def as_vector(self) -> np.ndarray:
        """The 6-vector ``[accel, gyro]``."""
        return np.concatenate([self.accel_bias, self.gyro_bias])

    def __sub__(self, other: "ImuBias") -> "ImuBias":
        return ImuBias(self.gyro_bias - other.gyro_bias, self.accel_bias - other.accel_bias)


@dataclass(frozen=True)
class NavState:
    """Platform position (ECEF, m), velocity (m/s) and body-to-world rotation."""

    position: np.ndarray
    velocity: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vector3(self.position, "position"))
        object.__setattr__(self, "velocity", _vector3(self.velocity, "velocity"))
        orientation = np.asarray(self.orientation, dtype=float)
        if not is_rotation(orientation, tolerance=1e-6):
            raise ConfigurationError("orientation must be a rotation matrix", field="orientation")
        object.__setattr__(self, "orientation", orientation)

    @classmethod
    def at_rest(cls, position: Sequence[float], orientation: Optional[np.ndarray] = None) -> "NavState":
        """Stationary state."""
        return cls(
            np.asarray(position, dtype=float),
            np.zeros(3),
            np.eye(3) if orientation is None else orientation,
        )


@dataclass(frozen=True)
class ClockState:
    """Receiver clock bias expressed in meters (speed of light times seconds)."""

    bias: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.bias):
            raise ConfigurationError("clock bias must be finite", field="bias")


@dataclass(frozen=True)
class SatObservation:
    """A corrected pseudorange to one satellite.

    ``is_outlier`` and ``injected_bias`` are simulation metadata; estimators
    never look at them.
    """

    sat_id: int
    time: float
    sat_position: np.ndarray
    pseudorange: float
    sigma: float
    is_outlier: bool = field(default=False, compare=False)
    injected_bias: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sat_position", _vector3(self.sat_position, "sat_position"))
        if not np.isfinite(self.pseudorange):
            raise ConfigurationError("pseudorange must be finite", field="pseudorange")
        if not self.sigma > 0:
            raise ConfigurationError("observation sigma must be positive", field="sigma")


@dataclass
class EpochObservations:
    """All observations of one GNSS epoch."""

    time: float
    observations: List[SatObservation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self) -> Iterator[SatObservation]:
        return iter(self.observations)


@dataclass
class Trajectory:
    """Time-ordered navigation states in the ECEF frame."""

    times: List[float] = field(default_factory=list)
    states: List[NavState] = field(default_factory=list)
    frame: str = "ECEF"

    def __post_init__(self) -> None:
        if len(self.times) != len(self.states):
            raise ConfigurationError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise DataFormatError("trajectory timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def append(self, time: float, state: NavState) -> None:
        """Append a state, keeping timestamps strictly increasing."""
        if self.times and time <= self.times[-1]:
            raise DataFormatError(
                f"trajectory timestamp {time} does not follow {self.times[-1]}"
            )
        self.times.append(float(time))
        self.states.append(state)

    def positions(self) -> np.ndarray:
        """(N, 3) ECEF positions."""
        if not self.states:
            return np.zeros((0, 3))
        return np.array([s.position for s in self.states])

    def velocities(self) -> np.ndarray:
        """(N, 3) velocities."""
        if not self.states:
            return np.zeros((0, 3))
        return np.array([s.velocity for s in self.states])
