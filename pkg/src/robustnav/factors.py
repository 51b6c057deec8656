"""Graph variables, estimates and measurement factors.

Every factor returns an unwhitened error and its Jacobians; the base class
whitens both with a square-root information matrix and applies the robust
kernel, if any, as an IRLS weight on the whitened error norm.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from robustnav.exceptions import ConfigurationError, GraphError
from robustnav.lie import right_jacobian_inverse, so3_exp, so3_log
from robustnav.models import ImuNoiseParams
from robustnav.preint import GravityVector, PreintegratedImu, imu_residual, imu_residual_jacobians
from robustnav.robust import RobustKernel
from robustnav.state import ImuBias, NavState, SatObservation


class VariableKind(str, Enum):
    """Variable families; declaration order is the elimination order within an epoch."""
    POSE = "pose"
    VELOCITY = "vel"
    BIAS = "bias"
    CLOCK = "clock"

    @property
    def dim(self) -> int:
        """Tangent-space dimension."""
        return _DIMS[self]

    @property
    def rank(self) -> int:
        return _RANKS[self]


_DIMS = {VariableKind.POSE: 6, VariableKind.VELOCITY: 3, VariableKind.BIAS: 6, VariableKind.CLOCK: 1}
_RANKS = {kind: index for index, kind in enumerate(VariableKind)}


@dataclass(frozen=True)
class VariableKey:
    """A variable identified by kind and epoch index."""

    kind: VariableKind
    epoch: int

    def __post_init__(self) -> None:
        if self.epoch < 0:
            raise GraphError(f"epoch index must be >= 0, got {self.epoch}", key=self)

    @property
    def dim(self) -> int:
        return self.kind.dim

    def sort_key(self) -> Tuple[int, int]:
        """Ordering by ascending epoch, then pose, velocity, bias, clock."""
        return self.epoch, self.kind.rank

    def __lt__(self, other: "VariableKey") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return f"{self.kind.value}({self.epoch})"


def P(epoch: int) -> VariableKey:
    """Pose key."""
    return VariableKey(VariableKind.POSE, epoch)


def V(epoch: int) -> VariableKey:
    """Velocity key."""
    return VariableKey(VariableKind.VELOCITY, epoch)


def B(epoch: int) -> VariableKey:
    """Bias key."""
    return VariableKey(VariableKind.BIAS, epoch)


def C(epoch: int) -> VariableKey:
    """Clock key."""
    return VariableKey(VariableKind.CLOCK, epoch)


def epoch_keys(epoch: int) -> List[VariableKey]:
    """All four keys of an epoch in elimination order."""
    return [P(epoch), V(epoch), B(epoch), C(epoch)]


@dataclass(frozen=True)
class Pose:
    """Body-to-world rotation and world position."""

    rotation: np.ndarray
    position: np.ndarray

    def retract(self, delta: np.ndarray) -> "Pose":
        """``(R Exp(d_theta), p + d_p)`` for ``delta = [d_theta, d_p]``."""
        return Pose(self.rotation @ so3_exp(delta[0:3]), self.position + delta[3:6])

    def local(self, other: "Pose") -> np.ndarray:
        """Tangent vector taking ``self`` to ``other``."""
        return np.concatenate(
            [so3_log(self.rotation.T @ other.rotation), other.position - self.position]
        )


def retract_value(kind: VariableKind, value: Any, delta: np.ndarray) -> Any:
    """Apply a tangent increment to a value of the given kind."""
    if kind == VariableKind.POSE:
        return value.retract(delta)
    if kind == VariableKind.VELOCITY:
        return value + delta
    if kind == VariableKind.BIAS:
        return ImuBias.from_vector(value.as_vector() + delta)
    return float(value + delta[0])


def local_value(kind: VariableKind, origin: Any, value: Any) -> np.ndarray:
    """Tangent difference ``value (-) origin``."""
    if kind == VariableKind.POSE:
        return origin.local(value)
    if kind == VariableKind.VELOCITY:
        return np.asarray(value) - np.asarray(origin)
    if kind == VariableKind.BIAS:
        return value.as_vector() - origin.as_vector()
    return np.array([float(value) - float(origin)])


class Values:
    """Estimate for a set of variables."""

    def __init__(self, entries: Optional[Mapping[VariableKey, Any]] = None) -> None:
        self._entries: Dict[VariableKey, Any] = dict(entries or {})

    def __contains__(self, key: VariableKey) -> bool:
        return key in self._entries

    def __getitem__(self, key: VariableKey) -> Any:
        try:
            return self._entries[key]
        except KeyError:
            raise GraphError(f"No estimate for {key}", key=key) from None

    def __setitem__(self, key: VariableKey, value: Any) -> None:
        self._entries[key] = value

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[VariableKey]:
        return iter(self._entries)

    def keys(self) -> List[VariableKey]:
        """Keys in elimination order."""
        return sorted(self._entries)

    def copy(self) -> "Values":
        """Shallow copy (stored values are immutable)."""
        return Values(self._entries)

    def pop(self, key: VariableKey) -> Any:
        """Remove and return an entry."""
        return self._entries.pop(key)

    def insert_epoch(self, epoch: int, state: NavState, bias: ImuBias, clock: float) -> None:
        """Set all four variables of an epoch."""
        self._entries[P(epoch)] = Pose(state.orientation, state.position)
        self._entries[V(epoch)] = np.asarray(state.velocity, dtype=float)
        self._entries[B(epoch)] = bias
        self._entries[C(epoch)] = float(clock)

    def pose(self, epoch: int) -> Pose:
        return self[P(epoch)]

    def velocity(self, epoch: int) -> np.ndarray:
        return self[V(epoch)]

    def bias(self, epoch: int) -> ImuBias:
        return self[B(epoch)]

    def clock(self, epoch: int) -> float:
        return self[C(epoch)]

    def nav_state(self, epoch: int) -> NavState:
        """Pose and velocity of an epoch as a :class:`NavState`."""
        pose = self.pose(epoch)
        return NavState(pose.position, self.velocity(epoch), pose.rotation)

    def retract(self, delta: np.ndarray, offsets: Mapping[VariableKey, int]) -> "Values":
        """New estimate with ``delta`` applied at the given column offsets."""
        result = self.copy()
        for key, offset in offsets.items():
            result._entries[key] = retract_value(
                key.kind, self._entries[key], delta[offset:offset + key.dim]
            )
        return result


def sqrt_information(covariance: np.ndarray) -> np.ndarray:
    """Square-root information ``L^-1`` of ``covariance = L L^T``.

    Raises:
        ConfigurationError: If the covariance is not symmetric positive definite.
    """
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.shape[0] != cov.shape[1] or not np.all(np.isfinite(cov)):
        raise ConfigurationError("noise covariance must be a finite square matrix")
    if not np.allclose(cov, cov.T, rtol=1e-9, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
        raise ConfigurationError("noise covariance must be symmetric")
    try:
        lower = linalg.cholesky(0.5 * (cov + cov.T), lower=True)
    except linalg.LinAlgError:
        raise ConfigurationError("noise covariance must be positive definite") from None
    return linalg.solve_triangular(lower, np.eye(cov.shape[0]), lower=True)


class FactorKind(str, Enum):
    """Factor variants."""
    PRIOR = "prior"
    IMU = "imu"
    PSEUDORANGE = "pseudorange"
    GNSS_POSITION = "gnss_position"
    BIAS_WALK = "bias_walk"
    CLOCK_WALK = "clock_walk"


@dataclass
class LinearizedFactor:
    """Whitened, IRLS-weighted Jacobian blocks and error at one estimate."""

    keys: Tuple[VariableKey, ...]
    blocks: List[np.ndarray]
    error: np.ndarray
    weight: float


class Factor(ABC):
    """A measurement constraint between graph variables."""

    kind: FactorKind

    def __init__(
        self,
        keys: Sequence[VariableKey],
        sqrt_info: np.ndarray,
        kernel: Optional[RobustKernel] = None,
    ) -> None:
        self.keys: Tuple[VariableKey, ...] = tuple(keys)
        self.sqrt_info = np.atleast_2d(np.asarray(sqrt_info, dtype=float))
        self.kernel = kernel
        if len(set(self.keys)) != len(self.keys):
            raise GraphError(f"{type(self).__name__} has repeated keys", key=self.keys)

    @property
    def dim(self) -> int:
        """Residual dimension."""
        return self.sqrt_info.shape[0]

    @property
    def epochs(self) -> Tuple[int, ...]:
        """Distinct epochs referenced by this factor."""
        return tuple(sorted({key.epoch for key in self.keys}))

    @abstractmethod
    def error(self, values: Values) -> np.ndarray:
        """Unwhitened error."""

    @abstractmethod
    def jacobians(self, values: Values) -> List[np.ndarray]:
        """Unwhitened error Jacobians, one block per key."""

    def whitened_error(self, values: Values) -> np.ndarray:
        return self.sqrt_info @ self.error(values)

    def cost(self, values: Values) -> float:
        """``rho(|r_w|)`` with a kernel, ``0.5 |r_w|^2`` without."""
        norm = float(np.linalg.norm(self.whitened_error(values)))
        if self.kernel is None:
            return 0.5 * norm * norm
        return self.kernel.evaluate(norm).value

    def irls_weight(self, values: Values) -> float:
        """IRLS weight at the current estimate (1 without a kernel)."""
        if self.kernel is None:
            return 1.0
        return self.kernel.weight(float(np.linalg.norm(self.whitened_error(values))))

    def linearize(self, values: Values) -> LinearizedFactor:
        """Whitened Jacobians and error, scaled by the square root of the IRLS weight."""
        whitened = self.whitened_error(values)
        weight = 1.0
        if self.kernel is not None:
            weight = self.kernel.weight(float(np.linalg.norm(whitened)))
        scale = math.sqrt(weight)
        blocks = [scale * (self.sqrt_info @ block) for block in self.jacobians(values)]
        return LinearizedFactor(self.keys, blocks, scale * whitened, weight)

    def __repr__(self) -> str:
        keys = ", ".join(str(key) for key in self.keys)
        return f"{type(self).__name__}({keys})"


class PriorFactor(Factor):
    """Gaussian prior over one or more variables.

    The error stacks ``x (-) mean`` for every key; the noise model is given
    directly as a square-root information matrix.
    """

    kind = FactorKind.PRIOR

    def __init__(self, means: Mapping[VariableKey, Any], sqrt_info: np.ndarray) -> None:
        keys = sorted(means)
        super().__init__(keys, sqrt_info)
        self.means = {key: means[key] for key in keys}
        expected = sum(key.dim for key in keys)
        if self.sqrt_info.shape != (expected, expected):
            raise GraphError(
                f"prior information must be {expected}x{expected}, got {self.sqrt_info.shape}",
                key=tuple(keys),
            )

    @classmethod
    def from_sigmas(cls, key: VariableKey, mean: Any, sigmas: Sequence[float]) -> "PriorFactor":
        """Single-variable prior with independent per-component sigmas."""
        sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (key.dim,))
        if np.any(sigmas <= 0):
            raise ConfigurationError("prior sigmas must be positive", field=str(key))
        return cls({key: mean}, np.diag(1.0 / sigmas))

    def error(self, values: Values) -> np.ndarray:
        return np.concatenate(
            [local_value(key.kind, mean, values[key]) for key, mean in self.means.items()]
        )

    def jacobians(self, values: Values) -> List[np.ndarray]:
        blocks = []
        row = 0
        for key, mean in self.means.items():
            block = np.zeros((self.dim, key.dim))
            block[row:row + key.dim] = np.eye(key.dim)
            if key.kind == VariableKind.POSE:
                rotation_error = local_value(key.kind, mean, values[key])[0:3]
                block[row:row + 3, 0:3] = right_jacobian_inverse(rotation_error)
            blocks.append(block)
            row += key.dim
        return blocks


class ImuFactor(Factor):
    """Preintegrated IMU constraint between consecutive epochs."""

    kind = FactorKind.IMU

    def __init__(self, epoch_i: int, epoch_j: int, pim: PreintegratedImu, gravity: GravityVector) -> None:
        if epoch_j - epoch_i != 1:
            raise GraphError(
                f"IMU factor must link consecutive epochs, got {epoch_i} -> {epoch_j}",
                key=(epoch_i, epoch_j),
            )
        super().__init__(
            [P(epoch_i), V(epoch_i), B(epoch_i), P(epoch_j), V(epoch_j)],
            sqrt_information(pim.factor_covariance()),
        )
        self.epoch_i = epoch_i
        self.epoch_j = epoch_j
        self.pim = pim
        self.gravity = gravity

    def error(self, values: Values) -> np.ndarray:
        return imu_residual(
            values.nav_state(self.epoch_i),
            values.nav_state(self.epoch_j),
            values.bias(self.epoch_i),
            self.pim,
            self.gravity,
        )

    def jacobians(self, values: Values) -> List[np.ndarray]:
        blocks = imu_residual_jacobians(
            values.nav_state(self.epoch_i),
            values.nav_state(self.epoch_j),
            values.bias(self.epoch_i),
            self.pim,
            self.gravity,
        )
        return [blocks.pose_i, blocks.vel_i, blocks.bias_i, blocks.pose_j, blocks.vel_j]


def predicted_pseudorange(receiver: np.ndarray, clock: float, sat_position: np.ndarray) -> float:
    """Geometric range plus receiver clock bias (m)."""
    return float(np.linalg.norm(np.asarray(sat_position) - np.asarray(receiver))) + clock


def pseudorange_jacobian(receiver: np.ndarray, sat_position: np.ndarray) -> np.ndarray:
    """Gradient of :func:`predicted_pseudorange` wrt ``[position, clock]``.

    The position part is the negated receiver-to-satellite unit vector.
    """
    line_of_sight = np.asarray(sat_position) - np.asarray(receiver)
    distance = float(np.linalg.norm(line_of_sight))
    if distance == 0.0:
        raise GraphError("receiver coincides with satellite position")
    return np.concatenate([-line_of_sight / distance, [1.0]])


class PseudorangeFactor(Factor):
    """Raw pseudorange: ``rho - (|p_sat - p| + clock)``."""

    kind = FactorKind.PSEUDORANGE

    def __init__(self, epoch: int, observation: SatObservation, kernel: Optional[RobustKernel] = None) -> None:
        super().__init__([P(epoch), C(epoch)], np.array([[1.0 / observation.sigma]]), kernel)
        self.epoch = epoch
        self.observation = observation

    def error(self, values: Values) -> np.ndarray:
        predicted = predicted_pseudorange(
            values.pose(self.epoch).position, values.clock(self.epoch), self.observation.sat_position
        )
        return np.array([self.observation.pseudorange - predicted])

    def jacobians(self, values: Values) -> List[np.ndarray]:
        gradient = pseudorange_jacobian(values.pose(self.epoch).position, self.observation.sat_position)
        pose_block = np.zeros((1, 6))
        pose_block[0, 3:6] = -gradient[0:3]
        return [pose_block, np.array([[-1.0]])]


class GnssPositionFactor(Factor):
    """Loosely coupled position fix: ``z - p``."""

    kind = FactorKind.GNSS_POSITION

    def __init__(
        self,
        epoch: int,
        position: np.ndarray,
        covariance: np.ndarray,
        kernel: Optional[RobustKernel] = None,
    ) -> None:
        super().__init__([P(epoch)], sqrt_information(covariance), kernel)
        self.epoch = epoch
        self.position = np.asarray(position, dtype=float).reshape(3)

    def error(self, values: Values) -> np.ndarray:
        return self.position - values.pose(self.epoch).position

    def jacobians(self, values: Values) -> List[np.ndarray]:
        block = np.zeros((3, 6))
        block[:, 3:6] = -np.eye(3)
        return [block]


class BiasWalkFactor(Factor):
    """Random-walk link ``b_j - b_i`` ordered ``[accel, gyro]``."""

    kind = FactorKind.BIAS_WALK

    def __init__(self, epoch_i: int, epoch_j: int, noise: ImuNoiseParams, dt: float = 1.0) -> None:
        root_dt = math.sqrt(dt)
        sigmas = np.concatenate([
            np.full(3, noise.accel_bias_walk * root_dt),
            np.full(3, noise.gyro_bias_walk * root_dt),
        ])
        super().__init__([B(epoch_i), B(epoch_j)], np.diag(1.0 / sigmas))
        self.epoch_i = epoch_i
        self.epoch_j = epoch_j

    def error(self, values: Values) -> np.ndarray:
        return values.bias(self.epoch_j).as_vector() - values.bias(self.epoch_i).as_vector()

    def jacobians(self, values: Values) -> List[np.ndarray]:
        return [-np.eye(6), np.eye(6)]


class ClockWalkFactor(Factor):
    """Random-walk link ``clock_j - clock_i``."""

    kind = FactorKind.CLOCK_WALK

    def __init__(self, epoch_i: int, epoch_j: int, sigma: float) -> None:
        if not sigma > 0:
            raise ConfigurationError("clock walk sigma must be positive", field="clock_walk_sigma")
        super().__init__([C(epoch_i), C(epoch_j)], np.array([[1.0 / sigma]]))
        self.epoch_i = epoch_i
        self.epoch_j = epoch_j

    def error(self, values: Values) -> np.ndarray:
        return np.array([values.clock(self.epoch_j) - values.clock(self.epoch_i)])

    def jacobians(self, values: Values) -> List[np.ndarray]:
        return [np.array([[-1.0]]), np.array([[1.0]])]


GNSS_FACTOR_KINDS = (FactorKind.PSEUDORANGE, FactorKind.GNSS_POSITION)


def factor_keys(factors: Iterable[Factor]) -> List[VariableKey]:
    """Sorted union of the keys of several factors."""
    return sorted({key for factor in factors for key in factor.keys})
