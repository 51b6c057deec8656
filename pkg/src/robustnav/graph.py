"""Factor graph container and sparse linearization."""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy import sparse

from robustnav.exceptions import GraphError
from robustnav.factors import (
    GNSS_FACTOR_KINDS,
    BiasWalkFactor,
    ClockWalkFactor,
    Factor,
    FactorKind,
    GnssPositionFactor,
    ImuFactor,
    PriorFactor,
    PseudorangeFactor,
    Values,
    VariableKey,
    epoch_keys,
)
from robustnav.geo import EcefCoord
from robustnav.models import ImuNoiseParams
from robustnav.preint import GravityVector, PreintegratedImu
from robustnav.robust import RobustKernel
from robustnav.state import SatObservation

logger = logging.getLogger(__name__)


@dataclass
class LinearSystem:
    """Stacked whitened Jacobian ``J`` and error ``r`` over an ordering."""

    jacobian: sparse.csr_matrix
    error: np.ndarray
    ordering: List[VariableKey]
    offsets: Dict[VariableKey, int]

    @property
    def dim(self) -> int:
        return self.jacobian.shape[1]

    def normal_equations(self) -> Tuple[sparse.csc_matrix, np.ndarray]:
        """``H = J^T J`` and gradient ``g = J^T r``."""
        jt = self.jacobian.T.tocsr()
        return (jt @ self.jacobian).tocsc(), jt @ self.error


def column_offsets(ordering: Sequence[VariableKey]) -> Dict[VariableKey, int]:
    """Column offset of each variable in the stacked tangent vector."""
    offsets: Dict[VariableKey, int] = {}
    column = 0
    for key in ordering:
        offsets[key] = column
        column += key.dim
    return offsets


class FactorGraph:
    """Variables and the factors that constrain them."""

    def __init__(self) -> None:
        self._keys: Set[VariableKey] = set()
        self._factors: List[Factor] = []

    @property
    def factors(self) -> List[Factor]:
        """Factors in insertion order."""
        return list(self._factors)

    @property
    def factor_count(self) -> int:
        return len(self._factors)

    @property
    def keys(self) -> List[VariableKey]:
        """Variables in elimination order."""
        return sorted(self._keys)

    @property
    def epochs(self) -> List[int]:
        """Epochs with at least one variable."""
        return sorted({key.epoch for key in self._keys})

    def has_epoch(self, epoch: int) -> bool:
        return any(key in self._keys for key in epoch_keys(epoch))

    def add_epoch(self, epoch: int) -> None:
        """Declare the pose, velocity, bias and clock variables of an epoch."""
        self._keys.update(epoch_keys(epoch))

    def add_factor(self, factor: Factor) -> Factor:
        """Insert a factor after checking that its variables exist.

        Raises:
            GraphError: If a key is unknown.
        """
        for key in factor.keys:
            if key not in self._keys:
                raise GraphError(f"{factor!r} references unknown variable {key}", key=key)
        self._factors.append(factor)
        return factor

    def add_prior(self, factor: PriorFactor) -> PriorFactor:
        """Insert a (possibly multi-variable) prior."""
        return self.add_factor(factor)

    def add_pseudorange_factor(
        self,
        epoch: int,
        observation: SatObservation,
        kernel: Optional[RobustKernel] = None,
    ) -> PseudorangeFactor:
        """Add a tightly coupled pseudorange constraint on Pose(epoch), Clock(epoch)."""
        return self.add_factor(PseudorangeFactor(epoch, observation, kernel))

    def add_gnss_position_factor(
        self,
        epoch: int,
        position: Union[EcefCoord, np.ndarray],
        covariance: np.ndarray,
        kernel: Optional[RobustKernel] = None,
    ) -> GnssPositionFactor:
        """Add a loosely coupled position-fix constraint on Pose(epoch)."""
        if isinstance(position, EcefCoord):
            position = position.as_array()
        return self.add_factor(GnssPositionFactor(epoch, position, covariance, kernel))

    def add_imu_factor(
        self,
        epoch_i: int,
        epoch_j: int,
        pim: PreintegratedImu,
        gravity: GravityVector,
    ) -> ImuFactor:
        """Add a preintegrated IMU constraint between consecutive epochs.

        Raises:
            GraphError: If the epochs are not consecutive or unknown.
        """
        return self.add_factor(ImuFactor(epoch_i, epoch_j, pim, gravity))

    def add_random_walk_factors(
        self,
        epoch_i: int,
        epoch_j: int,
        noise: ImuNoiseParams,
        clock_sigma: Optional[float],
        dt: float = 1.0,
    ) -> List[Factor]:
        """Link the biases and clocks of two epochs.

        Args:
            epoch_i: Earlier epoch.
            epoch_j: Later epoch.
            noise: Bias random-walk densities.
            clock_sigma: Clock walk per step (m); None skips the clock link.
            dt: Time between the epochs (s).
        """
        added: List[Factor] = [self.add_factor(BiasWalkFactor(epoch_i, epoch_j, noise, dt))]
        if clock_sigma is not None:
            added.append(self.add_factor(ClockWalkFactor(epoch_i, epoch_j, clock_sigma)))
        return added

    def factors_touching(self, keys: Iterable[VariableKey]) -> List[Factor]:
        """Factors that reference at least one of ``keys``."""
        wanted = set(keys)
        return [factor for factor in self._factors if wanted.intersection(factor.keys)]

    def remove_epochs(self, epochs: Iterable[int]) -> List[Factor]:
        """Drop the variables of some epochs together with every factor touching them.

        Returns:
            The removed factors.
        """
        doomed = {key for epoch in epochs for key in epoch_keys(epoch)}
        removed = [factor for factor in self._factors if doomed.intersection(factor.keys)]
        self._factors = [factor for factor in self._factors if not doomed.intersection(factor.keys)]
        self._keys -= doomed
        return removed

    def check_gauge(self) -> None:
        """Require a prior and a factor path from it to every variable.

        Raises:
            GraphError: If no prior exists or some variable is unreachable.
        """
        priors = [factor for factor in self._factors if factor.kind == FactorKind.PRIOR]
        if not priors:
            raise GraphError("graph has no prior factor; gauge is not fixed")

        neighbours: Dict[VariableKey, Set[VariableKey]] = {key: set() for key in self._keys}
        for factor in self._factors:
            for key in factor.keys:
                neighbours[key].update(factor.keys)

        reached: Set[VariableKey] = set()
        frontier = [key for prior in priors for key in prior.keys]
        while frontier:
            key = frontier.pop()
            if key in reached:
                continue
            reached.add(key)
            frontier.extend(neighbours[key] - reached)

        missing = sorted(self._keys - reached)
        if missing:
            raise GraphError(f"{len(missing)} variables are not connected to a prior", key=missing[0])

    def total_cost(self, values: Values) -> float:
        """Sum of factor costs, robust on GNSS factors only."""
        return float(sum(factor.cost(values) for factor in self._factors))

    def residual_statistics(
        self,
        values: Values,
        kinds: Sequence[FactorKind] = GNSS_FACTOR_KINDS,
    ) -> np.ndarray:
        """Whitened error norms of the factors of the given kinds."""
        return np.array([
            float(np.linalg.norm(factor.whitened_error(values)))
            for factor in self._factors
            if factor.kind in kinds
        ])

    def linearize(
        self,
        values: Values,
        ordering: Optional[Sequence[VariableKey]] = None,
        factors: Optional[Sequence[Factor]] = None,
    ) -> LinearSystem:
        """Stack whitened, IRLS-weighted factor Jacobians into a sparse matrix.

        Args:
            values: Linearization point.
            ordering: Column ordering; defaults to :attr:`keys`.
            factors: Subset of factors; defaults to all.
        """
        ordering = list(ordering) if ordering is not None else self.keys
        factors = self._factors if factors is None else factors
        offsets = column_offsets(ordering)
        columns = sum(key.dim for key in ordering)

        rows_idx: List[np.ndarray] = []
        cols_idx: List[np.ndarray] = []
        data: List[np.ndarray] = []
        errors: List[np.ndarray] = []
        row = 0
        for factor in factors:
            linear = factor.linearize(values)
            height = linear.error.shape[0]
            for key, block in zip(linear.keys, linear.blocks):
                if key not in offsets:
                    raise GraphError(f"{key} is missing from the ordering", key=key)
                r_index, c_index = np.nonzero(block)
                rows_idx.append(r_index + row)
                cols_idx.append(c_index + offsets[key])
                data.append(block[r_index, c_index])
            errors.append(linear.error)
            row += height

        if data:
            jacobian = sparse.coo_matrix(
                (np.concatenate(data), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
                shape=(row, columns),
            ).tocsr()
        else:
            jacobian = sparse.csr_matrix((row, columns))
        error = np.concatenate(errors) if errors else np.zeros(0)
        return LinearSystem(jacobian=jacobian, error=error, ordering=ordering, offsets=offsets)

    def __repr__(self) -> str:
        return f"FactorGraph(variables={len(self._keys)}, factors={len(self._factors)})"
