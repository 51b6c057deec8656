"""Robust loss kernels: L2, Huber, Tukey, Cauchy and the adaptive Barron family.

Kernels operate on the Mahalanobis-whitened residual norm, so every threshold
and scale is dimensionless. Each evaluation returns the loss value, its
derivative and the IRLS weight ``w(r) = loss'(r) / r`` with the ``r -> 0``
limit taken analytically.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from robustnav.exceptions import EstimationError, InvalidKernelError

WELSCH_ALPHA = float("-inf")
"""Sentinel shape selecting the Welsch (alpha -> -inf) branch."""

ALPHA_EPS = 1e-9
ALPHA_LARGE = 1e6

DEFAULT_HUBER_THRESHOLD = 1.345
DEFAULT_TUKEY_THRESHOLD = 4.685
DEFAULT_CAUCHY_SCALE = 2.3849


class KernelKind(str, Enum):
    """Robust kernel families."""
    L2 = "l2"
    HUBER = "huber"
    TUKEY = "tukey"
    CAUCHY = "cauchy"
    BARRON = "barron"
    GEMAN_MCCLURE = "geman_mcclure"
    WELSCH = "welsch"


class BarronBranch(str, Enum):
    """Closed-form branches of the Barron loss."""
    QUADRATIC = "quadratic"
    CAUCHY = "cauchy"
    WELSCH = "welsch"
    GENERAL = "general"


@dataclass(frozen=True)
class LossEval:
    """Loss value, derivative and IRLS weight at one residual."""

    value: float
    derivative: float
    irls_weight: float


@dataclass(frozen=True)
class LimitCheckReport:
    """Difference between the general Barron formula and a limit branch."""

    alpha: float
    scale: float
    residual: float
    branch: BarronBranch
    general_value: float
    branch_value: float

    @property
    def abs_difference(self) -> float:
        """Absolute value difference."""
        return abs(self.general_value - self.branch_value)


@dataclass(frozen=True)
class RobustKernel:
    """Robust loss selector with its shape/scale parameters.

    ``parameter`` is the Huber/Tukey threshold or the Cauchy scale; ``alpha``
    and ``scale`` parametrize the Barron family.
    """

    kind: KernelKind = KernelKind.L2
    parameter: float = 1.0
    alpha: float = 2.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        kind = KernelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (KernelKind.HUBER, KernelKind.TUKEY, KernelKind.CAUCHY):
            if not math.isfinite(self.parameter) or self.parameter <= 0:
                raise InvalidKernelError(
                    f"{kind.value} parameter must be positive and finite, got {self.parameter}",
                    kind=kind.value,
                    parameter="parameter",
                )
        if kind in (KernelKind.BARRON, KernelKind.GEMAN_MCCLURE, KernelKind.WELSCH):
            if not math.isfinite(self.scale) or self.scale <= 0:
                raise InvalidKernelError(
                    f"Barron scale c must be positive and finite, got {self.scale}",
                    kind=kind.value,
                    parameter="c",
                )
            if math.isnan(self.alpha) or self.alpha > ALPHA_LARGE:
                raise InvalidKernelError(
                    f"Barron shape must be -inf or a finite value <= {ALPHA_LARGE:g}, got {self.alpha}",
                    kind=kind.value,
                    parameter="alpha",
                )

    @classmethod
    def l2(cls) -> "RobustKernel":
        """Plain quadratic loss."""
        return cls(KernelKind.L2)

    @classmethod
    def huber(cls, threshold: float = DEFAULT_HUBER_THRESHOLD) -> "RobustKernel":
        """Huber loss with the given threshold."""
        return cls(KernelKind.HUBER, parameter=threshold)

    @classmethod
    def tukey(cls, threshold: float = DEFAULT_TUKEY_THRESHOLD) -> "RobustKernel":
        """Tukey biweight loss with the given threshold."""
        return cls(KernelKind.TUKEY, parameter=threshold)

    @classmethod
    def cauchy(cls, scale: float = DEFAULT_CAUCHY_SCALE) -> "RobustKernel":
        """Cauchy loss with the given scale."""
        return cls(KernelKind.CAUCHY, parameter=scale)

    @classmethod
    def barron(cls, alpha: float = -0.75, c: float = 1.2) -> "RobustKernel":
        """General adaptive Barron loss."""
        return cls(KernelKind.BARRON, alpha=alpha, scale=c)

    @classmethod
    def geman_mcclure(cls, c: float = 1.0) -> "RobustKernel":
        """Geman-McClure loss (Barron with alpha = -2)."""
        return cls(KernelKind.GEMAN_MCCLURE, alpha=-2.0, scale=c)

    @classmethod
    def welsch(cls, c: float = 1.0) -> "RobustKernel":
        """Welsch loss (Barron with alpha -> -inf)."""
        return cls(KernelKind.WELSCH, alpha=WELSCH_ALPHA, scale=c)

    @classmethod
    def from_name(
        cls,
        name: str,
        alpha: float = -0.75,
        c: float = 1.2,
        threshold: Optional[float] = None,
    ) -> "RobustKernel":
        """Build a kernel from its CLI name.

        Args:
            name: One of the :class:`KernelKind` values.
            alpha: Barron shape.
            c: Barron scale (also the Geman-McClure/Welsch scale).
            threshold: Huber/Tukey threshold or Cauchy scale; defaults to the
                95 % efficiency constant of each kernel.

        Returns:
            The configured kernel.
        """
        try:
            kind = KernelKind(name.lower())
        except ValueError:
            raise InvalidKernelError(f"Unknown loss {name!r}", kind=name) from None

        if kind == KernelKind.L2:
            return cls.l2()
        if kind == KernelKind.HUBER:
            return cls.huber(threshold if threshold is not None else DEFAULT_HUBER_THRESHOLD)
        if kind == KernelKind.TUKEY:
            return cls.tukey(threshold if threshold is not None else DEFAULT_TUKEY_THRESHOLD)
        if kind == KernelKind.CAUCHY:
            return cls.cauchy(threshold if threshold is not None else DEFAULT_CAUCHY_SCALE)
        if kind == KernelKind.GEMAN_MCCLURE:
            return cls.geman_mcclure(c)
        if kind == KernelKind.WELSCH:
            return cls.welsch(c)
        return cls.barron(alpha, c)

    @property
    def barron_branch(self) -> Optional[BarronBranch]:
        """Branch used for Barron-family kernels, None for the others."""
        if self.kind not in (KernelKind.BARRON, KernelKind.GEMAN_MCCLURE, KernelKind.WELSCH):
            return None
        return _barron_dispatch(self.alpha)

    def evaluate(self, r: float) -> LossEval:
        """Evaluate loss, derivative and IRLS weight at a whitened residual."""
        return kernel_eval(self, r)

    def weight(self, r: float) -> float:
        """IRLS weight at a whitened residual."""
        return kernel_eval(self, r).irls_weight

    def describe(self) -> str:
        """Short human-readable description."""
        if self.kind == KernelKind.L2:
            return "l2"
        if self.kind in (KernelKind.HUBER, KernelKind.TUKEY, KernelKind.CAUCHY):
            return f"{self.kind.value}({self.parameter:g})"
        return f"{self.kind.value}(alpha={self.alpha:g}, c={self.scale:g})"


def _barron_dispatch(alpha: float) -> BarronBranch:
    if abs(alpha - 2.0) < ALPHA_EPS:
        return BarronBranch.QUADRATIC
    if abs(alpha) < ALPHA_EPS:
        return BarronBranch.CAUCHY
    if alpha == WELSCH_ALPHA or alpha < -ALPHA_LARGE:
        return BarronBranch.WELSCH
    return BarronBranch.GENERAL


def _barron_branch_eval(branch: BarronBranch, alpha: float, c: float, r: float) -> LossEval:
    x2 = (r / c) ** 2
    inv_c2 = 1.0 / (c * c)

    if branch == BarronBranch.QUADRATIC:
        weight = inv_c2
        return LossEval(0.5 * x2, weight * r, weight)

    if branch == BarronBranch.CAUCHY:
        weight = 2.0 / (r * r + 2.0 * c * c)
        return LossEval(math.log1p(0.5 * x2), weight * r, weight)

    if branch == BarronBranch.WELSCH:
        decay = math.exp(-0.5 * x2)
        weight = inv_c2 * decay
        return LossEval(-math.expm1(-0.5 * x2), weight * r, weight)

    b = abs(alpha - 2.0)
    log_base = math.log1p(x2 / b)
    value = (b / alpha) * math.expm1(0.5 * alpha * log_base)
    weight = inv_c2 * math.exp((0.5 * alpha - 1.0) * log_base)
    return LossEval(max(value, 0.0), weight * r, weight)


def kernel_eval(kernel: RobustKernel, r: float) -> LossEval:
    """Evaluate a robust kernel at a whitened residual.

    Args:
        kernel: The kernel.
        r: Whitened residual (scalar, may be negative).

    Returns:
        Loss value, derivative and IRLS weight.

    Raises:
        EstimationError: If ``r`` is not finite.
    """
    r = float(r)
    if not math.isfinite(r):
        raise EstimationError(f"Robust kernel received non-finite residual {r}")

    kind = kernel.kind
    if kind == KernelKind.L2:
        return LossEval(0.5 * r * r, r, 1.0)

    if kind == KernelKind.HUBER:
        k = kernel.parameter
        if abs(r) <= k:
            return LossEval(0.5 * r * r, r, 1.0)
        weight = k / abs(r)
        return LossEval(k * abs(r) - 0.5 * k * k, weight * r, weight)

    if kind == KernelKind.TUKEY:
        k = kernel.parameter
        if abs(r) >= k:
            return LossEval(k * k / 6.0, 0.0, 0.0)
        u = 1.0 - (r / k) ** 2
        weight = u * u
        return LossEval(k * k / 6.0 * (1.0 - u ** 3), weight * r, weight)

    if kind == KernelKind.CAUCHY:
        k = kernel.parameter
        x2 = (r / k) ** 2
        weight = 1.0 / (1.0 + x2)
        return LossEval(0.5 * k * k * math.log1p(x2), weight * r, weight)

    return _barron_branch_eval(_barron_dispatch(kernel.alpha), kernel.alpha, kernel.scale, r)


def barron_limit_check(alpha: float, c: float, r: float) -> LimitCheckReport:
    """Compare the general Barron formula with the nearest limit branch.

    Args:
        alpha: Shape close to 2, 0 (within 1e-4) or a large negative value
            (at most -1e4) standing in for -inf.
        c: Scale.
        r: Residual.

    Returns:
        Report holding both values.

    Raises:
        InvalidKernelError: If alpha is not near a special value.
    """
    if abs(alpha - 2.0) <= 1e-4:
        branch = BarronBranch.QUADRATIC
    elif abs(alpha) <= 1e-4:
        branch = BarronBranch.CAUCHY
    elif alpha <= -1e4:
        branch = BarronBranch.WELSCH
    else:
        raise InvalidKernelError(
            f"alpha={alpha} is not near a limit of the Barron family",
            kind=KernelKind.BARRON.value,
            parameter="alpha",
        )
    if c <= 0:
        raise InvalidKernelError("Barron scale c must be positive", kind="barron", parameter="c")

    general = _barron_branch_eval(BarronBranch.GENERAL, alpha, c, r)
    limit = _barron_branch_eval(branch, alpha, c, r)
    return LimitCheckReport(
        alpha=alpha,
        scale=c,
        residual=r,
        branch=branch,
        general_value=general.value,
        branch_value=limit.value,
    )
