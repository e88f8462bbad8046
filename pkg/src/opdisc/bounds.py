"""Closed-form query counts and fidelity bounds, plus the per-channel report.

Every count is a ceiling of a ratio of angles. The ratios land exactly on
integers for the standard test angles (``pi/4``, ``pi/6``...), where a one-ulp
rounding error would add a spurious query, so ceilings forgive ``1e-9``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .core import KrausChannel, extend_with_ancilla, output_support
from .errors import DomainError, NotDistinguishableError
from .fidelity import (
    DISTINGUISHABLE_TOL,
    CLUSTER_VALUE_TOL,
    FidelityResult,
    alpha0,
    f1_ea,
    f1_identity,
)
from .search import OptimizerConfig

CEIL_TOL = 1e-9
#: f1 at or below this is treated as 0, i.e. theta = pi/2 and a single query suffices.
SINGLE_QUERY_TOL = 1e-9
HALF_PI = math.pi / 2


def tolerant_ceil(x: float) -> int:
    return math.ceil(x - CEIL_TOL)


def nmin_exact_2d(f1_value: float) -> int:
    """Optimal number of sequential queries for a qubit channel: ``ceil(pi / (2 arccos f1))``."""
    if not 0.0 <= f1_value <= 1.0:
        raise DomainError(f"fidelity {f1_value} outside [0, 1]")
    if f1_value >= 1.0:
        raise NotDistinguishableError("f1 = 1: the channel cannot be told apart from the identity")
    return max(1, tolerant_ceil(math.pi / (2.0 * math.acos(f1_value))))


def nmin_lower(theta_sum: float) -> int:
    """Lower bound ``ceil(pi / (2 theta))`` on the query count.

    Pass ``theta0 + theta1`` to bound the discrimination of two channels
    from their individual angles to the identity.
    """
    if not theta_sum > 0.0:
        raise NotDistinguishableError(f"angle {theta_sum} must be positive")
    if theta_sum > math.pi + 1e-12:
        raise DomainError(f"angle {theta_sum} exceeds pi")
    return max(1, tolerant_ceil(math.pi / (2.0 * theta_sum)))


def nmin_upper(theta: float, cos_alpha0: float) -> int:
    """Upper bound ``ceil(ln cos a0 / ln cos theta) + 1``, with a zero ``cos a0`` meaning one query."""
    if not 0.0 < theta < HALF_PI:
        raise DomainError(f"angle {theta} outside (0, pi/2); use the single-query path for pi/2")
    if not 0.0 <= cos_alpha0 < 1.0:
        raise DomainError(f"cos(alpha0) = {cos_alpha0} outside [0, 1)")
    if cos_alpha0 == 0.0:
        return 1
    ratio = max(0.0, math.log(cos_alpha0) / math.log(math.cos(theta)))
    return tolerant_ceil(ratio) + 1


def lemma2_bound(theta: float, alpha0: float, alpha: float) -> float:
    """``|sin(a0 - alpha)| / sin(a0) * cos(theta)``: fidelity reachable at input overlap ``cos(alpha)``."""
    if not 0.0 < theta < HALF_PI:
        raise DomainError(f"angle {theta} outside (0, pi/2)")
    if not 0.0 < alpha0 < HALF_PI:
        raise DomainError(f"alpha0 = {alpha0} outside (0, pi/2)")
    if not 0.0 <= alpha <= math.pi:
        raise DomainError(f"alpha = {alpha} outside [0, pi]")
    return abs(math.sin(alpha0 - alpha)) / math.sin(alpha0) * math.cos(theta)


def thm4_lower(q: float, theta0: float, theta1: float) -> float:
    """Lower bound on the ``q``-maximal fidelity of two channels with angles ``theta0``, ``theta1`` to the identity.

    With ``alpha = arccos q`` this is ``cos(alpha + theta0 + theta1)``, or 0
    once any of ``alpha + theta0``, ``alpha + theta1``, ``alpha + theta0 + theta1``
    reaches ``pi/2``.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"overlap {q} outside [0, 1]")
    for name, t in (("theta0", theta0), ("theta1", theta1)):
        if not 0.0 <= t <= HALF_PI:
            raise DomainError(f"{name} = {t} outside [0, pi/2]")
    alpha = math.acos(q)
    # add the angles first so the result does not depend on argument order
    total = alpha + (theta0 + theta1)
    if alpha + max(theta0, theta1) >= HALF_PI or total >= HALF_PI:
        return 0.0
    return math.cos(total)


# ==================================================================================================
# Report
# ==================================================================================================


@dataclass(frozen=True)
class DistinguishabilityReport:
    """Everything known about discriminating a channel from the identity.

    Query counts are ``None`` when they do not apply: all of them for an
    indistinguishable channel, ``nmin_exact_2d`` outside dimension 2 and the
    ``ea_*`` fields unless requested. ``lower_bound_reachable`` records
    whether some located minimizer has a pure output, in which case the
    qubit scheme runs inside the plane it spans and the lower bound is met.
    """

    f1: float
    theta: float
    cos_alpha0: Optional[float]
    distinguishable: bool
    nmin_exact_2d: Optional[int]
    nmin_lower: Optional[int]
    nmin_upper: Optional[int]
    lower_bound_reachable: Optional[bool] = None
    ea_f1: Optional[float] = None
    ea_nmin_lower: Optional[int] = None
    ea_nmin_upper: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DistinguishabilityReport":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**data)


def _counts(channel: KrausChannel, f1: FidelityResult, config: OptimizerConfig):
    """``(cos_alpha0, lower, upper)`` for one channel, ``None`` where undefined."""
    if not f1.distinguishable:
        return None, None, None
    if f1.value <= SINGLE_QUERY_TOL:
        return None, 1, 1
    a0 = alpha0(channel, f1, config)
    return a0.cos_alpha0, nmin_lower(f1.theta), nmin_upper(f1.theta, a0.cos_alpha0)


def _has_pure_minimizer(channel: KrausChannel, f1: FidelityResult) -> bool:
    cut = f1.value + CLUSTER_VALUE_TOL
    cands = [psi for value, psi in f1.candidates if value <= cut] or [f1.witness_input.amplitudes]
    return any(output_support(channel, psi).shape[1] == 1 for psi in cands)


def build_report(
    channel: KrausChannel,
    config: Optional[OptimizerConfig] = None,
    with_ea: bool = False,
    f1: Optional[FidelityResult] = None,
) -> DistinguishabilityReport:
    config = config or OptimizerConfig()
    if f1 is None:
        f1 = f1_identity(channel, config)
    cos_a0, lower, upper = _counts(channel, f1, config)
    exact = nmin_exact_2d(f1.value) if channel.dim == 2 and f1.distinguishable else None
    reachable = _has_pure_minimizer(channel, f1) if f1.distinguishable else None

    ea = {}
    if with_ea:
        ea_res = f1_ea(channel, config, f1=f1)
        ext = extend_with_ancilla(channel, channel.dim)
        _, ea_lower, ea_upper = _counts(ext, ea_res, config)
        ea = {"ea_f1": ea_res.value, "ea_nmin_lower": ea_lower, "ea_nmin_upper": ea_upper}

    return DistinguishabilityReport(
        f1=f1.value,
        theta=f1.theta,
        cos_alpha0=cos_a0,
        distinguishable=f1.value < 1.0 - DISTINGUISHABLE_TOL,
        nmin_exact_2d=exact,
        nmin_lower=lower,
        nmin_upper=upper,
        lower_bound_reachable=reachable,
        **ea,
    )
