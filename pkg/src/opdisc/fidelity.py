"""Maximal fidelities between states and between channel outputs.

``F(rho0, rho1)`` is the largest overlap modulus between unit vectors taken
from the two supports. Channel-level quantities minimize it over pure inputs
through the stratified search in :mod:`opdisc.search`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    DensityOperator,
    KrausChannel,
    PureState,
    basis_state,
    extend_with_ancilla,
    output_support,
    span_basis,
    support_projector,
)
from .errors import (
    DegenerateGeometryError,
    DomainError,
    NotDistinguishableError,
    OpdiscError,
    OptimizerError,
    ShapeError,
)
from .search import OptimizerConfig, SearchResult, minimize_pair_fidelity, minimize_self_fidelity

#: Values in ``(1, 1 + CLAMP_TOL]`` are rounding noise and clamp to 1.
CLAMP_TOL = 1e-9
#: Starts within this much of the best value count as minimizers when computing alpha0.
CLUSTER_VALUE_TOL = 1e-6
CLUSTER_RAY_TOL = 1e-4
#: A channel is treated as perfectly distinguishable from the identity when f1 is below ``1 - DISTINGUISHABLE_TOL``.
DISTINGUISHABLE_TOL = 1e-6

__all__ = [
    "Alpha0Result",
    "FidelityResult",
    "OptimizerConfig",
    "alpha0",
    "f1_ea",
    "f1_identity",
    "lemma2_witness",
    "max_fidelity_states",
    "q_max_fidelity",
    "ray_distance",
    "state_output_fidelity",
]


class FidelityRangeError(OpdiscError, ArithmeticError):
    """A computed fidelity left ``[0, 1]`` by more than rounding allows."""


def clamp_fidelity(value: float) -> float:
    """Clip rounding noise into ``[0, 1]``.

    Values within ``1e-12`` of 1 become exactly 1: a unit vector projected
    onto a subspace containing it loses a few ulps, and ``arccos`` would
    turn that into a spurious angle of ``3e-8``.
    """
    if not -CLAMP_TOL <= value <= 1.0 + CLAMP_TOL:
        raise FidelityRangeError(f"fidelity {value!r} outside [0, 1]")
    if value > 1.0 - 1e-12:
        return 1.0
    return max(float(value), 0.0)


@dataclass(frozen=True, eq=False)
class FidelityResult:
    """An optimized (or directly computed) maximal fidelity.

    ``witness_input`` is a single state for ``f1``-type problems and a pair
    for two-state problems. ``witness_output_overlap_state`` is the unit
    vector in the relevant output support that realizes the overlap.
    ``candidates`` keeps every start's local minimum for later clustering.
    """

    value: float
    theta: float
    witness_input: Union[PureState, Tuple[PureState, PureState]]
    witness_output_overlap_state: PureState
    starts: int = 0
    converged_starts: int = 0
    best_gradient_norm: float = 0.0
    candidates: Tuple[Tuple[float, np.ndarray], ...] = field(default=(), repr=False)

    @classmethod
    def from_value(cls, value: float, witness, overlap_state: PureState, **kw) -> "FidelityResult":
        value = clamp_fidelity(value)
        return cls(value=value, theta=float(np.arccos(value)), witness_input=witness,
                   witness_output_overlap_state=overlap_state, **kw)

    @property
    def distinguishable(self) -> bool:
        return self.value < 1.0 - DISTINGUISHABLE_TOL


@dataclass(frozen=True, eq=False)
class Alpha0Result:
    cos_alpha0: float
    alpha0: float
    witness_b: PureState
    witness_b_prime: PureState
    minimizer_cluster_count: int


def ray_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Distance between the rays through unit vectors ``a`` and ``b``: ``sqrt(1 - |<a|b>|^2)``."""
    ov = abs(np.vdot(a, b))
    return float(np.sqrt(max(0.0, 1.0 - ov * ov)))


def _vec(state) -> np.ndarray:
    return state.amplitudes if isinstance(state, PureState) else np.asarray(state, dtype=complex)


def _closest_in(basis: np.ndarray, v: np.ndarray) -> PureState:
    """Unit vector in the span of ``basis`` closest to ``v`` (any basis vector if ``v`` is orthogonal)."""
    if basis.shape[1] == 0:
        return PureState(v)
    p = basis @ (basis.conj().T @ v)
    norm = np.linalg.norm(p)
    return PureState(p / norm if norm > 1e-12 else basis[:, 0])


# ==================================================================================================
# State level
# ==================================================================================================


def max_fidelity_states(rho0: DensityOperator, rho1: DensityOperator) -> FidelityResult:
    """``F(rho0, rho1)``: largest singular value of ``Q0^dagger Q1`` for support bases ``Q0``, ``Q1``.

    >>> a = DensityOperator.from_pure(basis_state(2, 0))
    >>> max_fidelity_states(a, a).value
    1.0
    """
    if rho0.dim != rho1.dim:
        raise ShapeError(f"states of dimension {rho0.dim} and {rho1.dim} cannot be compared")
    q0 = support_projector(rho0).basis
    q1 = support_projector(rho1).basis
    u, s, vh = np.linalg.svd(q0.conj().T @ q1)
    w0 = PureState(q0 @ u[:, 0])
    w1 = PureState(q1 @ vh[0].conj())
    return FidelityResult.from_value(s[0], w0, w1)


def state_output_fidelity(channel: KrausChannel, b, c) -> float:
    """``F(E(b), c) = ||P c||`` with ``P`` the projector onto ``supp E(b)``."""
    basis = output_support(channel, _vec(b))
    return clamp_fidelity(np.linalg.norm(basis.conj().T @ _vec(c)))


# ==================================================================================================
# Channel versus identity
# ==================================================================================================


def _self_result(stack: np.ndarray, res: SearchResult) -> FidelityResult:
    if res.converged_starts == 0:
        raise OptimizerError("no local search converged", res.best.value)
    psi = res.best.states[0]
    basis = span_basis((stack @ psi).T)
    return FidelityResult.from_value(
        res.best.value,
        PureState(psi),
        _closest_in(basis, psi),
        starts=len(res.per_start),
        converged_starts=res.converged_starts,
        best_gradient_norm=res.gradient_norm,
        candidates=tuple((r.value, r.states[0]) for r in res.per_start),
    )


def f1_identity(
    channel: KrausChannel,
    config: Optional[OptimizerConfig] = None,
    seed_states: Sequence = (),
) -> FidelityResult:
    """``min_psi F(E(psi), psi)``, the single-query fidelity between ``channel`` and the identity.

    The value is the best local minimum over ``config.starts`` starts and is
    therefore an upper estimate of the true minimum.
    """
    config = config or OptimizerConfig()
    channel.require_valid()
    seeds = [_vec(s) for s in seed_states]
    res = minimize_self_fidelity(channel.stack, config, seeds)
    return _self_result(channel.stack, res)


def f1_ea(
    channel: KrausChannel,
    config: Optional[OptimizerConfig] = None,
    f1: Optional[FidelityResult] = None,
) -> FidelityResult:
    """Entanglement-assisted ``f1``: the same search on ``I_R (x) E`` with ``dim R = dim``.

    Product inputs ``|0> (x) b`` embed the unassisted problem, so the
    unassisted minimizer is used as a seed and the result never exceeds it.
    """
    config = config or OptimizerConfig()
    channel.require_valid()
    d = channel.dim
    if f1 is None:
        f1 = f1_identity(channel, config)
    anchor = basis_state(d, 0).amplitudes
    seeds = [np.kron(anchor, f1.witness_input.amplitudes)]
    ext = extend_with_ancilla(channel, d)
    res = minimize_self_fidelity(ext.stack, config, seeds)
    return _self_result(ext.stack, res)


def alpha0(
    channel: KrausChannel,
    f1: FidelityResult,
    config: Optional[OptimizerConfig] = None,
) -> Alpha0Result:
    """Largest overlap between an ``f1`` minimizer ``b`` and a unit vector orthogonal to ``supp E(b)``.

    For a fixed ``b`` the best such vector is the normalized residual
    ``(I - P) b``. Minimizers are the starts within ``1e-6`` of ``f1``,
    grouped by ray distance, and the maximum is taken over the groups.
    When ``f1`` carries no start records the search is rerun with ``config``.
    """
    if not f1.distinguishable:
        raise NotDistinguishableError(f"alpha0 is undefined when f1 = {f1.value:.12g} (theta = 0)")
    cands = list(f1.candidates)
    if not cands:
        config = config or OptimizerConfig()
        res = minimize_self_fidelity(channel.stack, config, [f1.witness_input.amplitudes])
        cands = [(r.value, r.states[0]) for r in res.per_start]
    cut = f1.value + CLUSTER_VALUE_TOL
    reps: list = []
    for value, psi in sorted(cands, key=lambda t: t[0]):
        if value > cut:
            break
        if all(ray_distance(psi, r) >= CLUSTER_RAY_TOL for r in reps):
            reps.append(psi)
    if not reps:
        reps = [f1.witness_input.amplitudes]

    best = None
    for b in reps:
        basis = output_support(channel, b)
        resid = b - basis @ (basis.conj().T @ b)
        norm = float(np.linalg.norm(resid))
        if best is None or norm > best[0]:
            best = (norm, b, resid)
    norm, b, resid = best
    cos_a0 = min(norm, 1.0)
    return Alpha0Result(
        cos_alpha0=cos_a0,
        alpha0=float(np.arccos(cos_a0)),
        witness_b=PureState(b),
        witness_b_prime=PureState(resid / norm),
        minimizer_cluster_count=len(reps),
    )


def lemma2_witness(channel: KrausChannel, b, b_prime, alpha: float) -> PureState:
    """State ``c`` at angle ``alpha`` from ``b`` in the plane of ``b`` and ``b'``.

    With ``cos(a0) = |<b|b'>|`` and ``b'`` orthogonal to ``supp E(b)``,
    ``c = x b + y b'`` where ``y = sin(alpha)/sin(a0)`` and
    ``x = sin(a0 - alpha)/sin(a0)``. Then ``|<b|c>| = cos(alpha)`` and
    ``F(E(b), c) = |x| F(E(b), b)``.
    """
    if not 0.0 <= alpha <= np.pi / 2 + 1e-12:
        raise DomainError(f"angle {alpha} outside [0, pi/2]")
    bv, bp = _vec(b), _vec(b_prime)
    ov = np.vdot(bv, bp)
    cos_a0 = min(abs(ov), 1.0)
    if cos_a0 >= 1.0 - 1e-12:
        raise DegenerateGeometryError("b' is parallel to b, so there is no direction to rotate into")
    # align the phase of b' so that <b|b'> is real and nonnegative
    if abs(ov) > 0:
        bp = bp * (abs(ov) / ov)
    a0 = np.arccos(cos_a0)
    y = np.sin(alpha) / np.sin(a0)
    x = np.sin(a0 - alpha) / np.sin(a0)
    c = x * bv + y * bp
    return PureState(c / np.linalg.norm(c))


# ==================================================================================================
# Channel pairs
# ==================================================================================================


def q_max_fidelity(
    ch0: KrausChannel,
    ch1: KrausChannel,
    q: float,
    config: Optional[OptimizerConfig] = None,
) -> FidelityResult:
    """``min F(E0(psi0), E1(psi1))`` over pure pairs with ``|<psi0|psi1>| = q``."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"overlap {q} outside [0, 1]")
    if ch0.dim != ch1.dim:
        raise ShapeError(f"channels of dimension {ch0.dim} and {ch1.dim}")
    config = config or OptimizerConfig()
    ch0.require_valid()
    ch1.require_valid()
    res = minimize_pair_fidelity(ch0.stack, ch1.stack, q, config)
    if res.converged_starts == 0:
        raise OptimizerError("no local search converged", res.best.value)
    psi0, psi1 = res.best.states
    q0 = span_basis((ch0.stack @ psi0).T)
    q1 = span_basis((ch1.stack @ psi1).T)
    u, _, _ = np.linalg.svd(q0.conj().T @ q1)
    return FidelityResult.from_value(
        res.best.value,
        (PureState(psi0), PureState(psi1)),
        PureState(q0 @ u[:, 0]),
        starts=len(res.per_start),
        converged_starts=res.converged_starts,
        best_gradient_norm=res.gradient_norm,
    )
