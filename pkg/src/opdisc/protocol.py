"""Synthesis of sequential discrimination protocols.

A plan alternates known intermediate maps with queries to the unknown
channel. Under each hypothesis the state before every query is tracked,
and the last query leaves the two hypotheses with orthogonal supports, so
a single projective measurement onto ``final_measurement_vector`` decides.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .bounds import CEIL_TOL, SINGLE_QUERY_TOL
from .core import (
    DensityOperator,
    KrausChannel,
    PureState,
    apply_kraus,
    choi_matrix,
    completeness_residual,
    output_support,
    support_projector,
    trace_distance,
)
from .errors import InfeasibleTransformError, NumericalStallError, SynthesisError
from .fidelity import Alpha0Result, FidelityResult, lemma2_witness, state_output_fidelity
from .search import OptimizerConfig, outputs, search_collinear

FEASIBILITY_TOL = 1e-9
ACTION_TOL = 1e-8
#: A source vector closer than this to the source support counts as lying inside it.
INSIDE_TOL = 1e-7
ORTHOGONALITY_TOL = 1e-7
COLLINEAR_TOL = 1e-8
MAX_ROUNDS = 10_000


# ==================================================================================================
# Explicit CPTP maps between state pairs
# ==================================================================================================


@dataclass(frozen=True)
class TransformCheck:
    action_error_a: float
    action_error_b: float
    completeness_residual: float
    choi_min_eigenvalue: float

    @property
    def ok(self) -> bool:
        return (
            self.action_error_a <= ACTION_TOL
            and self.action_error_b <= ACTION_TOL
            and self.completeness_residual <= 1e-9
            and self.choi_min_eigenvalue >= -1e-9
        )


@dataclass(frozen=True, eq=False)
class StatePairTransform:
    """A channel sending ``source_a`` to ``|target_a>`` and ``|source_b>`` to ``|target_b>``."""

    kraus: Tuple[np.ndarray, ...]
    source_a: DensityOperator
    source_b: PureState
    target_a: PureState
    target_b: PureState

    @property
    def stack(self) -> np.ndarray:
        return np.stack(self.kraus)

    def channel(self) -> KrausChannel:
        return KrausChannel(self.kraus)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return apply_kraus(self.stack, rho)

    def check(self) -> TransformCheck:
        ta = self.target_a.density().matrix
        tb = self.target_b.density().matrix
        out_a = self.apply(self.source_a.matrix)
        out_b = self.apply(self.source_b.density().matrix)
        return TransformCheck(
            action_error_a=trace_distance(out_a, ta),
            action_error_b=trace_distance(out_b, tb),
            completeness_residual=completeness_residual(self.kraus),
            choi_min_eigenvalue=float(np.linalg.eigvalsh(choi_matrix(self.kraus))[0]),
        )


def _complement(basis: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the columns of ``basis``."""
    if basis.shape[1] == 0:
        return np.eye(dim, dtype=complex)
    u, s, _ = np.linalg.svd(basis, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * s[0]))
    return u[:, rank:]


def _unitary_between(src0, src1, dst0, dst1) -> np.ndarray:
    """Unitary with ``U src0 = dst0`` and ``U src1`` proportional to ``dst1``; the overlaps must agree in modulus."""
    d = src0.size
    ov_s = np.vdot(src0, src1)
    ov_t = np.vdot(dst0, dst1)
    if abs(ov_t) > 1e-15 and abs(ov_s) > 1e-15:
        dst1 = dst1 * (ov_s / abs(ov_s)) * (abs(ov_t) / ov_t)
    perp_s = src1 - np.vdot(src0, src1) * src0
    perp_t = dst1 - np.vdot(dst0, dst1) * dst0
    ns, nt = np.linalg.norm(perp_s), np.linalg.norm(perp_t)
    cols_s, cols_t = [src0], [dst0]
    if ns > 1e-12 and nt > 1e-12:
        cols_s.append(perp_s / ns)
        cols_t.append(perp_t / nt)
    s = np.column_stack(cols_s)
    t = np.column_stack(cols_t)
    s = np.column_stack([s, _complement(s, d)])
    t = np.column_stack([t, _complement(t, d)])
    return t @ s.conj().T


def pair_transform(
    source_a: DensityOperator,
    source_b: PureState,
    target_a: PureState,
    target_b: PureState,
) -> StatePairTransform:
    """Build a CPTP map with ``source_a -> |target_a>`` and ``|source_b> -> |target_b>``.

    Such a map exists when ``F(source_a, source_b) <= |<target_a|target_b>|``.
    The Kraus operators come from the biorthogonal dual of the basis
    ``{u_1..u_r, source_b}`` of the joint span, with ``u_i`` spanning the
    support of ``source_a``. The orthogonal complement of the joint span is
    sent to ``target_a``. When ``source_a`` is pure and the two overlaps
    agree, a single unitary does the job and is returned instead.

    :raises InfeasibleTransformError: if the fidelity condition fails, or
        ``source_b`` lies in the support of ``source_a`` while the targets differ.
    """
    d = source_a.dim
    if not source_b.dim == target_a.dim == target_b.dim == d:
        raise InfeasibleTransformError("source and target states must share one dimension")
    ta, tb, b = target_a.amplitudes, target_b.amplitudes, source_b.amplitudes
    u = support_projector(source_a).basis
    coeffs = u.conj().T @ b
    fid = float(np.linalg.norm(coeffs))
    target_ov = np.vdot(ta, tb)
    if fid > abs(target_ov) + FEASIBILITY_TOL:
        raise InfeasibleTransformError(
            f"source fidelity {fid:.12g} exceeds target overlap {abs(target_ov):.12g}"
        )

    def done(kraus) -> StatePairTransform:
        kraus = tuple(k for k in kraus if np.linalg.norm(k) > 1e-14)
        tr = StatePairTransform(kraus, source_a, source_b, target_a, target_b)
        chk = tr.check()
        if not chk.ok:
            raise InfeasibleTransformError(f"construction is numerically unsound here: {chk}")
        return tr

    resid = float(np.linalg.norm(b - u @ coeffs))
    if resid <= INSIDE_TOL:
        # sine of the angle between the targets, without the cancellation in sqrt(1 - |ov|^2)
        if np.linalg.norm(tb - target_ov * ta) > ACTION_TOL:
            raise InfeasibleTransformError("source_b lies in the support of source_a but the targets differ")
        return done([np.outer(ta, e.conj()) for e in np.eye(d, dtype=complex)])

    if u.shape[1] == 1 and abs(fid - abs(target_ov)) <= FEASIBILITY_TOL:
        return done([_unitary_between(u[:, 0], b, ta, tb)])

    r = u.shape[1]
    basis = np.column_stack([u, b])
    duals = basis @ np.linalg.inv(basis.conj().T @ basis)
    if abs(target_ov) <= FEASIBILITY_TOL:
        c = np.zeros(r, dtype=complex)
    else:
        c = coeffs / target_ov
        norm = np.linalg.norm(c)
        if norm > 1.0:
            c = c / norm
    beta = np.append(c, np.sqrt(max(0.0, 1.0 - float(np.real(np.vdot(c, c))))))
    b_dual = duals[:, r]
    kraus = [np.outer(ta, duals[:, j].conj()) + beta[j] * np.outer(tb, b_dual.conj()) for j in range(r)]
    kraus.append(beta[r] * np.outer(tb, b_dual.conj()))
    kraus += [np.outer(ta, e.conj()) for e in _complement(basis, d).T]
    return done(kraus)


# ==================================================================================================
# Plans
# ==================================================================================================


@dataclass(frozen=True, eq=False)
class Round:
    """One query. ``pre_transform`` acts on the register first; the inputs are the
    register contents under each hypothesis just before the query."""

    index: int
    pre_transform: Optional[StatePairTransform]
    input_if_E: PureState
    input_if_I: PureState
    predicted_overlap_after: float


@dataclass(frozen=True, eq=False)
class ProtocolPlan:
    channel: KrausChannel
    rounds: Tuple[Round, ...]
    final_measurement_vector: PureState
    claimed_queries: int

    def __post_init__(self):
        if not self.rounds:
            raise SynthesisError("a plan needs at least one round")
        if self.claimed_queries != len(self.rounds):
            raise SynthesisError(f"plan claims {self.claimed_queries} queries but has {len(self.rounds)} rounds")

    @property
    def initial_state(self) -> PureState:
        return self.rounds[0].input_if_I

    def overlap_schedule(self) -> List[float]:
        return [float(r.predicted_overlap_after) for r in self.rounds]

    def terminal_leak(self) -> float:
        """``||P b'||`` with ``P`` the projector onto the support of the channel branch's final output."""
        basis = output_support(self.channel, self.rounds[-1].input_if_E)
        return float(np.linalg.norm(basis.conj().T @ self.final_measurement_vector.amplitudes))


def _finish(channel: KrausChannel, rounds: List[Round], final: PureState) -> ProtocolPlan:
    plan = ProtocolPlan(channel, tuple(rounds), final, len(rounds))
    leak = plan.terminal_leak()
    if leak > ORTHOGONALITY_TOL:
        raise SynthesisError(f"final measurement vector overlaps the channel branch output ({leak:.3g})")
    return plan


def _transform(source_a, source_b, target_a, target_b) -> StatePairTransform:
    try:
        return pair_transform(source_a, source_b, target_a, target_b)
    except InfeasibleTransformError as exc:
        raise SynthesisError(f"intermediate map does not exist: {exc}") from exc


def collinear_input_search(
    channel: KrausChannel,
    config: Optional[OptimizerConfig] = None,
) -> Optional[Tuple[PureState, PureState, float]]:
    """Find ``b`` whose Kraus images are all parallel to one vector ``c``, so ``E(b)`` is pure.

    Returns ``(b, c, |<c|b>|)`` for the qualifying input with the smallest
    overlap, or ``None`` when the second singular value of the image matrix
    never drops to ``1e-8``.
    """
    config = config or OptimizerConfig()
    channel.require_valid()
    best = None
    for _, psi in search_collinear(channel.stack, config):
        u, s, _ = np.linalg.svd(outputs(channel.stack, psi), full_matrices=False)
        if s.size > 1 and s[1] > COLLINEAR_TOL:
            continue
        c = u[:, 0]
        ov = float(abs(np.vdot(c, psi)))
        if best is None or ov < best[2]:
            best = (PureState(psi), PureState(c), ov)
    return best


def _output_direction(channel: KrausChannel, b: np.ndarray) -> np.ndarray:
    u, s, _ = np.linalg.svd(outputs(channel.stack, b), full_matrices=False)
    if s.size > 1 and s[1] > 1e-5 * s[0]:
        raise SynthesisError("the channel output on the minimizer is not pure")
    return u[:, 0]


def plan_2d(
    channel: KrausChannel,
    f1: FidelityResult,
    config: Optional[OptimizerConfig] = None,
) -> ProtocolPlan:
    """Optimal qubit protocol: every query uses the minimizer ``b`` on the channel branch.

    With ``E(b) = |c>`` and ``c = cos(t) b + sin(t) b_perp``, the identity
    branch is rotated to ``b_k = cos(k t) b - sin(k t) b_perp`` between
    queries, so the overlap after query ``k + 1`` is ``cos((k + 1) t)``.
    Once ``(k + 1) t`` reaches ``pi/2`` the last target is
    ``sin(t) b - cos(t) b_perp``, which is orthogonal to ``c``.
    """
    if channel.dim != 2:
        raise SynthesisError(f"the qubit scheme needs dimension 2, got {channel.dim}")
    if not f1.distinguishable:
        raise SynthesisError("f1 = 1: the channel cannot be told apart from the identity")
    b = f1.witness_input.amplitudes
    theta = f1.theta
    b_state = PureState(b)
    if f1.value <= SINGLE_QUERY_TOL:
        return _finish(channel, [Round(1, None, b_state, b_state, f1.value)], b_state)

    c = _output_direction(channel, b)
    ov = np.vdot(b, c)
    c = c * (abs(ov) / ov)
    perp = c - np.vdot(b, c) * b
    perp = perp / np.linalg.norm(perp)
    c_rho = DensityOperator.from_pure(c)

    rounds = [Round(1, None, b_state, b_state, abs(np.vdot(c, b)))]
    prev = b
    k = 1
    while True:
        if (k + 1) * theta >= math.pi / 2 - CEIL_TOL:
            target = math.sin(theta) * b - math.cos(theta) * perp
            final = True
        else:
            target = math.cos(k * theta) * b - math.sin(k * theta) * perp
            final = False
        target_state = PureState(target)
        tr = _transform(c_rho, PureState(prev), b_state, target_state)
        rounds.append(Round(k + 1, tr, b_state, target_state, abs(np.vdot(c, target))))
        if final:
            return _finish(channel, rounds, target_state)
        prev = target
        k += 1
        if k > MAX_ROUNDS:
            raise NumericalStallError("qubit scheme did not terminate")


def plan_general(
    channel: KrausChannel,
    f1: FidelityResult,
    a0: Optional[Alpha0Result],
    config: Optional[OptimizerConfig] = None,
) -> ProtocolPlan:
    """Protocol for any dimension that shrinks the fidelity between branches query by query.

    The channel branch always receives the minimizer ``b``. While the current
    fidelity ``q`` exceeds ``cos(alpha0)``, the identity branch is moved to
    the state at angle ``arccos q`` from ``b`` towards ``b'`` and queried
    again. Once ``q <= cos(alpha0)`` it is moved to ``b'`` itself, which is
    orthogonal to ``supp E(b)``, and one last query separates the branches.
    """
    if not f1.distinguishable:
        raise SynthesisError("f1 = 1: the channel cannot be told apart from the identity")
    if f1.value <= SINGLE_QUERY_TOL:
        b_state = f1.witness_input
        return _finish(channel, [Round(1, None, b_state, b_state, f1.value)], b_state)
    if a0 is None:
        raise SynthesisError("alpha0 is required when f1 > 0")
    b_state, bp_state = a0.witness_b, a0.witness_b_prime
    b = b_state.amplitudes
    cos_a0 = a0.cos_alpha0
    out_rho = DensityOperator(np.einsum("kij,j,kl->il", channel.stack, b, (channel.stack @ b).conj()))

    q = state_output_fidelity(channel, b, b)
    rounds = [Round(1, None, b_state, b_state, q)]
    prev = b_state
    while q > cos_a0 + FEASIBILITY_TOL:
        alpha = math.acos(min(q, 1.0))
        if alpha >= a0.alpha0:
            break
        target = lemma2_witness(channel, b_state, bp_state, alpha)
        tr = _transform(out_rho, prev, b_state, target)
        new_q = state_output_fidelity(channel, b, target)
        if new_q >= q:
            raise NumericalStallError(f"fidelity did not decrease ({q:.15g} -> {new_q:.15g})")
        rounds.append(Round(len(rounds) + 1, tr, b_state, target, new_q))
        prev, q = target, new_q
        if len(rounds) > MAX_ROUNDS:
            raise NumericalStallError("round limit reached")
    tr = _transform(out_rho, prev, b_state, bp_state)
    rounds.append(Round(len(rounds) + 1, tr, b_state, bp_state, state_output_fidelity(channel, b, bp_state)))
    return _finish(channel, rounds, bp_state)
