"""Execution of plans and numerical checks of the fidelity bounds."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from .bounds import lemma2_bound, thm4_lower
from .core import DensityOperator, KrausChannel, apply_kraus
from .errors import DomainError
from .fidelity import Alpha0Result, FidelityResult, lemma2_witness, max_fidelity_states, state_output_fidelity
from .protocol import ProtocolPlan

THM4_TOL = 1e-6
LEMMA2_TOL = 1e-9


class Hypothesis(enum.Enum):
    IDENTITY = "Identity"
    CHANNEL = "Channel"


@dataclass(frozen=True)
class TraceRecord:
    round_overlaps: List[float]
    terminal_error_probability: float
    hypothesis: Hypothesis


@dataclass(frozen=True)
class SimulationReport:
    shots: int
    wrong_guesses: int
    empirical_error: float
    max_terminal_leak: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "shots": self.shots,
            "wrong_guesses": self.wrong_guesses,
            "empirical_error": self.empirical_error,
            "max_terminal_leak": self.max_terminal_leak,
            "seed": self.seed,
        }


def _query(plan: ProtocolPlan, hypothesis: Hypothesis, rho: np.ndarray) -> np.ndarray:
    if hypothesis is Hypothesis.IDENTITY:
        return rho
    return apply_kraus(plan.channel.stack, rho)


def _other(h: Hypothesis) -> Hypothesis:
    return Hypothesis.CHANNEL if h is Hypothesis.IDENTITY else Hypothesis.IDENTITY


def run_once(plan: ProtocolPlan, hypothesis: Hypothesis) -> TraceRecord:
    """Evolve the register exactly under ``hypothesis``.

    After each query the state is compared, by maximal fidelity, with what
    the plan expects the other hypothesis to produce from its own input.
    """
    hypothesis = Hypothesis(hypothesis)
    v = plan.initial_state.amplitudes
    rho = np.outer(v, v.conj())
    overlaps = []
    for rnd in plan.rounds:
        if rnd.pre_transform is not None:
            rho = rnd.pre_transform.apply(rho)
        rho = _query(plan, hypothesis, rho)
        ref_in = rnd.input_if_I if hypothesis is Hypothesis.CHANNEL else rnd.input_if_E
        w = ref_in.amplitudes
        ref = _query(plan, _other(hypothesis), np.outer(w, w.conj()))
        fid = max_fidelity_states(DensityOperator(rho, check=False), DensityOperator(ref, check=False))
        overlaps.append(fid.value)
    bp = plan.final_measurement_vector.amplitudes
    p_bp = min(max(float(np.real(np.vdot(bp, rho @ bp))), 0.0), 1.0)
    err = p_bp if hypothesis is Hypothesis.CHANNEL else 1.0 - p_bp
    return TraceRecord(overlaps, err, hypothesis)


def _sample_kraus(stack: np.ndarray, psi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    branches = stack @ psi
    probs = np.real(np.einsum("ki,ki->k", branches.conj(), branches))
    probs = np.clip(probs, 0.0, None)
    k = rng.choice(len(probs), p=probs / probs.sum())
    return branches[k] / math.sqrt(probs[k])


def monte_carlo(plan: ProtocolPlan, shots: int, seed: int = 0) -> SimulationReport:
    """Play the protocol ``shots`` times against a uniformly chosen hypothesis.

    Each shot follows one quantum trajectory: a Kraus branch is drawn at
    every map and the final two-outcome measurement is sampled. Outcome
    ``b'`` means "identity". Shot ``i`` uses the generator seeded with
    ``(seed, i)``.
    """
    if shots < 1:
        raise DomainError("shots must be at least 1")
    pre = [None if r.pre_transform is None else r.pre_transform.stack for r in plan.rounds]
    stack = plan.channel.stack
    bp = plan.final_measurement_vector.amplitudes
    start = plan.initial_state.amplitudes
    wrong = 0
    leak = 0.0
    for shot in range(shots):
        rng = np.random.default_rng([seed, shot])
        truth = Hypothesis.CHANNEL if rng.random() < 0.5 else Hypothesis.IDENTITY
        psi = start
        for t in pre:
            if t is not None:
                psi = _sample_kraus(t, psi, rng)
            if truth is Hypothesis.CHANNEL:
                psi = _sample_kraus(stack, psi, rng)
        p_bp = min(abs(np.vdot(bp, psi)) ** 2, 1.0)
        forbidden = p_bp if truth is Hypothesis.CHANNEL else 1.0 - p_bp
        leak = max(leak, forbidden)
        guess = Hypothesis.IDENTITY if rng.random() < p_bp else Hypothesis.CHANNEL
        wrong += guess is not truth
    return SimulationReport(shots, wrong, wrong / shots, float(leak), seed)


# ==================================================================================================
# Bound verification
# ==================================================================================================


@dataclass(frozen=True)
class BoundRow:
    q: float
    bound: float
    min_sampled: float
    violated: bool


@dataclass(frozen=True)
class VerificationReport:
    kind: str
    rows: List[BoundRow]
    note: str = ""

    @property
    def violations(self) -> int:
        return sum(r.violated for r in self.rows)

    def to_csv(self) -> str:
        """Comma-separated table with 10 significant digits; the first and third columns are named per check."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.kind == "lemma2":
            w.writerow(["alpha", "bound", "witness_fidelity", "violated"])
        else:
            w.writerow(["q", "bound", "min_sampled", "violated"])
        for r in self.rows:
            w.writerow([f"{r.q:.10g}", f"{r.bound:.10g}", f"{r.min_sampled:.10g}", str(r.violated).lower()])
        return buf.getvalue()


def sample_pairs(dim: int, q: float, count: int, rng: np.random.Generator):
    """``count`` random pairs ``(psi0, psi1)`` with ``|<psi0|psi1>| = q``, as two ``(count, dim)`` arrays.

    ``psi0`` is uniform on the sphere and ``psi1 = q e^{i phi} psi0 + sqrt(1 - q^2) chi``
    with ``chi`` uniform on the sphere orthogonal to ``psi0`` and ``phi`` uniform.
    """
    def gauss():
        return rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))

    psi0 = gauss()
    psi0 /= np.linalg.norm(psi0, axis=1, keepdims=True)
    chi = gauss()
    chi -= np.einsum("ni,ni->n", psi0.conj(), chi)[:, None] * psi0
    chi /= np.linalg.norm(chi, axis=1, keepdims=True)
    phase = np.exp(2j * np.pi * rng.random(count))[:, None]
    psi1 = q * phase * psi0 + math.sqrt(max(0.0, 1.0 - q * q)) * chi
    return psi0, psi1


def _batched_supports(stack: np.ndarray, states: np.ndarray, rel_tol: float = 1e-10):
    """Left singular vectors and a keep-mask of the output matrices ``[E_i psi]`` for a batch of inputs."""
    mats = np.einsum("kij,nj->nik", stack, states)
    u, s, _ = np.linalg.svd(mats, full_matrices=False)
    keep = s > math.sqrt(rel_tol) * s[:, :1]
    return u, keep


def batched_pair_fidelity(stack0: np.ndarray, psi0: np.ndarray, stack1: np.ndarray, psi1: np.ndarray) -> np.ndarray:
    u0, k0 = _batched_supports(stack0, psi0)
    u1, k1 = _batched_supports(stack1, psi1)
    u0 = u0 * k0[:, None, :]
    u1 = u1 * k1[:, None, :]
    cross = np.einsum("nik,nil->nkl", u0.conj(), u1)
    return np.linalg.norm(cross, ord=2, axis=(1, 2))


def verify_thm4(
    ch0: KrausChannel,
    ch1: KrausChannel,
    theta0: float,
    theta1: float,
    q_grid: Iterable[float],
    samples_per_q: int = 500,
    seed: int = 0,
    probes: Sequence = (),
) -> VerificationReport:
    """Sample pairs at each overlap and compare the smallest output fidelity with the lower bound.

    Sampling can only expose a violation, never prove the bound. The angles
    must be exact: optimized ones are underestimates and would make the
    bound look stronger than it is. ``probes`` are extra fixed pairs
    ``(psi0, psi1)``; each joins the row whose ``q`` matches its overlap
    within ``1e-12``, which lets a known minimizer be included.
    """
    if ch0.dim != ch1.dim:
        raise DomainError("channels must share a dimension")
    d = ch0.dim
    rows = []
    for i, q in enumerate(q_grid):
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"overlap {q} outside [0, 1]")
        rng = np.random.default_rng([seed, i])
        psi0, psi1 = sample_pairs(d, q, samples_per_q, rng)
        fids = batched_pair_fidelity(ch0.stack, psi0, ch1.stack, psi1)
        low = float(np.min(fids)) if fids.size else 1.0
        for p0, p1 in probes:
            p0, p1 = np.asarray(p0, dtype=complex), np.asarray(p1, dtype=complex)
            if abs(abs(np.vdot(p0, p1)) - q) <= 1e-12:
                low = min(low, float(batched_pair_fidelity(ch0.stack, p0[None], ch1.stack, p1[None])[0]))
        bound = thm4_lower(q, theta0, theta1)
        rows.append(BoundRow(float(q), bound, low, low < bound - THM4_TOL))
    return VerificationReport("thm4", rows, note="sampling can falsify the bound but not prove it")


def verify_lemma2(
    channel: KrausChannel,
    f1: FidelityResult,
    a0: Alpha0Result,
    alpha_grid: Iterable[float],
) -> VerificationReport:
    """Build the witness for each angle and check its output fidelity against the bound. No sampling."""
    b = a0.witness_b.amplitudes
    theta = math.acos(min(1.0, state_output_fidelity(channel, b, b)))
    rows = []
    for alpha in alpha_grid:
        c = lemma2_witness(channel, a0.witness_b, a0.witness_b_prime, alpha)
        value = state_output_fidelity(channel, b, c)
        bound = lemma2_bound(theta, a0.alpha0, alpha)
        rows.append(BoundRow(float(alpha), bound, value, value > bound + LEMMA2_TOL))
    return VerificationReport("lemma2", rows)
