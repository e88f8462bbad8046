"""Multi-start minimization of output-support fidelities over pure inputs.

The quantity ``F(E(psi), psi) = || P_supp(E(psi)) psi ||`` is not continuous.
Wherever the vectors ``E_i psi`` span the whole space it equals 1, and the
interesting minima sit on the lower-dimensional set of inputs where the rank
of ``[E_1 psi, ..., E_m psi]`` drops. A plain local search started at random
sits on a flat plateau and never sees them.

The search therefore works stratum by stratum. For a target rank ``r`` it
minimizes the smooth surrogate

    || U_r^dagger psi ||^2  +  mu * sum_{j > r} sigma_j^2

where ``U_r`` holds the top ``r`` left singular vectors of the output matrix
and ``sigma_j`` its singular values, raising ``mu`` in stages. The end point
is snapped onto the rank-``r`` set and every candidate is scored with the
exact objective. Local searches use Powell's derivative-free method on the
real embedding ``psi = (x + i y) / ||x + i y||``; the phase and norm
redundancy of that embedding is harmless for Powell.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .core import span_basis

#: Penalty weights of the continuation, with (xtol, ftol) for every stage but the last.
PENALTY_SCHEDULE = (1.0, 1e3, 1e6)
_EARLY_TOLS = ((1e-3, 1e-6), (1e-5, 1e-8))
SNAP_ITERS = 200
#: A snapped point counts as on the stratum when sigma_{r+1} / sigma_1 is below this.
ON_STRATUM = 1e-12
_SNAP_DONE = 1e-15


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for the multi-start searches.

    Each start draws its initial point from a generator seeded with
    ``(seed, start_index)``, so results do not depend on ``threads``.
    """

    starts: int = 64
    max_iters: int = 500
    step_tol: float = 1e-10
    value_tol: float = 1e-9
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError("starts must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_tol <= 0 or self.value_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def start_rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, index])


@dataclass
class StartResult:
    value: float
    states: Tuple[np.ndarray, ...]
    converged: bool
    stratum: Tuple[int, ...]
    mu: float


@dataclass
class SearchResult:
    best: StartResult
    per_start: List[StartResult] = field(default_factory=list)
    gradient_norm: float = 0.0

    @property
    def converged_starts(self) -> int:
        return sum(r.converged for r in self.per_start)


# ==================================================================================================
# Small helpers
# ==================================================================================================


def to_complex(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    v = x[:n] + 1j * x[n:]
    norm = np.sqrt(x @ x)
    if norm < 1e-150:
        return np.full(n, 1 / np.sqrt(n), dtype=complex)
    return v / norm


def to_real(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v.real, v.imag])


def outputs(stack: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``d x m`` matrix of Kraus images ``E_i psi``."""
    return (stack @ psi).T


def exact_self_fidelity(stack: np.ndarray, psi: np.ndarray) -> float:
    """``|| P psi ||`` with ``P`` the projector onto ``span{E_i psi}``."""
    q = span_basis(outputs(stack, psi))
    return float(np.linalg.norm(q.conj().T @ psi))


def exact_pair_fidelity(stack0: np.ndarray, psi0: np.ndarray, stack1: np.ndarray, psi1: np.ndarray) -> float:
    q0 = span_basis(outputs(stack0, psi0))
    q1 = span_basis(outputs(stack1, psi1))
    return float(np.linalg.norm(q0.conj().T @ q1, 2))


def tail_ratio(stack: np.ndarray, psi: np.ndarray, rank: int) -> float:
    """``sigma_{rank+1} / sigma_1`` of the output matrix (0 if it has no such singular value)."""
    s = np.linalg.svd(outputs(stack, psi), compute_uv=False)
    if rank >= s.size or s[0] == 0.0:
        return 0.0
    return float(s[rank] / s[0])


def generic_rank(stack: np.ndarray, rng: np.random.Generator, probes: int = 6) -> int:
    """Largest numerical rank of ``[E_i psi]`` over a few random inputs."""
    d = stack.shape[1]
    return max(span_basis(outputs(stack, to_complex(rng.normal(size=2 * d)))).shape[1] for _ in range(probes))


def strata(stack: np.ndarray, rng: np.random.Generator) -> List[Tuple[int, bool]]:
    """Ranks worth searching, flagged with whether the rank is a constrained stratum.

    The generic rank is searched without penalty unless it fills the space,
    in which case the output support is everything and the fidelity is 1.
    """
    d = stack.shape[1]
    r_gen = generic_rank(stack, rng)
    out = [(r, True) for r in range(1, min(r_gen, d))]
    if r_gen < d:
        out.append((r_gen, False))
    return out


def _snap_step(stack: np.ndarray, psi: np.ndarray, rank: int) -> np.ndarray:
    d = stack.shape[1]
    _, _, vh = np.linalg.svd(outputs(stack, psi), full_matrices=True)
    # Kraus combinations that (nearly) annihilate psi
    a = np.einsum("ji,ikl->jkl", vh[rank:].conj(), stack).reshape(-1, d)
    ata = a.conj().T @ a
    lam = 1e-12 * max(np.linalg.norm(ata, 2), 1e-300)
    new = np.linalg.solve(ata + lam * np.eye(d), lam * psi)
    new = new / np.linalg.norm(new)
    ov = np.vdot(psi, new)
    return new * (np.conj(ov) / abs(ov)) if abs(ov) > 1e-300 else new


def snap_to_rank(stack: np.ndarray, psi: np.ndarray, rank: int) -> np.ndarray:
    """Move ``psi`` onto the set where ``[E_i psi]`` has rank at most ``rank``.

    Alternates between the trailing right singular vectors ``w`` of the
    output matrix and a proximal step towards the kernel of the operators
    ``sum_i w_i E_i``. The iteration converges linearly, so every third step
    tries an Aitken extrapolation and keeps it when the tail shrinks.
    """
    m, d, _ = stack.shape
    if rank >= min(m, d):
        return psi
    hist = [psi]
    tail = tail_ratio(stack, psi, rank)
    for it in range(SNAP_ITERS):
        if tail <= _SNAP_DONE:
            break
        psi = _snap_step(stack, psi, rank)
        tail = tail_ratio(stack, psi, rank)
        hist.append(psi)
        if len(hist) >= 3 and it % 3 == 2:
            d1 = hist[-1] - hist[-2]
            d0 = hist[-2] - hist[-3]
            rate = np.linalg.norm(d1) / max(np.linalg.norm(d0), 1e-300)
            if rate < 0.999:
                cand = hist[-1] + rate / (1 - rate) * d1
                cand = cand / np.linalg.norm(cand)
                cand_tail = tail_ratio(stack, cand, rank)
                if cand_tail < tail:
                    psi, tail = cand, cand_tail
                    hist = [psi]
    return psi


def _local(fun: Callable[[np.ndarray], float], x0: np.ndarray, xtol: float, ftol: float, max_iters: int):
    res = minimize(fun, x0, method="Powell", options={"maxiter": max_iters, "xtol": xtol, "ftol": ftol})
    return np.asarray(res.x, dtype=float), bool(res.success)


def _continuation(make_fun, x0: np.ndarray, constrained: bool, parts: int, config: OptimizerConfig, coarse=False):
    """Run the penalty schedule (or a single unpenalized stage) from ``x0``.

    ``coarse`` loosens an unpenalized stage. It is used when lower strata are
    searched separately: there the infimum of the generic stratum lies on
    its boundary, which Powell approaches only slowly.
    """
    x = x0
    ok = True
    if not constrained:
        xtol, ftol = _EARLY_TOLS[-1] if coarse else (config.step_tol, config.value_tol)
        x, ok = _local(make_fun(0.0), x, xtol, ftol, config.max_iters)
        return _rescale(x, parts), ok, 0.0
    last = len(PENALTY_SCHEDULE) - 1
    for k, mu in enumerate(PENALTY_SCHEDULE):
        xtol, ftol = (config.step_tol, config.value_tol) if k == last else _EARLY_TOLS[k]
        x, ok = _local(make_fun(mu), x, xtol, ftol, config.max_iters)
        x = _rescale(x, parts)
    return x, ok, PENALTY_SCHEDULE[-1]


def _rescale(x: np.ndarray, parts: int) -> np.ndarray:
    return np.concatenate([c / max(np.sqrt(c @ c), 1e-300) for c in np.split(x, parts)])


def fd_gradient_norm(fun: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-7) -> float:
    """Central-difference gradient norm on the sphere, with the norm and phase directions removed."""
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    n = x.size // 2
    radial = x / np.linalg.norm(x)
    phase = np.concatenate([-x[n:], x[:n]])
    phase = phase / np.linalg.norm(phase)
    g = g - np.dot(g, radial) * radial - np.dot(g, phase) * phase
    return float(np.linalg.norm(g))


def _run_starts(task: Callable[[int], StartResult], count: int, threads: int) -> List[StartResult]:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(task, range(count)))
    return [task(i) for i in range(count)]


# ==================================================================================================
# Single-state problem: min_psi F(E(psi), psi)
# ==================================================================================================


def self_surrogate(stack: np.ndarray, rank: int, mu: float) -> Callable[[np.ndarray], float]:
    def fun(x: np.ndarray) -> float:
        psi = to_complex(x)
        u, s, _ = np.linalg.svd(outputs(stack, psi), full_matrices=False)
        proj = u[:, :rank].conj().T @ psi
        return float(np.real(np.vdot(proj, proj)) + mu * np.sum(s[rank:] ** 2))

    return fun


def _stratum_candidates(stack: np.ndarray, psi: np.ndarray, rank: int, mu: float) -> List[Tuple[np.ndarray, int, float]]:
    """Points to score for one stratum search, as ``(psi, rank, mu)``.

    A constrained end point is snapped onto its stratum. An unconstrained
    one that drifted to the stratum's edge (numerical rank below ``rank``)
    is snapped onto the lower stratum it is touching.
    """
    if mu == 0.0:
        low = span_basis(outputs(stack, psi)).shape[1]
        if low >= rank or low == 0:
            return [(psi, rank, mu)]
        rank, mu = low, PENALTY_SCHEDULE[-1]
        snapped = snap_to_rank(stack, psi, rank)
        if tail_ratio(stack, snapped, rank) <= ON_STRATUM:
            return [(snapped, rank, mu)]
        return [(psi, rank, 0.0)]
    snapped = snap_to_rank(stack, psi, rank)
    if tail_ratio(stack, snapped, rank) <= ON_STRATUM:
        # near the stratum the rank cut can undercount and score slightly below the true value
        return [(snapped, rank, mu)]
    return [(psi, rank, mu), (snapped, rank, mu)]


def minimize_self_fidelity(
    stack: np.ndarray,
    config: OptimizerConfig,
    seed_states: Sequence[np.ndarray] = (),
) -> SearchResult:
    """Multi-start search for ``min_psi F(E(psi), psi)`` over unit vectors.

    ``seed_states`` replace the first random starting points; seeds beyond
    the start budget are scored as they are.
    """
    d = stack.shape[1]
    layers = strata(stack, np.random.default_rng([config.seed, 2**32 + 1]))
    seeds = [np.asarray(s, dtype=complex) / np.linalg.norm(s) for s in seed_states]

    def run(index: int) -> StartResult:
        rng = config.start_rng(index)
        start = seeds[index] if index < len(seeds) else to_complex(rng.normal(size=2 * d))
        best = StartResult(exact_self_fidelity(stack, start), (start,), True, (d,), 0.0)
        converged = not layers
        for rank, constrained in layers:
            x, ok, mu = _continuation(
                lambda m: self_surrogate(stack, rank, m), to_real(start), constrained, 1, config, coarse=rank > 1
            )
            converged = converged or ok
            for cand, r, m in _stratum_candidates(stack, to_complex(x), rank, mu):
                val = exact_self_fidelity(stack, cand)
                if val < best.value:
                    best = StartResult(val, (cand,), ok, (r,), m)
        best.converged = converged
        return best

    pool = _run_starts(run, config.starts, config.threads)
    pool += [StartResult(exact_self_fidelity(stack, s), (s,), True, (d,), 0.0) for s in seeds[config.starts:]]
    winner = min(pool, key=lambda r: r.value)
    grad = fd_gradient_norm(stratum_objective(stack, winner), to_real(winner.states[0]))
    return SearchResult(best=winner, per_start=pool, gradient_norm=grad)


def stratum_objective(stack: np.ndarray, result: StartResult) -> Callable[[np.ndarray], float]:
    """Exact objective restricted to the stratum ``result`` came from.

    On a constrained stratum every probe is snapped back onto it first, so
    finite differences measure the slope along the stratum rather than the
    jump off it.
    """
    rank = result.stratum[0]
    if result.mu == 0.0:
        # within a stratum the support moves smoothly, unlike the rank cut near its edge
        smooth = self_surrogate(stack, rank, 0.0)
        return lambda x: np.sqrt(max(smooth(x), 0.0))
    return lambda x: exact_self_fidelity(stack, snap_to_rank(stack, to_complex(x), rank))


def search_collinear(stack: np.ndarray, config: OptimizerConfig) -> List[Tuple[float, np.ndarray]]:
    """Inputs at which the Kraus images are (nearly) collinear, one per start.

    Each entry is ``(sigma_2 / sigma_1, psi)``, found by driving the rank-1
    penalty to zero while keeping ``psi`` as far from its image as possible.
    """
    m, d, _ = stack.shape
    if m == 1 or min(m, d) == 1:
        res = minimize_self_fidelity(stack, config)
        return [(0.0, r.states[0]) for r in res.per_start]

    def run(index: int) -> StartResult:
        x0 = config.start_rng(index).normal(size=2 * d)
        x, ok, mu = _continuation(lambda mu_: self_surrogate(stack, 1, mu_), x0, True, 1, config)
        psi = snap_to_rank(stack, to_complex(x), 1)
        return StartResult(tail_ratio(stack, psi, 1), (psi,), ok, (1,), mu)

    return [(r.value, r.states[0]) for r in _run_starts(run, config.starts, config.threads)]


# ==================================================================================================
# Pair problem: min F(E0(psi0), E1(psi1)) subject to |<psi0|psi1>| = q
# ==================================================================================================


def pair_states(x: np.ndarray, q: float) -> Tuple[np.ndarray, np.ndarray]:
    """Map ``4d`` reals to unit vectors ``psi0, psi1`` with ``|<psi0|psi1>| = q``.

    ``psi1 = q psi0 + sqrt(1 - q^2) chi`` with ``chi`` the normalized part of
    the second block orthogonal to ``psi0``.
    """
    n = x.size // 2
    psi0 = to_complex(x[:n])
    chi = to_complex(x[n:])
    chi = chi - np.vdot(psi0, chi) * psi0
    norm = np.linalg.norm(chi)
    if norm < 1e-12:
        # any direction orthogonal to psi0 will do
        chi = np.linalg.svd(psi0.reshape(1, -1))[2][-1].conj()
        chi = chi - np.vdot(psi0, chi) * psi0
        norm = np.linalg.norm(chi)
    psi1 = q * psi0 + np.sqrt(max(0.0, 1.0 - q * q)) * chi / norm
    return psi0, psi1 / np.linalg.norm(psi1)


def pair_surrogate(stack0, stack1, q: float, r0: int, r1: int, mu: float) -> Callable[[np.ndarray], float]:
    def fun(x: np.ndarray) -> float:
        psi0, psi1 = pair_states(x, q)
        u0, s0, _ = np.linalg.svd(outputs(stack0, psi0), full_matrices=False)
        u1, s1, _ = np.linalg.svd(outputs(stack1, psi1), full_matrices=False)
        val = np.linalg.norm(u0[:, :r0].conj().T @ u1[:, :r1], 2) ** 2
        return float(val + mu * (np.sum(s0[r0:] ** 2) + np.sum(s1[r1:] ** 2)))

    return fun


def _rebuild_partner(anchor: np.ndarray, partner: np.ndarray, q: float) -> np.ndarray:
    """Nearest vector to ``partner`` whose overlap with ``anchor`` has modulus ``q``."""
    ov = np.vdot(anchor, partner)
    chi = partner - ov * anchor
    norm = np.linalg.norm(chi)
    phase = ov / abs(ov) if abs(ov) > 1e-15 else 1.0
    if norm < 1e-12:
        if q >= 1.0 - 1e-15:
            return anchor * phase
        return partner
    out = q * phase * anchor + np.sqrt(max(0.0, 1 - q * q)) * chi / norm
    return out / np.linalg.norm(out)


def minimize_pair_fidelity(stack0: np.ndarray, stack1: np.ndarray, q: float, config: OptimizerConfig) -> SearchResult:
    """Multi-start search for ``min F(E0(psi0), E1(psi1))`` over pairs with overlap modulus ``q``."""
    d = stack0.shape[1]
    rng = np.random.default_rng([config.seed, 2**32 + 2])
    layers0 = strata(stack0, rng)
    layers1 = strata(stack1, rng)
    # two supports whose dimensions exceed d always intersect, giving fidelity 1
    combos = [(a, b) for a in layers0 for b in layers1 if a[0] + b[0] <= d]

    def run(index: int) -> StartResult:
        x0 = config.start_rng(index).normal(size=4 * d)
        psi0, psi1 = pair_states(x0, q)
        best = StartResult(exact_pair_fidelity(stack0, psi0, stack1, psi1), (psi0, psi1), True, (d, d), 0.0)
        converged = not combos
        for (r0, c0), (r1, c1) in combos:
            x, ok, mu = _continuation(
                lambda m: pair_surrogate(stack0, stack1, q, r0, r1, m), x0, c0 or c1, 2, config,
                coarse=r0 > 1 or r1 > 1,
            )
            converged = converged or ok
            a, b = pair_states(x, q)
            candidates = []
            if c0:
                a = snap_to_rank(stack0, a, r0)
                b = _rebuild_partner(a, b, q)
            if c1:
                b = snap_to_rank(stack1, b, r1)
                if not c0:
                    a = _rebuild_partner(b, a, q)
            on0 = not c0 or tail_ratio(stack0, a, r0) <= ON_STRATUM
            on1 = not c1 or tail_ratio(stack1, b, r1) <= ON_STRATUM
            if abs(abs(np.vdot(a, b)) - q) <= 1e-9:
                candidates.append((a, b))
            if not (on0 and on1 and candidates):
                candidates.append(pair_states(x, q))
            for u, v in candidates:
                val = exact_pair_fidelity(stack0, u, stack1, v)
                if val < best.value:
                    best = StartResult(val, (u, v), ok, (r0, r1), mu)
        best.converged = converged
        return best

    results = _run_starts(run, config.starts, config.threads)
    winner = min(results, key=lambda r: r.value)
    return SearchResult(best=winner, per_start=results, gradient_norm=0.0)
