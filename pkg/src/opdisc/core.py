"""States, Kraus channels and the linear algebra underneath them.

Conventions
-----------
* States are column vectors; density operators are ``d x d`` complex arrays.
* A channel is a list of ``m`` Kraus matrices ``E_i`` acting as
  ``rho -> sum_i E_i rho E_i^dagger``. Only square channels (same input and
  output dimension) are supported because protocols feed outputs back in.
* Ancilla extensions are ordered ``R (x) Q``: the ancilla is the slow index.
* ``vec`` is column stacking, so the Choi matrix is
  ``sum_i vec(E_i) vec(E_i)^dagger``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidChannelError, NotUnitaryError, ShapeError

#: Eigenvalues of a density operator below this fraction of the largest are dropped.
SUPPORT_REL_TOL = 1e-10
#: Completeness / Choi tolerance used to decide channel validity.
CHANNEL_TOL = 1e-9
STATE_TOL = 1e-10
GAUGE_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


# ==================================================================================================
# Domain types
# ==================================================================================================


@dataclass(frozen=True, eq=False)
class PureState:
    """A unit vector in ``C^d``, stored in a canonical gauge.

    The input is normalized and its global phase fixed so that the first
    amplitude with modulus above ``1e-12`` is real and nonnegative. Two
    vectors describing the same ray therefore give identical amplitudes.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.size == 0:
            raise ShapeError("a pure state needs at least one amplitude")
        if not np.all(np.isfinite(v)):
            raise DomainError("state amplitudes must be finite")
        norm = np.linalg.norm(v)
        if norm < 1e-300:
            raise DomainError("cannot normalize the zero vector")
        v = v / norm
        big = np.flatnonzero(np.abs(v) > GAUGE_TOL)
        phase = v[big[0]] / abs(v[big[0]])
        v = v / phase
        v[big[0]] = abs(v[big[0]])
        object.__setattr__(self, "amplitudes", _freeze(v))

    @classmethod
    def from_canonical(cls, amplitudes) -> "PureState":
        """Wrap amplitudes that are already normalized and gauge-fixed, without touching their bits.

        Deserialization uses this so that a saved state reloads identically.
        """
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        state = cls(v)
        if np.max(np.abs(state.amplitudes - v)) > 1e-12:
            raise DomainError("amplitudes are not a normalized, gauge-fixed state")
        object.__setattr__(state, "amplitudes", _freeze(v))
        return state

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes

    def density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "PureState") -> float:
        """Modulus of the inner product with ``other``."""
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)))

    def __repr__(self):
        return f"PureState({np.array2string(self.amplitudes, precision=6)})"


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, positive semidefinite, unit-trace matrix.

    The matrix is symmetrized on construction; the remaining invariants are
    checked at tolerance ``1e-10`` unless ``check=False``.
    """

    matrix: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ShapeError(f"density operator must be square, got shape {rho.shape}")
        if self.check:
            herm = np.max(np.abs(rho - rho.conj().T))
            if herm > STATE_TOL:
                raise DomainError(f"matrix is not Hermitian (deviation {herm:.3g})")
        rho = 0.5 * (rho + rho.conj().T)
        if self.check:
            tr = np.trace(rho).real
            if abs(tr - 1.0) > STATE_TOL:
                raise DomainError(f"trace {tr:.12g} differs from 1")
            lam = np.linalg.eigvalsh(rho)[0]
            if lam < -STATE_TOL:
                raise DomainError(f"matrix has negative eigenvalue {lam:.3g}")
        object.__setattr__(self, "matrix", _freeze(rho))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_pure(cls, state: PureState | np.ndarray) -> "DensityOperator":
        v = state.amplitudes if isinstance(state, PureState) else PureState(state).amplitudes
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)

    def expectation(self, state: PureState) -> float:
        """``<v| rho |v>`` for a pure state ``v``."""
        v = state.amplitudes
        return float(np.real(np.vdot(v, self.matrix @ v)))


@dataclass(frozen=True, eq=False)
class Projector:
    dim: int
    matrix: np.ndarray
    rank: int
    basis: np.ndarray = field(repr=False)  # d x rank orthonormal columns spanning the range

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.conj().T @ v)


@dataclass(frozen=True)
class ChannelValidity:
    completeness_residual: float
    choi_min_eigenvalue: float
    is_valid: bool


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A square quantum channel given by Kraus operators.

    Construction only checks shapes. Use :func:`validate_channel` or
    :meth:`require_valid` for the CPTP condition, so that malformed input
    can still be inspected and reported.
    """

    kraus: tuple
    name: Optional[str] = None

    def __post_init__(self):
        ops = _as_kraus_stack(self.kraus)
        d = ops.shape[1]
        if ops.shape[0] > d * d:
            raise ShapeError(f"{ops.shape[0]} Kraus operators exceed the maximum d^2 = {d * d}")
        object.__setattr__(self, "kraus", tuple(_freeze(k) for k in ops))
        object.__setattr__(self, "_stack", _freeze(ops))

    @property
    def stack(self) -> np.ndarray:
        """Kraus operators as one ``(m, d, d)`` array."""
        return self._stack

    @property
    def dim(self) -> int:
        return self._stack.shape[1]

    dim_in = dim
    dim_out = dim

    @property
    def num_kraus(self) -> int:
        return self._stack.shape[0]

    def validity(self) -> ChannelValidity:
        return validate_channel(self.kraus)

    def require_valid(self) -> "KrausChannel":
        v = self.validity()
        if not v.is_valid:
            raise InvalidChannelError(
                f"channel {self.name or ''} is not CPTP: completeness residual "
                f"{v.completeness_residual:.3g}, Choi minimum eigenvalue {v.choi_min_eigenvalue:.3g}"
            )
        return self

    def __call__(self, rho: DensityOperator) -> DensityOperator:
        return apply_channel(self, rho)


def _as_kraus_stack(kraus_list: Iterable) -> np.ndarray:
    mats = [np.asarray(k, dtype=complex) for k in kraus_list]
    if not mats:
        raise ShapeError("a channel needs at least one Kraus operator")
    shape = mats[0].shape
    for i, k in enumerate(mats):
        if k.ndim != 2:
            raise ShapeError(f"Kraus operator {i} is not a matrix (shape {k.shape})")
        if k.shape != shape:
            raise ShapeError(f"Kraus operator {i} has shape {k.shape}, expected {shape}")
    if shape[0] != shape[1]:
        raise ShapeError(f"only square channels are supported, got Kraus shape {shape}")
    return np.stack(mats)


# ==================================================================================================
# Channel operations
# ==================================================================================================


def completeness_residual(kraus_list) -> float:
    ops = kraus_list.stack if isinstance(kraus_list, KrausChannel) else _as_kraus_stack(kraus_list)
    total = np.einsum("kji,kjl->il", ops.conj(), ops)
    return float(np.max(np.abs(total - np.eye(ops.shape[2]))))


def choi_matrix(channel) -> np.ndarray:
    """Unnormalized Choi matrix ``sum_i vec(E_i) vec(E_i)^dagger``.

    :param channel: a :class:`KrausChannel` or any list of equally shaped matrices.
    :return: a ``d^2 x d^2`` positive semidefinite matrix with trace ``sum_i ||E_i||_F^2``.
    """
    ops = channel.stack if isinstance(channel, KrausChannel) else _as_kraus_stack(channel)
    vecs = np.transpose(ops, (0, 2, 1)).reshape(ops.shape[0], -1)
    return vecs.T @ vecs.conj()


def validate_channel(kraus_list) -> ChannelValidity:
    """Check the CPTP conditions of a Kraus list.

    >>> validate_channel([np.eye(2)]).is_valid
    True
    """
    ops = kraus_list.stack if isinstance(kraus_list, KrausChannel) else _as_kraus_stack(kraus_list)
    residual = completeness_residual(ops)
    choi_min = float(np.linalg.eigvalsh(choi_matrix(ops))[0])
    return ChannelValidity(
        completeness_residual=residual,
        choi_min_eigenvalue=choi_min,
        is_valid=bool(residual <= CHANNEL_TOL and choi_min >= -CHANNEL_TOL),
    )


def apply_channel(channel: KrausChannel, rho: DensityOperator) -> DensityOperator:
    channel.require_valid()
    if rho.dim != channel.dim:
        raise ShapeError(f"state of dimension {rho.dim} fed to a {channel.dim}-dimensional channel")
    ops = channel.stack
    out = np.einsum("kij,jl,kml->im", ops, rho.matrix, ops.conj())
    return DensityOperator(out)


def apply_kraus(ops: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Raw ``sum_i K_i rho K_i^dagger`` on arrays, without any checks."""
    return np.einsum("kij,jl,kml->im", ops, rho, ops.conj())


def support_projector(rho: DensityOperator, rel_tol: float = SUPPORT_REL_TOL) -> Projector:
    """Projector onto the eigenvectors of ``rho`` whose eigenvalue exceeds ``rel_tol * max``."""
    lam, vecs = np.linalg.eigh(rho.matrix)
    keep = lam > rel_tol * lam[-1]
    basis = vecs[:, keep]
    return Projector(
        dim=rho.dim, matrix=basis @ basis.conj().T, rank=int(keep.sum()), basis=_freeze(basis)
    )


def output_vectors(channel: KrausChannel, state: PureState | np.ndarray) -> np.ndarray:
    """The ``d x m`` matrix whose columns are ``E_i |psi>``."""
    v = state.amplitudes if isinstance(state, PureState) else np.asarray(state, dtype=complex)
    return (channel.stack @ v).T


def span_basis(vectors: np.ndarray, rel_tol: float = SUPPORT_REL_TOL) -> np.ndarray:
    """Orthonormal basis of the column span of ``vectors``.

    Singular values at or below ``sqrt(rel_tol)`` times the largest are
    dropped, which matches the eigenvalue cut of :func:`support_projector`
    applied to ``vectors @ vectors^dagger``.
    """
    u, s, _ = np.linalg.svd(vectors, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0]
    return u[:, s > np.sqrt(rel_tol) * s[0]]


def output_support(channel: KrausChannel, state: PureState | np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``supp(E(psi)) = span{E_i |psi>}``."""
    return span_basis(output_vectors(channel, state))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = a.matrix if isinstance(a, DensityOperator) else a
    b = b.matrix if isinstance(b, DensityOperator) else b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def is_unitary(u: np.ndarray, tol: float = CHANNEL_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def extend_with_ancilla(channel: KrausChannel, ancilla_dim: int) -> KrausChannel:
    """Kraus operators ``I_R (x) E_i`` for an ancilla ``R`` of dimension ``ancilla_dim``."""
    if ancilla_dim < 1:
        raise DomainError("ancilla dimension must be at least 1")
    if ancilla_dim == 1:
        return channel
    eye = np.eye(ancilla_dim)
    name = f"ea{ancilla_dim}[{channel.name}]" if channel.name else None
    return KrausChannel(tuple(np.kron(eye, k) for k in channel.kraus), name=name)


def adjoin_unitary(u: np.ndarray, channel: KrausChannel) -> KrausChannel:
    """Follow ``channel`` by ``U^dagger``, turning ``U`` versus ``E`` into identity versus ``U^dagger E``."""
    u = np.asarray(u, dtype=complex)
    if not is_unitary(u):
        raise NotUnitaryError("adjoined operator is not unitary within 1e-9")
    if u.shape[0] != channel.dim:
        raise ShapeError(f"unitary of size {u.shape[0]} does not match channel dimension {channel.dim}")
    return KrausChannel(tuple(u.conj().T @ k for k in channel.kraus))


# ==================================================================================================
# Test-channel factories
# ==================================================================================================

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def basis_state(dim: int, index: int) -> PureState:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return PureState(v)


def identity_channel(dim: int = 2) -> KrausChannel:
    return KrausChannel((np.eye(dim),), name="identity")


def unitary_channel(u: np.ndarray, name: Optional[str] = None) -> KrausChannel:
    u = np.asarray(u, dtype=complex)
    if not is_unitary(u):
        raise NotUnitaryError("matrix is not unitary within 1e-9")
    return KrausChannel((u,), name=name)


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def make_rotation_channel(theta: float) -> KrausChannel:
    """Real qubit rotation ``R_theta``; its single-query fidelity with the identity is ``cos(theta)``."""
    if not 0.0 <= theta <= np.pi / 2:
        raise DomainError(f"rotation angle {theta} outside [0, pi/2]")
    return KrausChannel((rotation_matrix(theta),), name=f"rotation:{theta:.10f}")


def make_replace_channel(theta: float) -> KrausChannel:
    """Qubit channel with Kraus ``|c_theta><0|`` and ``|1><1|``, ``|c_theta> = cos|0> + sin|1>``.

    Input ``|0>`` is sent to the pure state ``|c_theta>``, so the single-query
    fidelity with the identity is ``cos(theta)``, attained at ``|0>``.
    """
    if not 0.0 < theta < np.pi / 2:
        raise DomainError(f"replace-channel angle {theta} outside (0, pi/2)")
    c = np.array([np.cos(theta), np.sin(theta)], dtype=complex)
    k1 = np.outer(c, [1, 0])
    k2 = np.array([[0, 0], [0, 1]], dtype=complex)
    return KrausChannel((k1, k2), name=f"replace:{theta:.10f}")


def amplitude_damping_channel(gamma: float) -> KrausChannel:
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"damping rate {gamma} outside [0, 1]")
    e0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    e1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel((e0, e1), name=f"amplitude_damping:{gamma:.10f}")


def depolarizing_channel(p: float) -> KrausChannel:
    """``rho -> (1 - p) rho + p I/2`` with the usual four Pauli Kraus operators."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"depolarizing probability {p} outside [0, 1]")
    ops = [np.sqrt(1 - 3 * p / 4) * PAULI_I] + [np.sqrt(p / 4) * m for m in (PAULI_X, PAULI_Y, PAULI_Z)]
    return KrausChannel(tuple(ops), name=f"depolarizing:{p:.10f}")


def qutrit_replace_channel(theta: float, p: float = 1.0) -> KrausChannel:
    """Qutrit analogue of the replace channel.

    ``|0>`` goes to ``p |c><c| + (1 - p) |2><2|`` with ``|c> = cos|0> + sin|1>``;
    ``|1>`` and ``|2>`` are left alone. For ``p < 1`` the output on the
    minimizing input is mixed, which exercises the general-dimension path.
    """
    if not 0.0 < theta < np.pi / 2:
        raise DomainError(f"angle {theta} outside (0, pi/2)")
    if not 0.0 < p <= 1.0:
        raise DomainError(f"mixing weight {p} outside (0, 1]")
    c = np.array([np.cos(theta), np.sin(theta), 0], dtype=complex)
    e0 = np.array([1, 0, 0], dtype=complex)
    ops = [np.sqrt(p) * np.outer(c, e0)]
    if p < 1.0:
        ops.append(np.sqrt(1 - p) * np.outer([0, 0, 1], e0))
    ops += [np.diag([0, 1, 0]).astype(complex), np.diag([0, 0, 1]).astype(complex)]
    return KrausChannel(tuple(ops), name=f"qutrit_replace:{theta:.10f}:{p:.10f}")


def random_state(dim: int, rng: np.random.Generator) -> PureState:
    return PureState(rng.normal(size=dim) + 1j * rng.normal(size=dim))


def random_density(dim: int, rank: int, rng: np.random.Generator) -> DensityOperator:
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return DensityOperator(rho / np.trace(rho).real)


def random_channel(dim: int, num_kraus: int, rng: np.random.Generator) -> KrausChannel:
    """Random CPTP map: a Haar-like isometry ``C^d -> C^m (x) C^d`` cut into Kraus blocks."""
    g = rng.normal(size=(num_kraus * dim, dim)) + 1j * rng.normal(size=(num_kraus * dim, dim))
    q, _ = np.linalg.qr(g)
    return KrausChannel(tuple(q.reshape(num_kraus, dim, dim)))


def state_from_sequence(values: Sequence[complex]) -> PureState:
    return PureState(np.asarray(values, dtype=complex))
