"""Density matrices, POVM effects and Born-rule probabilities.

Everything in this module is an immutable value; all functions are pure and
safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

HERMITICITY_ATOL = 1e-12
TRACE_ATOL = 1e-12
EIGENVALUE_FLOOR = -1e-10
POVM_COMPLETENESS_ATOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}
for _p in (PAULI_X, PAULI_Y, PAULI_Z):
    _p.setflags(write=False)


def _freeze(matrix: np.ndarray) -> np.ndarray:
    out = np.array(matrix, dtype=complex)
    out.setflags(write=False)
    return out


def _as_square_matrix(value, name: str) -> np.ndarray:
    mat = np.asarray(value, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    return mat


def _check_hermitian(mat: np.ndarray, name: str, atol: float) -> None:
    if np.max(np.abs(mat - mat.conj().T)) > atol:
        raise ValueError(f"{name} is not Hermitian within {atol}")


def matrix(state_or_matrix) -> np.ndarray:
    """Matrix payload of a :class:`DensityMatrix`/:class:`Effect`, or the array itself."""
    inner = getattr(state_or_matrix, "matrix", state_or_matrix)
    return np.asarray(inner, dtype=complex)


class BlochVector(NamedTuple):
    """Qubit parametrization rho = (I + b . sigma)/2; physical iff |b| <= 1."""

    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))


def eig_hermitian(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.

    Returns ``(values, vectors)`` with ``vectors[:, k]`` the eigenvector of
    ``values[k]``.  Raises ``ValueError`` on non-Hermitian input.
    """
    mat = _as_square_matrix(matrix(m), "matrix")
    scale = max(1.0, float(np.max(np.abs(mat))))
    _check_hermitian(mat, "matrix", 1e-10 * scale)
    vals, vecs = np.linalg.eigh(mat)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class DensityMatrix:
    """A d x d Hermitian, unit-trace, positive-semidefinite operator.

    Construction validates Hermiticity (1e-12), trace 1 (1e-12) and
    eigenvalues >= -1e-10.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = _as_square_matrix(self.matrix, "density matrix")
        _check_hermitian(mat, "density matrix", HERMITICITY_ATOL)
        tr = complex(np.trace(mat))
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        if float(np.min(np.linalg.eigvalsh(mat))) < EIGENVALUE_FLOOR:
            raise ValueError("density matrix has an eigenvalue below -1e-10")
        object.__setattr__(self, "matrix", _freeze(mat))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_pure(cls, ket: Sequence[complex]) -> "DensityMatrix":
        vec = np.asarray(ket, dtype=complex).reshape(-1)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        vec = vec / norm
        return cls(np.outer(vec, vec.conj()))

    @classmethod
    def from_bloch(cls, b) -> "DensityMatrix":
        return from_bloch(b)

    def to_bloch(self) -> BlochVector:
        return to_bloch(self)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues sorted descending."""
        return np.linalg.eigvalsh(self.matrix)[::-1]

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.matrix)))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True)
class Effect:
    """A POVM element: Hermitian with spectrum inside [0, 1] (tolerance 1e-10)."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = _as_square_matrix(self.matrix, "effect")
        _check_hermitian(mat, "effect", HERMITICITY_ATOL)
        vals = np.linalg.eigvalsh(mat)
        if float(vals.min()) < -1e-10 or float(vals.max()) > 1 + 1e-10:
            raise ValueError("effect eigenvalues must lie in [0, 1] within 1e-10")
        object.__setattr__(self, "matrix", _freeze(mat))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Povm:
    """An ordered list of effects summing to the identity (entrywise 1e-10)."""

    effects: tuple[Effect, ...]

    def __post_init__(self):
        effects = tuple(
            e if isinstance(e, Effect) else Effect(e) for e in self.effects
        )
        if not effects:
            raise ValueError("a POVM needs at least one effect")
        dim = effects[0].dim
        if any(e.dim != dim for e in effects):
            raise ValueError("all POVM effects must share one dimension")
        total = sum(e.matrix for e in effects)
        if np.max(np.abs(total - np.eye(dim))) > POVM_COMPLETENESS_ATOL:
            raise ValueError("POVM effects do not sum to the identity within 1e-10")
        object.__setattr__(self, "effects", effects)

    @property
    def dim(self) -> int:
        return self.effects[0].dim

    def __len__(self) -> int:
        return len(self.effects)

    def __iter__(self):
        return iter(self.effects)


def pauli_povm(axis: str) -> Povm:
    """Two-outcome projective measurement of a Pauli axis, +1 projector first."""
    sigma = PAULIS[axis.lower()]
    eye = np.eye(2, dtype=complex)
    return Povm(effects=(Effect((eye + sigma) / 2), Effect((eye - sigma) / 2)))


def basis_povm(basis: np.ndarray) -> Povm:
    """Projective POVM onto the columns of a unitary ``basis``."""
    basis = _as_square_matrix(basis, "basis")
    d = basis.shape[0]
    if np.max(np.abs(basis.conj().T @ basis - np.eye(d))) > 1e-10:
        raise ValueError("basis columns must be orthonormal")
    return Povm(
        effects=tuple(Effect(np.outer(basis[:, k], basis[:, k].conj())) for k in range(d))
    )


def born_probability(rho, effect) -> float:
    """Outcome probability Tr[rho E].

    Clamped into [0, 1] only when within 1e-12 of either boundary.
    """
    rho_m = matrix(rho)
    eff_m = matrix(effect)
    if rho_m.shape != eff_m.shape:
        raise ValueError(
            f"dimension mismatch: state is {rho_m.shape[0]}, effect is {eff_m.shape[0]}"
        )
    p = float(np.real(np.einsum("ij,ji->", rho_m, eff_m)))
    if -1e-12 <= p < 0.0:
        return 0.0
    if 1.0 < p <= 1.0 + 1e-12:
        return 1.0
    return p


def probabilities(rho, povm: Povm) -> np.ndarray:
    """Born-rule probability vector over the effects of ``povm``."""
    return np.array([born_probability(rho, e) for e in povm])


def from_bloch(b) -> DensityMatrix:
    """Qubit state (I + b . sigma)/2; requires |b| <= 1 + 1e-12."""
    bx, by, bz = (float(v) for v in b)
    norm = np.sqrt(bx * bx + by * by + bz * bz)
    if norm > 1 + 1e-12:
        raise ValueError(f"Bloch vector has norm {norm} > 1")
    mat = (np.eye(2, dtype=complex) + bx * PAULI_X + by * PAULI_Y + bz * PAULI_Z) / 2
    return DensityMatrix(mat)


def to_bloch(rho) -> BlochVector:
    """Bloch components Tr[rho sigma_a] of a qubit state."""
    mat = matrix(rho)
    if mat.shape != (2, 2):
        raise ValueError("Bloch coordinates are defined for qubits only")
    return BlochVector(
        x=float(np.real(np.trace(mat @ PAULI_X))),
        y=float(np.real(np.trace(mat @ PAULI_Y))),
        z=float(np.real(np.trace(mat @ PAULI_Z))),
    )
