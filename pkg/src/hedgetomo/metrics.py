"""Error measures between quantum states.

Relative entropy is the predictive (compression / gambling) error measure and
uses natural logarithms throughout; the remaining metrics are the usual
geometric ones.  All functions accept :class:`~hedgetomo.states.DensityMatrix`
instances or bare Hermitian arrays, so they can also score linear-inversion
estimates that are not positive semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .states import matrix

# Eigenvalues below this fraction of the largest one count as outside the
# support (double-precision eigendecomposition noise floor).
SUPPORT_RTOL = 1e-12


def _pair(rho, sigma) -> tuple[np.ndarray, np.ndarray]:
    a, b = matrix(rho), matrix(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def quantum_relative_entropy(rho, sigma) -> float:
    """D(rho||sigma) = Tr[rho (log rho - log sigma)] in nats.

    Returns +inf exactly when rho has support outside the support of sigma,
    with support membership decided at eigenvalue threshold 1e-12 relative to
    the largest eigenvalue.  0 log 0 contributes zero.
    """
    a, b = _pair(rho, sigma)
    avals, avecs = np.linalg.eigh(a)
    bvals, bvecs = np.linalg.eigh(b)

    a_floor = SUPPORT_RTOL * max(float(avals.max()), 1e-300)
    b_floor = SUPPORT_RTOL * max(float(bvals.max()), 1e-300)
    b_null = bvals < b_floor

    if np.any(b_null):
        null_mass = float(
            np.real(np.einsum("ik,ij,jk->", bvecs[:, b_null].conj(), a, bvecs[:, b_null]))
        )
        if null_mass > SUPPORT_RTOL:
            return float("inf")

    a_supp = avals > a_floor
    entropy_term = float(np.sum(avals[a_supp] * np.log(avals[a_supp])))

    b_supp = ~b_null
    overlap = np.real(np.einsum("ik,ij,jk->k", bvecs[:, b_supp].conj(), a, bvecs[:, b_supp]))
    cross_term = float(np.sum(overlap * np.log(bvals[b_supp])))
    return entropy_term - cross_term


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, clamped to [0, 1]."""
    a, b = _pair(rho, sigma)
    root = _psd_sqrt(a)
    inner = np.linalg.eigvalsh(root @ b @ root)
    value = float(np.sum(np.sqrt(np.clip(inner, 0.0, None))) ** 2)
    return min(max(value, 0.0), 1.0)


def infidelity(rho, sigma) -> float:
    """1 - fidelity; 0 iff the states coincide."""
    return 1.0 - fidelity(rho, sigma)


def trace_distance(rho, sigma) -> float:
    """Tr|rho - sigma|: the sum of absolute eigenvalues of the difference."""
    a, b = _pair(rho, sigma)
    return float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def hs_distance(rho, sigma) -> float:
    """Hilbert-Schmidt (Frobenius) distance sqrt(Tr[(rho - sigma)^2])."""
    a, b = _pair(rho, sigma)
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class RadialCoordinate:
    """Radial location of a state: r^2 = (1 + Tr rho^2)/2.

    This is the coordinate the accuracy regimes are organized by.  It differs
    from the conventional Bloch radius b = sqrt(2 Tr rho^2 - 1) (for qubits);
    at the maximally mixed qubit r^2 = 0.75 while b = 0, so both are exposed.
    Binning uses r^2.
    """

    r_sq: float
    r: float
    bloch_radius: float | None


def radial_coordinate(rho) -> RadialCoordinate:
    """r, r^2 and (for qubits) the Bloch radius of a state."""
    mat = matrix(rho)
    tr2 = float(np.real(np.einsum("ij,ji->", mat, mat)))
    r_sq = (1.0 + tr2) / 2.0
    bloch = None
    if mat.shape[0] == 2:
        bloch = float(np.sqrt(max(2.0 * tr2 - 1.0, 0.0)))
    return RadialCoordinate(r_sq=r_sq, r=float(np.sqrt(r_sq)), bloch_radius=bloch)
