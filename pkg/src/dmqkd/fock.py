"""Truncated Fock-space numerics.

States and operators are plain complex numpy arrays: a state vector has shape
``(dim,)`` and a density matrix or operator has shape ``(dim, dim)``, where
``dim`` counts the basis states ``|0>, ..., |dim-1>``.

Quadratures use shot-noise units: ``X = a + a^dag`` and ``P = i(a^dag - a)``,
so the vacuum has unit variance and ``|alpha>`` has means
``(2 Re alpha, 2 Im alpha)``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import gammainc, gammaln

from dmqkd.errors import CutoffError, NumericalError

LEAKAGE_TOL = 1e-10
HERMITIAN_TOL = 1e-12


def leakage(alpha: complex, dim: int) -> float:
    """Photon-number probability of ``|alpha>`` lying outside the first ``dim`` Fock states."""
    lam = abs(alpha) ** 2
    if lam == 0.0:
        return 0.0
    # P(N >= dim) for N ~ Poisson(lam) is the regularized lower incomplete gamma.
    return float(gammainc(dim, lam))


def default_cutoff(max_abs: float, tol: float = LEAKAGE_TOL) -> int:
    """Smallest cutoff keeping leakage below ``tol``, floored at ``2|beta|^2 + 60``."""
    floor = int(math.ceil(2.0 * max_abs**2 + 60))
    dim = 1
    while leakage(max_abs, dim) > tol:
        dim += 1
    return max(dim, floor)


def coherent_vector(alpha: complex, dim: int, tol: float = LEAKAGE_TOL) -> np.ndarray:
    """Fock expansion of ``|alpha>``, renormalized after truncation."""
    if dim < 1:
        raise ValueError("dim must be positive")
    lost = leakage(alpha, dim)
    if lost > tol:
        raise CutoffError(f"cutoff {dim} leaks {lost:.3e} of |alpha={alpha}> (tolerance {tol:g})")
    vec = np.zeros(dim, dtype=complex)
    if alpha == 0:
        vec[0] = 1.0
        return vec
    n = np.arange(dim)
    log_mag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    vec = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return vec / np.linalg.norm(vec)


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def quadrature_operators(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(X, P)``; both are Hermitian and tridiagonal.

    The canonical commutator ``[X, P] = 2i`` holds on all but the last basis
    state, where truncation breaks it.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    a = annihilation(dim)
    ad = a.conj().T
    return a + ad, 1j * (ad - a)


def mixture_density(states, probs) -> np.ndarray:
    """Density matrix ``sum_i p_i |s_i><s_i|`` of pure states."""
    probs = np.asarray(probs, dtype=float)
    states = [np.asarray(s, dtype=complex) for s in states]
    if len(states) != len(probs) or not states:
        raise ValueError("need one probability per state")
    if np.any(probs < 0):
        raise ValueError("negative probability")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
    dims = {s.shape for s in states}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    K = np.stack(states, axis=1) * np.sqrt(probs)
    rho = K @ K.conj().T
    return 0.5 * (rho + rho.conj().T)


class Eigen(NamedTuple):
    values: np.ndarray
    """Eigenvalues in descending order, negatives clipped to zero."""
    vectors: np.ndarray
    """Orthonormal eigenvectors as columns, matching ``values``."""
    clipped: float
    """Largest magnitude of a negative eigenvalue that was clipped."""


def hermitian_eigendecomposition(rho: np.ndarray, tol: float = HERMITIAN_TOL) -> Eigen:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("expected a square matrix")
    dev = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    if dev > tol:
        raise NumericalError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    values, vectors = np.linalg.eigh(rho)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    negative = values[values < 0]
    clipped = float(-negative.min()) if negative.size else 0.0
    return Eigen(np.clip(values, 0.0, None), vectors, clipped)


def expectation(op: np.ndarray, rho: np.ndarray) -> float:
    """``Tr(op rho)`` for a Hermitian observable."""
    if op.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {op.shape} vs {rho.shape}")
    value = np.einsum("ij,ji->", op, rho)
    if abs(value.imag) > 1e-10:
        raise NumericalError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)
