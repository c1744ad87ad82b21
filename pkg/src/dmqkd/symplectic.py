"""Gaussian covariance-matrix machinery in shot-noise units.

Covariance matrices are real symmetric ``(2N, 2N)`` arrays with quadrature
ordering ``x_1, p_1, ..., x_N, p_N``. A matrix is physical when
``gamma + i Omega`` is positive semidefinite.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from dmqkd.errors import ConfigError, NumericalError

PHYSICAL_TOL = 1e-8
SYMMETRY_TOL = 1e-10


class Measurement(str, Enum):
    """Bob's detection.

    ``homodyne`` switches between x and p with equal probability and the
    choice is announced, so every rate term is the average of the two
    fixed-quadrature values.
    """

    HOMODYNE = "homodyne"
    HOMODYNE_X = "homodyne_x"
    HOMODYNE_P = "homodyne_p"
    HETERODYNE = "heterodyne"

    @classmethod
    def parse(cls, value) -> "Measurement":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown measurement {value!r}") from None

    @property
    def symmetric(self) -> bool:
        """Whether the measurement treats x and p alike."""
        return self in (Measurement.HOMODYNE, Measurement.HETERODYNE)

    def swapped(self) -> "Measurement":
        """The same measurement with the roles of x and p exchanged."""
        return {
            Measurement.HOMODYNE_X: Measurement.HOMODYNE_P,
            Measurement.HOMODYNE_P: Measurement.HOMODYNE_X,
        }.get(self, self)


SIGMA_Z = np.diag([1.0, -1.0])
OMEGA_1 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def omega(N: int) -> np.ndarray:
    """Symplectic form ``diag(w, ..., w)`` with ``w = [[0, 1], [-1, 0]]``."""
    return np.kron(np.eye(N), OMEGA_1)


def n_modes(gamma: np.ndarray) -> int:
    n = gamma.shape[0]
    if gamma.ndim != 2 or n != gamma.shape[1] or n % 2:
        raise ValueError(f"expected a square matrix of even size, got shape {gamma.shape}")
    return n // 2


def _checked(gamma) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    n_modes(gamma)
    if np.max(np.abs(gamma - gamma.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(gamma))):
        raise NumericalError("covariance matrix is not symmetric")
    return gamma


def uncertainty_margin(gamma: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian matrix ``gamma + i Omega``."""
    gamma = _checked(gamma)
    return float(np.linalg.eigvalsh(gamma + 1j * omega(n_modes(gamma)))[0])


def is_physical(gamma: np.ndarray, tol: float = PHYSICAL_TOL) -> bool:
    return uncertainty_margin(gamma) >= -tol


def symplectic_eigenvalues(gamma: np.ndarray, tol: float = PHYSICAL_TOL) -> np.ndarray:
    """Symplectic spectrum, sorted descending.

    Eigenvalues of ``i Omega gamma`` come in ``+-nu`` pairs; the positive half
    is returned. Values within ``tol`` below 1 are clipped to 1.
    """
    gamma = _checked(gamma)
    N = n_modes(gamma)
    ev = np.linalg.eigvals(1j * omega(N) @ gamma)
    nu = np.sort(ev.real)[::-1][:N]
    if nu[-1] < 1.0 - tol:
        raise NumericalError(f"unphysical covariance matrix: symplectic eigenvalue {nu[-1]:.12g} < 1")
    return np.maximum(nu, 1.0)


def g_entropy(nu) -> np.ndarray | float:
    """Von Neumann entropy in bits of a thermal mode with symplectic eigenvalue ``nu``."""
    nu_arr = np.asarray(nu, dtype=float)
    if np.any(nu_arr < 1.0 - PHYSICAL_TOL):
        raise NumericalError(f"symplectic eigenvalue below 1: {nu_arr.min():.12g}")
    nu_arr = np.maximum(nu_arr, 1.0)
    plus = (nu_arr + 1.0) / 2.0
    minus = (nu_arr - 1.0) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(minus > 0, minus * np.log2(np.where(minus > 0, minus, 1.0)), 0.0)
    out = plus * np.log2(plus) - tail
    return float(out) if np.ndim(nu) == 0 else out


def entropy(gamma: np.ndarray) -> float:
    """Entropy in bits of the Gaussian state with covariance ``gamma``."""
    return float(np.sum(g_entropy(symplectic_eigenvalues(gamma))))


def conditional_cm(gamma: np.ndarray, measurement: Measurement | str) -> np.ndarray:
    """Covariance of the remaining modes after measuring the last mode.

    Homodyne uses the limit form of the pseudo-inverse, ``1 / V_q`` on the
    measured quadrature. Heterodyne adds one unit of vacuum noise.
    """
    gamma = np.asarray(gamma, dtype=float)
    measurement = Measurement.parse(measurement)
    if measurement is Measurement.HOMODYNE:
        raise ValueError("switching homodyne has no single conditional state; pick homodyne_x or homodyne_p")
    rest = gamma[:-2, :-2]
    sigma = gamma[:-2, -2:]
    gB = gamma[-2:, -2:]
    if measurement is Measurement.HETERODYNE:
        return rest - sigma @ np.linalg.solve(gB + np.eye(2), sigma.T)
    q = 0 if measurement is Measurement.HOMODYNE_X else 1
    col = sigma[:, q]
    return rest - np.outer(col, col) / gB[q, q]


def holevo_bound(gamma: np.ndarray, measurement: Measurement | str, tol: float = PHYSICAL_TOL) -> float:
    """Gaussian upper bound on Eve's information about the measurement of the last mode."""
    if not is_physical(gamma, tol):
        raise NumericalError("covariance matrix violates the uncertainty relation")
    measurement = Measurement.parse(measurement)
    joint = entropy(gamma)
    if measurement is Measurement.HOMODYNE:
        cond = 0.5 * (entropy(conditional_cm(gamma, Measurement.HOMODYNE_X))
                      + entropy(conditional_cm(gamma, Measurement.HOMODYNE_P)))
        return joint - cond
    return joint - entropy(conditional_cm(gamma, measurement))


def _rotation_candidates():
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    I2 = np.eye(2)
    for a, b in ((I2, I2), (J, J)):
        for sa in (1.0, -1.0):
            for sb in (1.0, -1.0):
                yield sa * a, sb * b


def _sqrtm_spd(m: np.ndarray, inverse: bool = False) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = w ** (-0.5 if inverse else 0.5)
    return (v * w) @ v.T


def standard_form_CB(gamma_cb: np.ndarray, tol: float = 1e-9):
    """Local symplectic reduction of a two-mode CM to ``[[a I, D], [D, b I]]`` with ``D`` diagonal.

    Returns ``(gamma_std, S_C, S_B)`` with ``gamma_std = S gamma S^T`` for
    ``S = S_C (+) S_B``. Among equivalent solutions the one whose rotations
    are closest to the identity is chosen, so inputs already in standard form
    come back with ``S_C = S_B = I``.
    """
    gamma_cb = _checked(gamma_cb)
    if gamma_cb.shape != (4, 4):
        raise ValueError("standard_form_CB expects a 4x4 covariance matrix")
    A, B, C = gamma_cb[:2, :2], gamma_cb[2:, 2:], gamma_cb[:2, 2:]
    a, b = np.sqrt(np.linalg.det(A)), np.sqrt(np.linalg.det(B))
    # sqrt(det)·A^{-1/2} has unit determinant, hence is symplectic, and maps A to a·I.
    S1 = np.sqrt(a) * _sqrtm_spd(A, inverse=True)
    S2 = np.sqrt(b) * _sqrtm_spd(B, inverse=True)
    Cs = S1 @ C @ S2.T
    U, s, Vt = np.linalg.svd(Cs)
    V = Vt.T
    D = np.diag(s)
    if np.linalg.det(U) < 0:
        U[:, 1] *= -1
        D[1, 1] *= -1
    if np.linalg.det(V) < 0:
        V[:, 1] *= -1
        D[1, 1] *= -1
    # U^T Cs V = D; pick the equivalent rotation pair nearest to (I, I).
    best = None
    for Ra, Rb in _rotation_candidates():
        Uc, Vc = U @ Ra, V @ Rb
        cost = np.linalg.norm(Uc - np.eye(2)) + np.linalg.norm(Vc - np.eye(2))
        if best is None or cost < best[0] - 1e-12:
            best = (cost, Uc, Vc)
    _, U, V = best
    S_C = U.T @ S1
    S_B = V.T @ S2
    S = np.zeros((4, 4))
    S[:2, :2], S[2:, 2:] = S_C, S_B
    out = S @ gamma_cb @ S.T
    target = out.copy()
    target[0, 1] = target[1, 0] = target[2, 3] = target[3, 2] = 0.0
    target[0, 3] = target[3, 0] = target[1, 2] = target[2, 1] = 0.0
    resid = np.max(np.abs(out - target))
    if resid > tol * max(1.0, np.max(np.abs(gamma_cb))):
        raise NumericalError(f"standard-form residual {resid:.3e} above tolerance")
    out = 0.5 * (target + target.T)
    out[0, 0] = out[1, 1] = 0.5 * (out[0, 0] + out[1, 1])
    out[2, 2] = out[3, 3] = 0.5 * (out[2, 2] + out[3, 3])
    return out, S_C, S_B


def extend_SA(S_C: np.ndarray) -> np.ndarray:
    """Symplectic ``S_A`` with ``S_A sigma_Z S_C^T = sigma_Z``."""
    S_C = np.asarray(S_C, dtype=float)
    det = np.linalg.det(S_C)
    if abs(det - 1.0) > 1e-8:
        raise NumericalError(f"S_C is not symplectic (det {det:.3e})")
    return SIGMA_Z @ np.linalg.inv(S_C.T) @ SIGMA_Z


def is_symplectic(S: np.ndarray, tol: float = 1e-9) -> bool:
    N = S.shape[0] // 2
    Om = omega(N)
    return bool(np.max(np.abs(S @ Om @ S.T - Om)) <= tol)


def block_diag(*blocks: np.ndarray) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i : i + k, i : i + k] = b
        i += k
    return out


def epr_cm(V: float) -> np.ndarray:
    """Two-mode squeezed vacuum with quadrature variance ``V``."""
    c = np.sqrt(max(V * V - 1.0, 0.0))
    return np.block([[V * np.eye(2), c * SIGMA_Z], [c * SIGMA_Z, V * np.eye(2)]])
