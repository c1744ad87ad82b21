"""Two-mode purification of the constellation and the three-mode source.

Alice's virtual source is the canonical purification ``|psi_AD>`` of the
constellation mixture ``rho_D``. Mode D is then split on a beamsplitter with
vacuum: the transmitted arm ``B0`` goes to Bob and the reflected arm ``C``
stays with Alice. Mode ordering of the three-mode covariance matrix is
``x_A, p_A, x_C, p_C, x_B0, p_B0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dmqkd import fock
from dmqkd.constellation import Constellation
from dmqkd.errors import ConfigError, NumericalError
from dmqkd.symplectic import uncertainty_margin

EIGEN_CLIP = 1e-12
STANDARD_FORM_TOL = 1e-8


@dataclass(frozen=True)
class PurifiedSource:
    constellation: Constellation
    coeff_matrix: np.ndarray
    """``C[j, k]`` with ``|psi_AD> = sum_jk C[j, k] |j>_A |k>_D``."""
    eigs: np.ndarray
    """Retained eigenvalues of ``rho_D``, descending."""
    gamma_AD: np.ndarray
    V_A: float
    phi_AD: float
    eta_A: float
    standard_form: bool
    dim: int
    dropped_weight: float
    """Total eigenvalue mass discarded below the clip threshold."""

    def diagnostics(self) -> dict:
        return {
            "label": self.constellation.label,
            "n_points": self.constellation.n,
            "cutoff": self.dim,
            "V_A": self.V_A,
            "phi_AD": self.phi_AD,
            "eta_A": self.eta_A,
            "one_minus_eta_A": 1.0 - self.eta_A,
            "standard_form": self.standard_form,
            "n_eigs": int(self.eigs.size),
            "dropped_weight": self.dropped_weight,
            "eigs": [float(v) for v in self.eigs],
        }


def _moment(C: np.ndarray, op_A: np.ndarray | None = None, op_D: np.ndarray | None = None) -> complex:
    # <psi| op_A (x) op_D |psi> = Tr(C^dag op_A C op_D^T)
    M = C if op_A is None else op_A @ C
    if op_D is not None:
        M = M @ op_D.T
    return np.vdot(C, M)


def covariance_from_coefficients(C: np.ndarray) -> np.ndarray:
    """Covariance matrix of ``x_A, p_A, x_D, p_D`` for a two-mode pure state."""
    X, P = fock.quadrature_operators(C.shape[0])
    quads = [X, P]
    means = np.array([_moment(C, op_A=q).real for q in quads] + [_moment(C, op_D=q).real for q in quads])
    gamma = np.empty((4, 4))
    for i in range(4):
        for j in range(i, 4):
            qi, qj = quads[i % 2], quads[j % 2]
            if j < 2:
                m = _moment(C, op_A=qi @ qj)
            elif i >= 2:
                m = _moment(C, op_D=qi @ qj)
            else:
                m = _moment(C, op_A=qi, op_D=qj)
            # the real part is the symmetrized moment for same-mode x/p pairs
            gamma[i, j] = gamma[j, i] = m.real - means[i] * means[j]
    return gamma


def build_purification(c: Constellation, dim: int | None = None, clip: float = EIGEN_CLIP) -> PurifiedSource:
    """Diagonalize ``rho_D`` and form ``|psi_AD> = sum_i sqrt(v_i) |phi_i>_A |theta_i>_D``.

    ``|phi_i>`` carries the complex-conjugated Fock coefficients of
    ``|theta_i>``, which makes the coefficient matrix ``conj(sqrt(rho_D))``.
    """
    if dim is None:
        dim = fock.default_cutoff(c.max_amplitude)
    states = [fock.coherent_vector(b, dim) for b in c.points]
    rho = fock.mixture_density(states, c.probs)
    eig = fock.hermitian_eigendecomposition(rho)
    keep = eig.values > clip
    if not np.any(keep):
        raise NumericalError("density matrix has no eigenvalue above the clip threshold")
    values = eig.values[keep]
    vecs = eig.vectors[:, keep]
    dropped = float(eig.values[~keep].sum())
    values = values / values.sum()
    # vecs[:, i] holds c_i; C_jk = sum_i sqrt(v_i) conj(c_ij) c_ik
    C = (vecs.conj() * np.sqrt(values)) @ vecs.T
    gamma = covariance_from_coefficients(C)

    V_A = 0.5 * (gamma[0, 0] + gamma[1, 1])
    xx, pp = gamma[0, 2], gamma[1, 3]
    off = max(abs(gamma[0, 1]), abs(gamma[2, 3]), abs(gamma[0, 3]), abs(gamma[1, 2]))
    standard = (
        off < STANDARD_FORM_TOL
        and abs(gamma[0, 0] - gamma[1, 1]) < STANDARD_FORM_TOL
        and abs(gamma[2, 2] - gamma[3, 3]) < STANDARD_FORM_TOL
        and abs(gamma[0, 0] - gamma[2, 2]) < STANDARD_FORM_TOL
        and abs(xx + pp) < STANDARD_FORM_TOL
    )
    if standard:
        phi = 0.5 * (abs(xx) + abs(pp))
        eta = phi**2 / (V_A**2 - 1.0) if V_A > 1.0 else 1.0
    else:
        # local-symplectic invariant generalization: |det(cross block)| / (det(gamma_A) - 1)
        phi = float(np.sqrt(abs(np.linalg.det(gamma[:2, 2:]))))
        detA = float(np.linalg.det(gamma[:2, :2]))
        eta = phi**2 / (detA - 1.0) if detA > 1.0 else 1.0
    return PurifiedSource(
        constellation=c,
        coeff_matrix=C,
        eigs=values,
        gamma_AD=gamma,
        V_A=float(V_A),
        phi_AD=float(phi),
        eta_A=float(eta),
        standard_form=bool(standard),
        dim=int(dim),
        dropped_weight=dropped,
    )


def gamma_AD(src: PurifiedSource) -> tuple[np.ndarray, float]:
    return src.gamma_AD, src.eta_A


@dataclass(frozen=True)
class ThreeModeSource:
    purified: PurifiedSource
    gamma_ACB0: np.ndarray
    eta_BS: float
    cond_means: np.ndarray
    """Row ``i``: ``(x_C, p_C, x_B0, p_B0)`` means for constellation point ``i``."""

    @property
    def constellation(self) -> Constellation:
        return self.purified.constellation

    @property
    def sent(self) -> Constellation:
        """Amplitudes actually launched into the channel, ``sqrt(eta_BS) * beta``."""
        return self.constellation.scaled(np.sqrt(self.eta_BS))

    @property
    def V_B0(self) -> float:
        return float(0.5 * (self.gamma_ACB0[4, 4] + self.gamma_ACB0[5, 5]))


def beamsplitter_map(eta: float) -> np.ndarray:
    """Linear map from ``(A, D, vacuum)`` quadratures to ``(A, C, B0)``."""
    t, r = np.sqrt(eta), np.sqrt(1.0 - eta)
    I2 = np.eye(2)
    Z = np.zeros((2, 2))
    return np.block([[I2, Z, Z], [Z, r * I2, -t * I2], [Z, t * I2, r * I2]])


def split_on_beamsplitter(src: PurifiedSource, eta_BS: float) -> ThreeModeSource:
    if not 0.0 < eta_BS < 1.0:
        raise ConfigError(f"eta_BS must lie in (0, 1), got {eta_BS!r}")
    g_in = np.zeros((6, 6))
    g_in[:4, :4] = src.gamma_AD
    g_in[4:, 4:] = np.eye(2)
    M = beamsplitter_map(eta_BS)
    gamma = M @ g_in @ M.T
    gamma = 0.5 * (gamma + gamma.T)
    beta = src.constellation.points
    aC = np.sqrt(1.0 - eta_BS) * beta
    aB = np.sqrt(eta_BS) * beta
    means = 2.0 * np.column_stack([aC.real, aC.imag, aB.real, aB.imag])
    margin = uncertainty_margin(gamma)
    if margin < -1e-8:
        raise NumericalError(f"three-mode source is unphysical (margin {margin:.3e})")
    return ThreeModeSource(src, gamma, float(eta_BS), means)


def second_sequence(src: ThreeModeSource, i: int) -> tuple[float, float]:
    """Mode-C means Alice records when point ``i`` is sent."""
    n = src.cond_means.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"constellation index {i} out of range for {n} points")
    return float(src.cond_means[i, 0]), float(src.cond_means[i, 1])


def mean_product_covariance(src: ThreeModeSource) -> np.ndarray:
    """Mode C / mode B0 cross covariances from the per-point means alone.

    Returns the 2x2 block ``[[<dxC dxB0>, <dxC dpB0>], [<dpC dxB0>, <dpC dpB0>]]``.
    Valid because each conditional C-B0 state is a product of coherent states.
    """
    p = src.constellation.probs
    m = src.cond_means
    d = m - p @ m
    c = d[:, :2]
    b = d[:, 2:]
    return (c * p[:, None]).T @ b
