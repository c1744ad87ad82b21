import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from dmqkd.errors import NumericalError
from dmqkd.symplectic import (
    SIGMA_Z,
    Measurement,
    block_diag,
    conditional_cm,
    entropy,
    epr_cm,
    extend_SA,
    g_entropy,
    holevo_bound,
    is_physical,
    is_symplectic,
    omega,
    standard_form_CB,
    symplectic_eigenvalues,
    uncertainty_margin,
)


def random_symplectic(rng, n_modes, scale=0.4):
    H = rng.normal(size=(2 * n_modes, 2 * n_modes)) * scale
    return expm(omega(n_modes) @ (H + H.T) / 2)


def random_physical_cm(rng, n_modes):
    nu = 1.0 + rng.exponential(1.0, n_modes)
    S = random_symplectic(rng, n_modes)
    D = np.diag(np.repeat(nu, 2))
    g = S @ D @ S.T
    return 0.5 * (g + g.T), np.sort(nu)[::-1]


def test_omega():
    assert np.array_equal(omega(1), [[0, 1], [-1, 0]])
    assert omega(2).shape == (4, 4)
    assert np.allclose(omega(3) @ omega(3), -np.eye(6))


def test_physicality_examples():
    assert is_physical(np.eye(4))
    assert not is_physical(0.5 * np.eye(2))
    g = epr_cm(4.6)
    assert is_physical(g)
    assert abs(uncertainty_margin(g)) < 1e-8


def test_symplectic_spectra():
    assert np.allclose(symplectic_eigenvalues(np.eye(6)), 1.0)
    assert np.allclose(symplectic_eigenvalues(epr_cm(7.3)), [1.0, 1.0], atol=1e-8)
    assert np.allclose(symplectic_eigenvalues(2.5 * np.eye(2)), [2.5])
    with pytest.raises(NumericalError):
        symplectic_eigenvalues(0.5 * np.eye(2))


def test_g_function():
    assert g_entropy(1.0) == 0.0
    assert abs(g_entropy(3.0) - 2.0) < 1e-15
    assert abs(g_entropy(1.0 + 1e-12)) < 1e-9
    assert np.all(np.diff(g_entropy(np.linspace(1, 50, 200))) > 0)
    with pytest.raises(NumericalError):
        g_entropy(0.9)


def test_conditional_on_epr():
    V = 4.6
    g = epr_cm(V)
    hom = conditional_cm(g, "homodyne_x")
    assert np.allclose(hom, np.diag([V - (V * V - 1) / V, V]))
    het = conditional_cm(g, "heterodyne")
    assert np.allclose(het, np.eye(2))
    assert np.allclose(conditional_cm(block_diag(g[:2, :2], 3 * np.eye(2)), "homodyne_p"), g[:2, :2])


def test_holevo_examples():
    V = 3.0
    assert abs(holevo_bound(epr_cm(V), "homodyne_x")) < 1e-6
    rest = np.array([[2.0, 0.3], [0.3, 1.5]])
    gB = 2.2 * np.eye(2)
    assert abs(holevo_bound(block_diag(rest, gB), "heterodyne") - g_entropy(2.2)) < 1e-12


def test_switching_homodyne_is_the_average():
    rng = np.random.default_rng(3)
    g, _ = random_physical_cm(rng, 3)
    avg = 0.5 * (holevo_bound(g, "homodyne_x") + holevo_bound(g, "homodyne_p"))
    assert abs(holevo_bound(g, "homodyne") - avg) < 1e-12
    with pytest.raises(ValueError):
        conditional_cm(g, Measurement.HOMODYNE)


def test_extend_sa():
    assert np.allclose(extend_SA(np.eye(2)), np.eye(2))
    s = 1.7
    # S_A sigma_Z diag(s, 1/s) = sigma_Z forces S_A = diag(1/s, s)
    assert np.allclose(extend_SA(np.diag([s, 1 / s])), np.diag([1 / s, s]))
    rng = np.random.default_rng(11)
    S_C = random_symplectic(rng, 1)
    S_A = extend_SA(S_C)
    assert np.max(np.abs(S_A @ SIGMA_Z @ S_C.T - SIGMA_Z)) < 1e-10
    assert is_symplectic(S_A)


def test_standard_form_identity_on_standard_input():
    g, S_C, S_B = standard_form_CB(epr_cm(2.5))
    assert np.allclose(g, epr_cm(2.5))
    assert np.allclose(S_C, np.eye(2)) and np.allclose(S_B, np.eye(2))


def test_standard_form_on_qam_pipeline_is_diagonal():
    from conftest import qam_source
    from dmqkd.channel import ChannelParams, apply_channel

    part = apply_channel(qam_source(8), ChannelParams(0.3, 0.02, "input_referred"))
    _, S_C, S_B = standard_form_CB(part.known[2:6, 2:6])
    for S in (S_C, S_B):
        assert abs(S[0, 1]) < 1e-12 and abs(S[1, 0]) < 1e-12


def rotation(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_standard_form_round_trip(seed):
    rng = np.random.default_rng(seed)
    # a standard-form two-mode matrix scrambled by local rotations and squeezers
    a, b = 1 + rng.exponential(2), 1 + rng.exponential(2)
    cx = rng.uniform(-1, 1) * math.sqrt((a - 1) * (b - 1)) * 0.9
    cp = rng.uniform(-1, 1) * math.sqrt((a - 1) * (b - 1)) * 0.9
    std = np.block([[a * np.eye(2), np.diag([cx, cp])], [np.diag([cx, cp]), b * np.eye(2)]])
    if not is_physical(std):
        return
    L = block_diag(rotation(rng.uniform(0, 6.3)) @ np.diag([1.3, 1 / 1.3]), rotation(rng.uniform(0, 6.3)))
    g = L @ std @ L.T
    out, S_C, S_B = standard_form_CB(g)
    assert is_symplectic(S_C) and is_symplectic(S_B)
    S = block_diag(S_C, S_B)
    assert np.allclose(S @ g @ S.T, out, atol=1e-8)
    assert np.allclose(np.linalg.inv(S) @ out @ np.linalg.inv(S).T, g, atol=1e-8)
    assert abs(out[0, 0] - a) < 1e-8 and abs(out[2, 2] - b) < 1e-8
    # cross block is fixed up to signs
    assert np.allclose(sorted(np.abs(np.diag(out[:2, 2:]))), sorted([abs(cx), abs(cp)]), atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_local_symplectic_invariance(seed):
    rng = np.random.default_rng(seed)
    g, nu = random_physical_cm(rng, 3)
    assert np.allclose(symplectic_eigenvalues(g), nu, rtol=1e-8)
    S = block_diag(*(random_symplectic(rng, 1) for _ in range(3)))
    assert np.allclose(symplectic_eigenvalues(S @ g @ S.T), nu, rtol=1e-8)
    assert abs(entropy(S @ g @ S.T) - entropy(g)) < 1e-8
    assert min(symplectic_eigenvalues(g)) >= 1 - 1e-8


def standard_three_mode(rng, asym=True):
    """Gaussian A-C-B matrix in standard form with a feasible A-B block."""
    V = 1.5 + rng.exponential(3)
    eta, T = rng.uniform(0.3, 0.95), rng.uniform(0.05, 0.95)
    g0 = block_diag(epr_cm(V), np.eye(2))
    t, r = math.sqrt(eta), math.sqrt(1 - eta)
    I2, Z = np.eye(2), np.zeros((2, 2))
    M = np.block([[I2, Z, Z], [Z, r * I2, -t * I2], [Z, t * I2, r * I2]])
    g = M @ g0 @ M.T
    noise = np.diag([1 - T + rng.uniform(0, 0.2), 1 - T + (rng.uniform(0, 0.2) if asym else 0)])
    g[2:4, 4:6] *= math.sqrt(T)
    g[4:6, 2:4] *= math.sqrt(T)
    g[0:2, 4:6] *= math.sqrt(T)
    g[4:6, 0:2] *= math.sqrt(T)
    g[4:6, 4:6] = T * g[4:6, 4:6] + noise
    # bring B to an isotropic block with a local squeezer
    s = (g[4, 4] / g[5, 5]) ** 0.25
    S = block_diag(np.eye(2), np.eye(2), np.diag([1 / s, s]))
    return S @ g @ S.T


def sign_mapped(g):
    """(k11, k12, k21, k22; phi_x, phi_p) -> (-k22, -k21, -k12, -k11; phi_p, phi_x), other blocks kept."""
    out = g.copy()
    k = g[0:2, 4:6]
    km = -np.array([[k[1, 1], k[1, 0]], [k[0, 1], k[0, 0]]])
    out[0:2, 4:6], out[4:6, 0:2] = km, km.T
    cb = np.diag([g[3, 5], g[2, 4]])
    out[2:4, 4:6], out[4:6, 2:4] = cb, cb.T
    return out


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kick=st.floats(-0.3, 0.3))
def test_holevo_sign_map(seed, kick):
    rng = np.random.default_rng(seed)
    g = standard_three_mode(rng)
    # move kappa inside the feasible set, keeping an off-diagonal part
    g2 = g.copy()
    g2[0, 5] = g2[5, 0] = kick * 0.05
    g2[1, 4] = g2[4, 1] = -kick * 0.03
    if uncertainty_margin(g2) < 1e-9:
        g2 = g
    m = sign_mapped(g2)
    assert is_physical(m)
    for meas in Measurement:
        assert abs(holevo_bound(g2, meas) - holevo_bound(m, meas.swapped())) < 1e-6
    # flipping the off-diagonal kappa entries
    f = g2.copy()
    f[0, 5], f[1, 4] = -f[0, 5], -f[1, 4]
    f[5, 0], f[4, 1] = f[0, 5], f[1, 4]
    for meas in Measurement:
        assert abs(holevo_bound(g2, meas) - holevo_bound(f, meas)) < 1e-6


def test_holevo_nonnegative_on_random_states():
    rng = np.random.default_rng(5)
    for _ in range(30):
        g, _ = random_physical_cm(rng, 3)
        for meas in Measurement:
            assert holevo_bound(g, meas) >= -1e-8


def test_pure_joint_state_leaks_nothing():
    # EPR pair with one arm split against vacuum is a pure three-mode state
    V, eta = 4.6, 0.9
    g0 = block_diag(epr_cm(V), np.eye(2))
    t, r = math.sqrt(eta), math.sqrt(1 - eta)
    I2, Z = np.eye(2), np.zeros((2, 2))
    M = np.block([[I2, Z, Z], [Z, r * I2, -t * I2], [Z, t * I2, r * I2]])
    g = M @ g0 @ M.T
    assert entropy(g) < 1e-9
    for meas in Measurement:
        assert holevo_bound(g, meas) <= 1e-6


def test_identity_channel_leak_limited_by_source_entropy():
    # a QAM source CM is not a pure Gaussian CM; Eve's share is at most its entropy
    from conftest import qam_source

    for L in (4, 8, 16):
        g = qam_source(L).gamma_ACB0
        s = holevo_bound(g, "homodyne")
        assert 0.0 <= s <= entropy(g) + 1e-9
