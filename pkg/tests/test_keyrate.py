import dataclasses
import math

import numpy as np
import pytest

from conftest import qam, qam_source
from dmqkd.channel import ChannelParams, PartialCM, apply_channel
from dmqkd.constellation import Constellation
from dmqkd.errors import ConfigError, NumericalError
from dmqkd.keyrate import (
    Numerics,
    SweepSpec,
    gaussian_reference,
    kappa_bounds,
    key_rate,
    minor_bounds,
    mutual_information,
    prepare_source,
    standardize,
    sup_holevo,
    sweep,
    tolerable_excess_noise,
)
from dmqkd.symplectic import holevo_bound, uncertainty_margin
from test_symplectic import sign_mapped, standard_three_mode


def margin_at(std, k11, k22):
    return uncertainty_margin(std.gamma_std(np.diag([k11, k22])))


def best_margin_over_k22(std, k11):
    from dmqkd import search

    L = 20.0
    return search.golden_max(lambda t: margin_at(std, k11, t), -L, L, 1e-12)[1]


@pytest.fixture(scope="module")
def std64():
    return standardize(apply_channel(qam_source(8), ChannelParams.from_distance(25, 0.05, "input_referred")))


# --------------------------------------------------------------------------- feasibility


def test_bounds_saturate_uncertainty_relation(std64):
    b = kappa_bounds(std64)
    lo, hi = b.k11_range
    assert abs(best_margin_over_k22(std64, lo)) < 1e-6
    assert abs(best_margin_over_k22(std64, hi)) < 1e-6
    assert best_margin_over_k22(std64, b.k11_center) > 0
    assert best_margin_over_k22(std64, hi + 1e-4 * b.R_x) < 0
    assert best_margin_over_k22(std64, lo - 1e-4 * b.R_x) < 0


def test_decoupled_b_gives_symmetric_interval():
    g = np.eye(6)
    g[0:4, 0:4] = np.block([[3 * np.eye(2), 2.5 * np.diag([1, -1])], [2.5 * np.diag([1, -1]), 3 * np.eye(2)]])
    g[4:6, 4:6] = 2.0 * np.eye(2)
    std = standardize(PartialCM(g, np.zeros((2, 2)), ChannelParams(0.5)))
    b = kappa_bounds(std)
    assert abs(b.k11_center) < 1e-9 and abs(b.k22_center) < 1e-9
    assert b.R_x > 0
    assert margin_at(std, 0.5 * b.R_x, 0) > 0
    assert margin_at(std, 1.01 * b.R_x, 0) < 0


def test_identity_channel_contains_source_kappa():
    src = qam_source(4)
    part = apply_channel(src, ChannelParams(1.0, 0.0))
    std = standardize(part)
    k = std.to_standard(part.physical_kappa)
    b = kappa_bounds(std)
    assert b.k11_range[0] - 1e-9 <= k[0, 0] <= b.k11_range[1] + 1e-9
    assert b.k22_range[0] - 1e-9 <= k[1, 1] <= b.k22_range[1] + 1e-9
    assert uncertainty_margin(std.gamma_std(k)) > -1e-8


@pytest.mark.parametrize("d,eps,conv", [(25, 0.05, "input_referred"), (60, 0.01, "paper_cloner"), (5, 0.02, "input_referred")])
def test_minor_determinants_agree_with_bisection(d, eps, conv):
    std = standardize(apply_channel(qam_source(8), ChannelParams.from_distance(d, eps, conv)))
    a, m = kappa_bounds(std), minor_bounds(std)
    assert abs(a.k11_center - m.k11_center) < 1e-6 and abs(a.R_x - m.R_x) < 1e-6
    assert abs(a.k22_center - m.k22_center) < 1e-6 and abs(a.R_p - m.R_p) < 1e-6


def test_minor_determinants_on_asymmetric_state():
    g = standard_three_mode(np.random.default_rng(8))
    known = g.copy()
    known[0:2, 4:6] = known[4:6, 0:2] = 0
    std = standardize(PartialCM(known, g[0:2, 4:6], ChannelParams(0.5)))
    assert std.decoupled and not std.symmetric
    a, m = kappa_bounds(std), minor_bounds(std)
    # centres still agree; the closed-form radii only hold for phi_x = phi_p
    assert abs(a.k11_center - m.k11_center) < 1e-6 and abs(a.k22_center - m.k22_center) < 1e-6
    assert abs(best_margin_over_k22(std, a.k11_range[1])) < 1e-6


# --------------------------------------------------------------------------- supremum


def test_search_mode_selection(std64):
    assert sup_holevo(std64, "homodyne").mode == "1d"
    assert sup_holevo(std64, "heterodyne").mode == "1d"
    with pytest.raises(ConfigError):
        sup_holevo(std64, "homodyne_x", Numerics(search_mode="1d"))


def test_sup_dominates_actual_attack(std64):
    part = std64.partial
    for meas in ("homodyne", "heterodyne", "homodyne_x"):
        r = sup_holevo(std64, meas)
        assert r.S_sup >= holevo_bound(part.with_kappa(part.physical_kappa), meas) - 1e-9
        assert uncertainty_margin(part.with_kappa(r.kappa)) > -1e-8


def test_one_dimensional_reduction_matches_plane_search(std64):
    for meas in ("homodyne", "heterodyne"):
        one = sup_holevo(std64, meas, Numerics(search_mode="1d"))
        two = sup_holevo(std64, meas, Numerics(search_mode="2d"))
        assert abs(one.S_sup - two.S_sup) < 1e-5


def test_sign_map_at_search_level():
    g = standard_three_mode(np.random.default_rng(21))
    known = g.copy()
    known[0:2, 4:6] = known[4:6, 0:2] = 0
    std = standardize(PartialCM(known, g[0:2, 4:6], ChannelParams(0.5)))
    mapped_known = sign_mapped(std.known)
    mirror = dataclasses.replace(std, known=mapped_known, phi_x=std.phi_p, phi_p=std.phi_x)
    a = sup_holevo(std, "homodyne_x")
    b = sup_holevo(mirror, "homodyne_p")
    assert a.mode == b.mode == "2d"
    assert abs(a.S_sup - b.S_sup) < 1e-6


def test_general_search_on_standard_input_reproduces_reduction(std64):
    four = sup_holevo(std64, "homodyne", Numerics(search_mode="4d"))
    one = sup_holevo(std64, "homodyne")
    assert abs(four.S_sup - one.S_sup) < 1e-6


# --------------------------------------------------------------------------- mutual information


def test_single_point_has_no_information():
    src = prepare_source(Constellation(np.array([0.5 + 0j]), np.array([1.0])), 0.9)
    assert mutual_information(src, ChannelParams(0.5, 0.01), "homodyne_x") == 0.0


def test_binary_information_against_monte_carlo():
    src = prepare_source(Constellation(np.array([0.6 + 0j, -0.6 + 0j]), np.array([0.5, 0.5])), 0.9)
    ch = ChannelParams(0.4, 0.05, "input_referred")
    info = mutual_information(src, ch, "homodyne_x")
    m = math.sqrt(ch.T_C) * src.cond_means[0, 2]
    v = ch.conditional_variance
    rng = np.random.default_rng(12345)
    n = 10_000_000
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y = sign * m + math.sqrt(v) * rng.standard_normal(n)
    # log2 p(y|i) - log2 p(y) with p(y) the equal mixture
    log_ratio = (-((y - sign * m) ** 2) / (2 * v)) - np.logaddexp(-((y - m) ** 2) / (2 * v), -((y + m) ** 2) / (2 * v))
    mc = float(np.mean(log_ratio) / math.log(2) + 1.0)
    assert abs(info - mc) < 3e-3


def test_dense_qam_approaches_gaussian_capacity():
    src = qam_source(16)
    ch = ChannelParams(1.0, 0.0)
    info = mutual_information(src, ch, "homodyne_x")
    cap = 0.5 * math.log2(4.6)
    assert abs(info - cap) <= 0.02 * cap


@pytest.mark.parametrize("L", [4, 8, 16])
def test_information_below_gaussian_bound(L):
    src = qam_source(L)
    ch = ChannelParams(0.3, 0.02, "input_referred")
    info = mutual_information(src, ch, "homodyne_x")
    assert 0.0 <= info <= 0.5 * math.log2(ch.output_variance(src.V_B0) / ch.conditional_variance) + 1e-12


def test_information_grows_with_constellation_size():
    ch = ChannelParams(0.5, 0.01, "input_referred")
    infos = [mutual_information(qam_source(L), ch, "homodyne") for L in (4, 8, 16)]
    assert infos[0] <= infos[1] <= infos[2]


def test_heterodyne_product_shortcut_matches_plane_integral():
    from dmqkd.keyrate import _info_2d
    from dmqkd.channel import output_means

    src = qam_source(4)
    ch = ChannelParams(0.5, 0.02, "input_referred")
    direct = _info_2d(output_means(src, ch), src.constellation.probs, ch.conditional_variance + 1.0, 801)
    assert abs(mutual_information(src, ch, "heterodyne") - direct) < 1e-6


def test_coarse_grid_is_detected():
    c = Constellation(np.array([-4 + 0j, 4 + 0j]), np.array([0.5, 0.5]))
    src = prepare_source(c, 0.9)
    with pytest.raises(NumericalError):
        mutual_information(src, ChannelParams(1.0, 0.0), "homodyne_x", n_points=41)


# --------------------------------------------------------------------------- key rate


def test_lossless_dense_qam():
    p = key_rate(qam_source(16), ChannelParams(1.0, 0.0), beta=0.95)
    assert p.S_sup < 1e-4
    assert abs(p.K_R - 0.95 * p.I_AB) < 1e-4 and p.K_R > 0


def test_bookkeeping(qam_sources):
    ch = ChannelParams.from_distance(30, 0.02, "input_referred")
    for src in qam_sources.values():
        p = key_rate(src, ch, beta=0.9)
        assert p.K_R == 0.9 * p.I_AB - p.S_sup
        assert p.K_R <= 0.9 * p.I_AB and p.S_sup >= 0
        assert p.S_physical <= p.S_sup + 1e-9
        assert p.K_R_clamped == max(p.K_R, 0.0)


def test_rate_falls_with_noise_and_distance():
    src = qam_source(16)
    ks = [key_rate(src, ChannelParams.from_distance(20, e, "input_referred")).K_R for e in (0.0, 0.02, 0.05, 0.1, 0.3)]
    assert all(a >= b for a, b in zip(ks, ks[1:]))
    assert ks[-1] < 0
    kd = [key_rate(src, ChannelParams.from_distance(d, 0.01, "input_referred")).K_R for d in (10, 50, 100)]
    assert kd[0] >= kd[1] >= kd[2]


def test_gaussian_reference_closed_forms():
    p = gaussian_reference(4.6, ChannelParams(1.0, 0.0), beta=1.0, measurement="homodyne_x")
    assert abs(p.I_AB - 0.5 * math.log2(4.6)) < 1e-12
    assert abs(p.S_sup) < 1e-6
    # reverse reconciliation: small input-referred noise keeps K ~ T > 0
    tiny = gaussian_reference(4.6, ChannelParams(1e-6, 0.01, "input_referred"))
    assert 0 < tiny.K_R < 1e-5
    # the cloner adds about one unit of input-referred noise, so K -> 0 from below
    tiny = gaussian_reference(4.6, ChannelParams(1e-6, 0.01, "paper_cloner"))
    assert -1e-4 < tiny.K_R < 0
    with pytest.raises(ConfigError):
        gaussian_reference(0.9, ChannelParams(0.5))


def test_beta_validation():
    with pytest.raises(ConfigError):
        key_rate(qam_source(4), ChannelParams(0.5), beta=1.2)


def test_tolerable_noise_bracket_and_trend():
    src = qam_source(8)
    tol = 1e-4
    e25 = tolerable_excess_noise(src, 25, tol=tol, convention="input_referred")
    ch = lambda e: ChannelParams.from_distance(25, e, "input_referred")  # noqa: E731
    assert key_rate(src, ch(e25)).K_R > 0
    assert key_rate(src, ch(e25 + tol)).K_R <= 0
    e50 = tolerable_excess_noise(src, 50, tol=tol, convention="input_referred")
    assert e50 < e25


def test_tolerable_noise_needs_positive_rate():
    with pytest.raises(NumericalError):
        tolerable_excess_noise(qam_source(4), 50, convention="paper_cloner")


def test_sweep_contract(qam_sources):
    assert sweep(SweepSpec(sources=[qam_sources[4]], distances_km=[])) == []
    spec = SweepSpec(sources=[qam_sources[4]], distances_km=[0, 20, 40], eps_C=0.01, convention="input_referred")
    a, b = sweep(spec), sweep(dataclasses.replace(spec, threads=3))
    assert [p.distance_km for p in a] == [0, 20, 40]
    assert [p.to_dict() for p in a] == [p.to_dict() for p in b]


def test_sweep_records_point_errors(qam_sources):
    bad = SweepSpec(sources=[prepare_source(Constellation(np.array([-12 + 0j, 12 + 0j]), np.array([0.5, 0.5])), 0.9)],
                    T_values=[1.0, 0.5], numerics=Numerics(mi_points=101))
    rows = sweep(bad)
    assert len(rows) == 2
    assert rows[0].error.startswith("numerical_error") and math.isnan(rows[0].K_R)
    assert rows[1].error is None and np.isfinite(rows[1].K_R)


def test_jittered_qam_end_to_end():
    c = qam(4, 4.5, 5.0)
    rng = np.random.default_rng(7)
    jitter = 1 + 0.01 * (rng.uniform(-1, 1, c.n) + 1j * rng.uniform(-1, 1, c.n))
    src = prepare_source(Constellation(c.points * jitter, c.probs, "16-QAM-jitter"), 0.9)
    assert not src.purified.standard_form
    p = key_rate(src, ChannelParams.from_distance(25, 0.01, "input_referred"))
    assert p.search_mode == "4d"
    assert np.isfinite(p.K_R) and p.S_physical <= p.S_sup + 1e-9
