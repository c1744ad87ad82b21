"""Reverse-reconciliation key rate with a worst-case A-B covariance block.

The A-B block ``kappa`` of the post-channel covariance matrix cannot be
estimated from data, so the Holevo bound is maximized over every ``kappa``
compatible with the uncertainty relation. The search runs in the frame where
the C-B block is in standard form (both local blocks isotropic, cross block
diagonal). Reductions used there:

* x/p-decoupled matrices: the worst case has vanishing off-diagonal
  ``kappa`` entries, leaving ``(k11, k22)``;
* additionally ``phi_x == phi_p``: the worst case lies on ``k11 + k22 = 0``.

Anything else falls back to a search over all four entries.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize
from scipy.special import logsumexp

from dmqkd import search
from dmqkd.channel import ChannelParams, NoiseConvention, PartialCM, apply_channel, distance_to_transmittance, output_means
from dmqkd.constellation import Constellation
from dmqkd.errors import ConfigError, DmqkdError, InfeasibleError, NumericalError
from dmqkd.source import ThreeModeSource, build_purification, split_on_beamsplitter
from dmqkd.symplectic import (
    Measurement,
    block_diag,
    epr_cm,
    extend_SA,
    holevo_bound,
    omega,
    standard_form_CB,
)

log = logging.getLogger(__name__)

DECOUPLED_TOL = 1e-8
SYMMETRIC_TOL = 1e-9


@dataclass(frozen=True)
class Numerics:
    cutoff: int | None = None
    kappa_tol: float = 1e-6
    grid_points: int = 33
    mi_points: int = 4001
    mi_points_2d: int = 601
    mi_check: bool = True
    feasibility_slack: float = 1e-10
    """Margin below zero still accepted as feasible (finite-precision slack)."""
    search_mode: str = "auto"
    """One of ``auto``, ``1d``, ``2d``, ``4d``."""

    def __post_init__(self):
        if self.kappa_tol <= 0 or self.grid_points < 3 or self.mi_points < 101:
            raise ConfigError("numerics: kappa_tol > 0, grid_points >= 3 and mi_points >= 101 required")
        if self.search_mode not in ("auto", "1d", "2d", "4d"):
            raise ConfigError(f"unknown search_mode {self.search_mode!r}")


# --------------------------------------------------------------------------- standard form


@dataclass(frozen=True)
class StandardizedCM:
    partial: PartialCM
    S_A: np.ndarray
    S_C: np.ndarray
    S_B: np.ndarray
    known: np.ndarray
    """Known blocks in the standardized frame, A-B block zero."""
    phi_x: float
    phi_p: float
    decoupled: bool
    symmetric: bool

    def gamma_std(self, kappa: np.ndarray) -> np.ndarray:
        g = self.known.copy()
        g[0:2, 4:6] = kappa
        g[4:6, 0:2] = kappa.T
        return g

    def to_original(self, kappa_std: np.ndarray) -> np.ndarray:
        """Map a standardized-frame block back: ``kappa = S_A^-1 kappa' S_B^-T``."""
        return np.linalg.solve(self.S_A, kappa_std) @ np.linalg.inv(self.S_B).T

    def to_standard(self, kappa: np.ndarray) -> np.ndarray:
        return self.S_A @ kappa @ self.S_B.T

    def gamma_original(self, kappa_std: np.ndarray) -> np.ndarray:
        return self.partial.with_kappa(self.to_original(kappa_std))


def standardize(partial: PartialCM) -> StandardizedCM:
    known = np.asarray(partial.known)
    _, S_C, S_B = standard_form_CB(known[2:6, 2:6])
    S_A = extend_SA(S_C)
    S = block_diag(S_A, S_C, S_B)
    g = S @ known @ S.T
    g = 0.5 * (g + g.T)
    scale = max(1.0, float(np.max(np.abs(g))))
    xp = np.abs(g[0::2, 1::2])
    decoupled = bool(np.max(xp) < DECOUPLED_TOL * scale)
    iso = all(abs(g[2 * m, 2 * m] - g[2 * m + 1, 2 * m + 1]) < DECOUPLED_TOL * scale for m in range(3))
    ac_sigma_z = abs(g[0, 2] + g[1, 3]) < DECOUPLED_TOL * scale
    phi_x, phi_p = float(g[2, 4]), float(g[3, 5])
    symmetric = decoupled and iso and ac_sigma_z and abs(phi_x - phi_p) < SYMMETRIC_TOL * scale
    return StandardizedCM(partial, S_A, S_C, S_B, g, phi_x, phi_p, decoupled, symmetric)


# --------------------------------------------------------------------------- feasibility


def _margin(std: StandardizedCM, kappa: np.ndarray) -> float:
    g = std.gamma_std(kappa)
    return float(np.linalg.eigvalsh(g + 1j * omega(3))[0])


def _kappa_from(mode: str, v) -> np.ndarray:
    if mode == "1d":
        return np.diag([v[0], -v[0]])
    if mode == "2d":
        return np.diag([v[0], v[1]])
    return np.array([[v[0], v[1]], [v[2], v[3]]])


def _span(std: StandardizedCM) -> float:
    # gamma >= 0 bounds every kappa entry by sqrt(gamma_ii gamma_jj)
    d = np.diag(std.known)
    return float(math.sqrt(max(d[0], d[1]) * max(d[4], d[5]))) * (1.0 + 1e-9) + 1e-12


@dataclass(frozen=True)
class KappaBounds:
    """Feasible ranges ``[center - R, center + R]`` of ``k11`` and ``k22`` (standardized frame)."""

    k11_center: float
    R_x: float
    k22_center: float
    R_p: float
    center_margin: float

    @property
    def k11_range(self) -> tuple[float, float]:
        return self.k11_center - self.R_x, self.k11_center + self.R_x

    @property
    def k22_range(self) -> tuple[float, float]:
        return self.k22_center - self.R_p, self.k22_center + self.R_p


def _line_interval(margin_at, point: np.ndarray, direction: np.ndarray, span: float, slack: float, tol: float):
    """Feasible parameter interval ``[lo, hi]`` of ``point + t * direction``; ``point`` must be feasible."""

    def ok(t):
        return margin_at(point + t * direction) >= -slack

    hi = search.bisect_boundary(ok, 0.0, 2.0 * span, tol)
    lo = search.bisect_boundary(ok, 0.0, -2.0 * span, tol)
    return lo, hi


def kappa_bounds(std: StandardizedCM, slack: float = 1e-10) -> KappaBounds:
    """Projections of the feasible ``(k11, k22)`` set (with ``k12 = k21 = 0``).

    ``min eig(gamma + i Omega)`` is concave in ``kappa``, so the projection of
    the feasible set onto one axis is where the partial maximum over the other
    axis stays non-negative. Both the centre and the edges are found by
    bisection/golden section on that concave profile.
    """
    L = _span(std)
    gtol = 1e-13 * L

    def m(a, b):
        return _margin(std, np.diag([a, b]))

    def profile(axis):
        def h(t):
            f = (lambda s: m(t, s)) if axis == 0 else (lambda s: m(s, t))
            return search.golden_max(f, -L, L, gtol)[1]

        return h

    out = []
    best_margin = -np.inf
    for axis in (0, 1):
        h = profile(axis)
        c, hc, _ = search.golden_max(h, -L, L, gtol)
        best_margin = max(best_margin, hc)
        if hc < -slack:
            raise InfeasibleError(f"no feasible kappa (best margin {hc:.3e})")
        hi = search.bisect_boundary(lambda t: h(t) >= -slack, c, L, gtol)
        lo = search.bisect_boundary(lambda t: h(t) >= -slack, c, -L, gtol)
        out.append((0.5 * (lo + hi), 0.5 * (hi - lo)))
    return KappaBounds(out[0][0], out[0][1], out[1][0], out[1][1], float(best_margin))


def minor_bounds(std: StandardizedCM) -> KappaBounds:
    """Closed-form ``k11``/``k22`` ranges from principal minors of ``gamma + i Omega``.

    Uses the 4x4 matrix over ``(x_A, p_A, x_C, p_C)`` plus the B quadrature
    being bounded; indices ``1..4`` address rows/columns of the reduced
    matrix ``Gamma`` obtained by appending B's x (for ``k11``) or p (for
    ``k22``) row and eliminating the other B quadrature. The centres hold for
    any decoupled standard form but the radii only when ``phi_x = phi_p``,
    and precision is lost when the feasible set shrinks to a point (lossless,
    noiseless channel). Kept as a cross-check; ``kappa_bounds`` is authoritative.
    """
    g = std.known
    Gam = g + 1j * omega(3)

    def minor(rows, cols):
        return np.linalg.det(Gam[np.ix_([r - 1 for r in rows], [c - 1 for c in cols])])

    # Indices follow the order (x_A, p_A, x_C, p_C) = (1, 2, 3, 4).
    G234 = minor((2, 3, 4), (2, 3, 4))
    G124_234 = minor((1, 2, 4), (2, 3, 4))
    G1234 = minor((1, 2, 3, 4), (1, 2, 3, 4))
    G124 = minor((1, 2, 4), (1, 2, 4))
    G134 = minor((1, 3, 4), (1, 3, 4))
    G134_123 = minor((1, 3, 4), (1, 2, 3))
    G123 = minor((1, 2, 3), (1, 2, 3))
    V_B = 0.5 * (g[4, 4] + g[5, 5])
    px, pp = std.phi_x, std.phi_p
    c11 = -px * G124_234 / G234
    c22 = -pp * G134_123 / G134
    Rx2 = V_B * G1234 / G234 - px**2 * (G124 * G234 - G124_234**2) / G234**2
    Rp2 = V_B * G1234 / G134 - pp**2 * (G134 * G123 - G134_123**2) / G134**2
    return KappaBounds(
        float(np.real(c11)), float(np.sqrt(max(np.real(Rx2), 0.0))),
        float(np.real(c22)), float(np.sqrt(max(np.real(Rp2), 0.0))), float("nan"),
    )


# --------------------------------------------------------------------------- supremum search


@dataclass(frozen=True)
class SupResult:
    S_sup: float
    kappa_std: np.ndarray
    kappa: np.ndarray
    iterations: int
    mode: str
    bounds: KappaBounds | None


def _resolve_mode(std: StandardizedCM, measurement: Measurement, requested: str) -> str:
    # k11 + k22 = 0 is a mirror line of the objective only if x and p are
    # interchangeable in both the state and the measurement.
    one_d = std.symmetric and measurement.symmetric
    if requested != "auto":
        if requested in ("1d", "2d") and not std.decoupled:
            raise ConfigError(f"search_mode {requested} needs an x/p-decoupled covariance matrix")
        if requested == "1d" and not one_d:
            raise ConfigError("search_mode 1d needs phi_x == phi_p and an x/p-symmetric measurement")
        return requested
    if one_d:
        return "1d"
    if std.decoupled:
        return "2d"
    return "4d"


class _Objective:
    """Holevo bound as a function of standardized-frame parameters, counting evaluations."""

    def __init__(self, std: StandardizedCM, measurement: Measurement, mode: str, slack: float):
        self.std, self.measurement, self.mode, self.slack = std, measurement, mode, slack
        self.evals = 0

    def kappa(self, v) -> np.ndarray:
        return _kappa_from(self.mode, np.atleast_1d(v))

    def margin(self, v) -> float:
        return _margin(self.std, self.kappa(v))

    def __call__(self, v) -> float:
        self.evals += 1
        k = self.kappa(v)
        if _margin(self.std, k) < -self.slack:
            return -np.inf
        return holevo_bound(self.std.gamma_std(k), self.measurement, tol=max(self.slack, 1e-8))


def sup_holevo(std: StandardizedCM, measurement, numerics: Numerics = Numerics()) -> SupResult:
    """Supremum of the Holevo bound over the feasible ``kappa`` set."""
    measurement = Measurement.parse(measurement)
    mode = _resolve_mode(std, measurement, numerics.search_mode)
    obj = _Objective(std, measurement, mode, numerics.feasibility_slack)
    if mode == "1d":
        best, bounds = _search_1d(obj, numerics)
    elif mode == "2d":
        best, bounds = _search_2d(obj, numerics)
    else:
        best, bounds = _search_4d(obj, numerics), None
    v, S = best
    k_std = obj.kappa(v)
    return SupResult(float(S), k_std, std.to_original(k_std), obj.evals, mode, bounds)


def _search_1d(obj: _Objective, numerics: Numerics):
    L = _span(obj.std)
    tol = 1e-13 * L
    c, mc, _ = search.golden_max(lambda t: obj.margin([t]), -L, L, tol)
    if mc < -numerics.feasibility_slack:
        raise InfeasibleError(f"no feasible kappa on the symmetric line (best margin {mc:.3e})")
    ok = lambda t: obj.margin([t]) >= -numerics.feasibility_slack  # noqa: E731
    hi = search.bisect_boundary(ok, c, L, tol)
    lo = search.bisect_boundary(ok, c, -L, tol)
    bounds = KappaBounds(0.5 * (lo + hi), 0.5 * (hi - lo), -0.5 * (lo + hi), 0.5 * (hi - lo), mc)
    return _grid_then_golden(lambda t: obj([t]), lo, hi, numerics), bounds


def _grid_then_golden(f, lo: float, hi: float, numerics: Numerics, n: int | None = None):
    """Coarse grid (guards against several local maxima), then golden section around the best node."""
    pts = search.grid(lo, hi, n or numerics.grid_points)
    vals = [f(t) for t in pts]
    k = int(np.argmax(vals))
    if not np.isfinite(vals[k]):
        raise InfeasibleError("every grid point is infeasible")
    a = pts[max(k - 1, 0)]
    b = pts[min(k + 1, len(pts) - 1)]
    t, val, _ = search.golden_max(f, a, b, numerics.kappa_tol)
    if vals[k] > val:
        t, val = pts[k], vals[k]
    return np.array([t]), val


def _search_2d(obj: _Objective, numerics: Numerics):
    """Nested search: outer over ``k11``, inner over the feasible ``k22`` slice.

    The feasible set can be a thin sliver whose worst case sits on its edge,
    which defeats coordinate descent in a fixed box; solving the inner
    problem on the exact slice keeps every candidate feasible.
    """
    slack = numerics.feasibility_slack
    bounds = kappa_bounds(obj.std, slack)
    L = _span(obj.std)
    mtol = 1e-13 * L

    def inner(t1):
        c2, m2, _ = search.golden_max(lambda t: obj.margin([t1, t]), -L, L, mtol)
        if m2 < -slack:
            return -np.inf, c2
        ok = lambda t: obj.margin([t1, t]) >= -slack  # noqa: E731
        hi = search.bisect_boundary(ok, c2, L, mtol)
        lo = search.bisect_boundary(ok, c2, -L, mtol)
        t2, val = _grid_then_golden(lambda t: obj([t1, t]), lo, hi, numerics, n=max(9, numerics.grid_points // 4))
        return val, float(t2[0])

    memo = {}

    def outer(t1):
        if t1 not in memo:
            memo[t1] = inner(t1)
        return memo[t1][0]

    a1, b1 = bounds.k11_range
    t1, _ = _grid_then_golden(outer, a1, b1, numerics)
    t1 = float(t1[0])
    val, t2 = memo[t1] if t1 in memo else inner(t1)
    return (np.array([t1, t2]), val), bounds


def _search_4d(obj: _Objective, numerics: Numerics):
    L = _span(obj.std)
    slack = numerics.feasibility_slack
    res = minimize(lambda v: -obj.margin(v), np.zeros(4), method="Nelder-Mead",
                   options={"xatol": 1e-12 * L, "fatol": 1e-14, "maxiter": 4000})
    x = np.asarray(res.x, dtype=float)
    if obj.margin(x) < -slack:
        raise InfeasibleError(f"no feasible kappa (best margin {obj.margin(x):.3e})")
    dirs = [np.eye(4)[i] for i in range(4)]
    for i in range(4):
        for j in range(i + 1, 4):
            for sgn in (1.0, -1.0):
                d = np.eye(4)[i] + sgn * np.eye(4)[j]
                dirs.append(d / np.linalg.norm(d))
    val = obj(x)
    n_line = max(5, numerics.grid_points // 4)
    for _ in range(100):
        improved = 0.0
        for d in dirs:
            lo, hi = _line_interval(obj.margin, x, d, L, slack, 1e-13 * L)
            pts = search.grid(lo, hi, n_line)
            vals = [obj(x + t * d) for t in pts]
            k = int(np.argmax(vals))
            a, b = pts[max(k - 1, 0)], pts[min(k + 1, n_line - 1)]
            t, v_t, _ = search.golden_max(lambda t: obj(x + t * d), a, b, numerics.kappa_tol)
            if vals[k] > v_t:
                t, v_t = pts[k], vals[k]
            if v_t > val:
                improved = max(improved, v_t - val)
                x, val = x + t * d, v_t
        if improved < 1e-12:
            break
    return x, val


# --------------------------------------------------------------------------- mutual information


def _mixture_entropy_1d(means: np.ndarray, weights: np.ndarray, var: float, n_points: int) -> float:
    sd = math.sqrt(var)
    half = float(np.max(np.abs(means))) + 10.0 * sd
    x = np.linspace(-half, half, n_points)
    z = (x[:, None] - means[None, :]) / sd
    logf = logsumexp(-0.5 * z**2, axis=1, b=weights[None, :]) - 0.5 * math.log(2 * math.pi * var)
    f = np.exp(logf)
    return float(-simpson(f * logf, x=x) / math.log(2))


def _collapse(values: np.ndarray, weights: np.ndarray, tol: float = 1e-12):
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    keep_v, keep_w = [v[0]], [w[0]]
    for a, b in zip(v[1:], w[1:]):
        if abs(a - keep_v[-1]) <= tol * max(1.0, abs(a)):
            keep_w[-1] += b
        else:
            keep_v.append(a)
            keep_w.append(b)
    return np.array(keep_v), np.array(keep_w)


def _info_1d(means: np.ndarray, probs: np.ndarray, var: float, n_points: int) -> float:
    m, w = _collapse(means, probs)
    if m.size == 1:
        return 0.0
    h = _mixture_entropy_1d(m, w, var, n_points)
    return h - 0.5 * math.log2(2 * math.pi * math.e * var)


def _separable(means: np.ndarray, probs: np.ndarray):
    """Marginals if the 2D point cloud is a full product grid with product weights, else None."""
    xs, wx = _collapse(means[:, 0], probs)
    ps, wp = _collapse(means[:, 1], probs)
    if xs.size * ps.size != probs.size:
        return None
    ix = np.searchsorted(xs, means[:, 0] - 1e-12 * np.maximum(1.0, np.abs(means[:, 0])))
    ip = np.searchsorted(ps, means[:, 1] - 1e-12 * np.maximum(1.0, np.abs(means[:, 1])))
    table = np.zeros((xs.size, ps.size))
    np.add.at(table, (ix, ip), probs)
    if np.max(np.abs(table - np.outer(wx, wp))) > 1e-12:
        return None
    return (xs, wx), (ps, wp)


def _info_2d(means: np.ndarray, probs: np.ndarray, var: float, n_points: int) -> float:
    sd = math.sqrt(var)
    half = float(np.max(np.abs(means))) + 8.0 * sd
    ax = np.linspace(-half, half, n_points)
    X, P = np.meshgrid(ax, ax, indexing="ij")
    pts = np.column_stack([X.ravel(), P.ravel()])
    logf = np.full(pts.shape[0], -np.inf)
    for k in range(means.shape[0]):
        d2 = np.sum((pts - means[k]) ** 2, axis=1)
        logf = np.logaddexp(logf, math.log(probs[k]) - 0.5 * d2 / var)
    logf -= math.log(2 * math.pi * var)
    f = np.exp(logf).reshape(X.shape)
    integrand = (f * logf.reshape(X.shape))
    h = -simpson(simpson(integrand, x=ax, axis=1), x=ax) / math.log(2)
    return float(h - math.log2(2 * math.pi * math.e * var))


def mutual_information(src: ThreeModeSource, ch: ChannelParams, measurement, n_points: int = 4001,
                       check: bool = True, n_points_2d: int = 601) -> float:
    """``I(i : H_B)`` in bits between the constellation index and Bob's outcome.

    Each conditional outcome is Gaussian with the same variance, so only the
    output entropy needs numerical integration (Simpson rule on a uniform grid
    spanning ten standard deviations beyond the outermost mean). With
    ``check`` the integral is repeated on a doubled grid and must agree to 1e-6.
    """
    measurement = Measurement.parse(measurement)
    means = output_means(src, ch)
    probs = src.constellation.probs
    var = ch.conditional_variance

    def compute(npts, npts2):
        if measurement is Measurement.HOMODYNE:
            return 0.5 * (_info_1d(means[:, 0], probs, var, npts) + _info_1d(means[:, 1], probs, var, npts))
        if measurement is Measurement.HOMODYNE_X:
            return _info_1d(means[:, 0], probs, var, npts)
        if measurement is Measurement.HOMODYNE_P:
            return _info_1d(means[:, 1], probs, var, npts)
        # heterodyne: both quadratures, each with one extra unit of vacuum noise
        sep = _separable(means, probs)
        if sep is not None:
            (xs, wx), (ps, wp) = sep
            return _info_1d(xs, wx, var + 1.0, npts) + _info_1d(ps, wp, var + 1.0, npts)
        return _info_2d(means, probs, var + 1.0, npts2)

    info = compute(n_points, n_points_2d)
    if check:
        fine = compute(2 * n_points - 1, 2 * n_points_2d - 1)
        if abs(fine - info) > 1e-6:
            raise NumericalError(f"mutual-information grid too coarse: {info:.9f} vs {fine:.9f}")
        info = fine
    return max(info, 0.0)


# --------------------------------------------------------------------------- key rate


@dataclass
class KeyRatePoint:
    label: str
    T_C: float
    eps_C: float
    beta: float
    measurement: str
    I_AB: float = float("nan")
    S_sup: float = float("nan")
    K_R: float = float("nan")
    kappa_star: list | None = None
    search_iterations: int = 0
    search_mode: str = ""
    feasible: bool = False
    distance_km: float | None = None
    convention: str = NoiseConvention.PAPER_CLONER.value
    S_physical: float = float("nan")
    """Holevo bound at the cloner's own ``kappa`` (never larger than ``S_sup``)."""
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def K_R_clamped(self) -> float:
        return max(self.K_R, 0.0) if np.isfinite(self.K_R) else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["K_R_clamped"] = self.K_R_clamped
        return d


def prepare_source(c: Constellation, eta_BS: float, cutoff: int | None = None) -> ThreeModeSource:
    return split_on_beamsplitter(build_purification(c, cutoff), eta_BS)


def key_rate(src: ThreeModeSource, ch: ChannelParams, beta: float = 0.95, measurement="homodyne",
             numerics: Numerics = Numerics(), distance_km: float | None = None) -> KeyRatePoint:
    """``K_R = beta * I_AB - sup_kappa S_BE``."""
    if not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must lie in (0, 1], got {beta!r}")
    measurement = Measurement.parse(measurement)
    partial = apply_channel(src, ch)
    std = standardize(partial)
    sup = sup_holevo(std, measurement, numerics)
    info = mutual_information(src, ch, measurement, numerics.mi_points, numerics.mi_check, numerics.mi_points_2d)
    S_phys = holevo_bound(partial.with_kappa(partial.physical_kappa), measurement)
    bounds = sup.bounds
    return KeyRatePoint(
        label=src.constellation.label,
        T_C=ch.T_C,
        eps_C=ch.eps_C,
        beta=beta,
        measurement=measurement.value,
        I_AB=info,
        S_sup=sup.S_sup,
        K_R=beta * info - sup.S_sup,
        kappa_star=sup.kappa_std.tolist(),
        search_iterations=sup.iterations,
        search_mode=sup.mode,
        feasible=True,
        distance_km=distance_km,
        convention=ch.convention.value,
        S_physical=S_phys,
        diagnostics={
            "eta_A": src.purified.eta_A,
            "V_A": src.purified.V_A,
            "V_B0": src.V_B0,
            "cutoff": src.purified.dim,
            "phi_x": std.phi_x,
            "phi_p": std.phi_p,
            "kappa_bounds": None if bounds is None else asdict(bounds),
        },
    )


def gaussian_reference(V: float, ch: ChannelParams, beta: float = 0.95, measurement="homodyne",
                       distance_km: float | None = None) -> KeyRatePoint:
    """Gaussian-modulated coherent-state protocol whose channel input has variance ``V``."""
    if not V > 1.0:
        raise ConfigError(f"Gaussian reference variance must exceed 1, got {V!r}")
    if not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must lie in (0, 1], got {beta!r}")
    measurement = Measurement.parse(measurement)
    g = epr_cm(V)
    T = ch.T_C
    g[0:2, 2:4] *= math.sqrt(T)
    g[2:4, 0:2] *= math.sqrt(T)
    V_B = ch.output_variance(V)
    g[2:4, 2:4] = V_B * np.eye(2)
    v_cond = ch.conditional_variance
    if measurement is Measurement.HETERODYNE:
        info = math.log2((V_B + 1.0) / (v_cond + 1.0))
    else:
        info = 0.5 * math.log2(V_B / v_cond)
    S = holevo_bound(g, measurement)
    return KeyRatePoint(
        label="gaussian",
        T_C=T,
        eps_C=ch.eps_C,
        beta=beta,
        measurement=measurement.value,
        I_AB=info,
        S_sup=S,
        K_R=beta * info - S,
        search_mode="none",
        feasible=True,
        distance_km=distance_km,
        convention=ch.convention.value,
        S_physical=S,
        diagnostics={"V": V},
    )


def tolerable_excess_noise(src: ThreeModeSource, d_km: float, beta: float = 0.95, tol: float = 1e-4,
                           measurement="homodyne", convention="paper_cloner", att_db_per_km: float = 0.2,
                           numerics: Numerics = Numerics(), eps_max_search: float = 10.0) -> float:
    """Largest ``eps_C`` with a positive key rate at distance ``d_km`` (bisection to ``tol``)."""

    def rate(eps):
        ch = ChannelParams.from_distance(d_km, eps, convention, att_db_per_km)
        return key_rate(src, ch, beta, measurement, numerics).K_R

    if rate(0.0) <= 0.0:
        raise NumericalError(f"no positive key rate at eps_C = 0 for d = {d_km} km")
    lo, hi = 0.0, min(0.05, eps_max_search)
    while rate(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > eps_max_search:
            raise NumericalError("key rate stays positive up to the excess-noise search limit")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rate(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class SweepSpec:
    sources: Sequence[ThreeModeSource]
    distances_km: Sequence[float] = ()
    T_values: Sequence[float] = ()
    eps_C: float = 0.01
    convention: str = "paper_cloner"
    att_db_per_km: float = 0.2
    beta: float = 0.95
    measurement: str = "homodyne"
    numerics: Numerics = Numerics()
    gaussian_V: float | None = None
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"beta must lie in (0, 1], got {self.beta!r}")
        if self.distances_km and self.T_values:
            raise ConfigError("give either distances or transmittances, not both")


def _grid_channels(spec: SweepSpec):
    if spec.distances_km:
        for d in spec.distances_km:
            T = distance_to_transmittance(d, spec.att_db_per_km)
            yield d, ChannelParams(T, spec.eps_C, spec.convention, spec.att_db_per_km)
    else:
        for T in spec.T_values:
            yield None, ChannelParams(T, spec.eps_C, spec.convention, spec.att_db_per_km)


def sweep(spec: SweepSpec) -> list[KeyRatePoint]:
    """Evaluate every (constellation, channel) pair; output order follows the inputs.

    Per-point failures are recorded in ``KeyRatePoint.error`` and the sweep continues.
    """
    jobs = []
    for src in spec.sources:
        for d, ch in _grid_channels(spec):
            jobs.append((src, d, ch))
    if spec.gaussian_V is not None:
        for d, ch in _grid_channels(spec):
            jobs.append((None, d, ch))

    def run(job):
        src, d, ch = job
        try:
            if src is None:
                return gaussian_reference(spec.gaussian_V, ch, spec.beta, spec.measurement, d)
            return key_rate(src, ch, spec.beta, spec.measurement, spec.numerics, d)
        except DmqkdError as exc:
            label = "gaussian" if src is None else src.constellation.label
            log.warning("sweep point %s d=%s T=%.6g failed: %s", label, d, ch.T_C, exc)
            return KeyRatePoint(label, ch.T_C, ch.eps_C, spec.beta, spec.measurement,
                                distance_km=d, convention=ch.convention.value, error=f"{exc.kind}: {exc}")

    if spec.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]


__all__ = [
    "KappaBounds",
    "KeyRatePoint",
    "Numerics",
    "StandardizedCM",
    "SupResult",
    "SweepSpec",
    "gaussian_reference",
    "kappa_bounds",
    "key_rate",
    "minor_bounds",
    "mutual_information",
    "prepare_source",
    "standardize",
    "sup_holevo",
    "sweep",
    "tolerable_excess_noise",
]
