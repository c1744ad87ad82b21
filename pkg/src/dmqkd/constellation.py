"""Coherent-state constellations at the pre-beamsplitter mode D.

Amplitudes are complex numbers ``beta`` in square-root-SNU, so the state
``|beta>`` has quadrature means ``(2 Re beta, 2 Im beta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple

import numpy as np
from scipy.optimize import brentq

from dmqkd.errors import CalibrationError, ConfigError

DUPLICATE_TOL = 1e-9
PROB_TOL = 1e-12


@dataclass(frozen=True)
class Constellation:
    points: np.ndarray
    probs: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        points = np.atleast_1d(np.asarray(self.points, dtype=complex))
        probs = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if points.ndim != 1 or points.shape != probs.shape or points.size == 0:
            raise ConfigError("constellation needs one probability per point and at least one point")
        if not np.all(np.isfinite(points)) or not np.all(np.isfinite(probs)):
            raise ConfigError("constellation contains non-finite values")
        if np.any(probs <= 0):
            raise ConfigError("constellation probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ConfigError(f"constellation probabilities sum to {probs.sum()!r}, not 1")
        gaps = np.abs(points[:, None] - points[None, :])
        np.fill_diagonal(gaps, np.inf)
        if np.any(gaps < DUPLICATE_TOL):
            i, j = np.argwhere(gaps < DUPLICATE_TOL)[0]
            raise ConfigError(f"duplicate constellation points {points[i]} and {points[j]}")
        points.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return int(self.points.size)

    @property
    def max_amplitude(self) -> float:
        return float(np.max(np.abs(self.points)))

    def scaled(self, factor: float) -> "Constellation":
        """Same probabilities, amplitudes multiplied by ``factor`` (e.g. a beamsplitter arm)."""
        return Constellation(self.points * factor, self.probs, self.label)


@dataclass(frozen=True)
class QamSpec:
    L: int
    r: float
    V_G: float
    label: str = field(default="")

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ConfigError(f"QAM side L must be a positive integer, got {self.L!r}")
        if not self.r > 0:
            raise ConfigError(f"QAM half-spacing r must be positive, got {self.r!r}")
        if not self.V_G > 0:
            raise ConfigError(f"V_G must be positive, got {self.V_G!r}")


def qam_levels(L: int) -> np.ndarray:
    """Odd integer levels ``2m - 1 - L`` for ``m = 1..L``."""
    return 2 * np.arange(1, L + 1) - 1 - L


def qam_probabilities(L: int, V_G: float) -> np.ndarray:
    """Discrete-Gaussian weights, evaluated on the unit-spacing grid whatever the actual ``r``."""
    k = qam_levels(L).astype(float)
    kx, kp = np.meshgrid(k, k, indexing="ij")
    logw = -(kx**2 + kp**2).ravel() / (2.0 * V_G)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def qam_constellation(spec: QamSpec) -> Constellation:
    """Square ``L**2``-QAM grid with half-spacing ``r``, ordered with the x-level as the slow index."""
    k = qam_levels(spec.L).astype(float)
    kx, kp = np.meshgrid(k, k, indexing="ij")
    points = spec.r * (kx + 1j * kp).ravel()
    label = spec.label or f"{spec.L**2}-QAM"
    return Constellation(points, qam_probabilities(spec.L, spec.V_G), label)


class Moments(NamedTuple):
    mean_x: float
    mean_p: float
    V_x: float
    V_p: float


def constellation_moments(c: Constellation) -> Moments:
    """Quadrature means and variances of the mixture, including the unit shot noise."""
    x = 2.0 * c.points.real
    p = 2.0 * c.points.imag
    mx = float(np.dot(c.probs, x))
    mp = float(np.dot(c.probs, p))
    vx = 1.0 + float(np.dot(c.probs, (x - mx) ** 2))
    vp = 1.0 + float(np.dot(c.probs, (p - mp) ** 2))
    return Moments(mx, mp, vx, vp)


def calibrate_r(L: int, V_G: float, target_VA: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Half-spacing ``r`` for which the QAM mixture has x-variance ``target_VA``.

    The variance grows monotonically with ``r``, so a bracketed root search
    converges. ``tol`` bounds the variance error.
    """
    if not target_VA > 1:
        raise CalibrationError(f"target V_A must exceed 1, got {target_VA!r}")
    if L < 2:
        raise CalibrationError("a single-point constellation has V_A = 1 for every r")

    def excess(r: float) -> float:
        return constellation_moments(qam_constellation(QamSpec(L, r, V_G))).V_x - target_VA

    hi = 1.0
    for _ in range(200):
        if excess(hi) > 0:
            break
        hi *= 2.0
    else:
        raise CalibrationError(f"could not bracket r for target V_A={target_VA}")
    lo = hi / 2.0
    while excess(lo) > 0 and lo > 1e-300:
        lo /= 2.0
    try:
        r, info = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=max_iter, full_output=True)
    except RuntimeError as exc:
        raise CalibrationError(str(exc)) from exc
    if not info.converged or abs(excess(r)) > tol:
        raise CalibrationError(f"r calibration missed V_A={target_VA} by {excess(r):.3e}")
    return float(r)


def load_constellation(document: Mapping[str, Any]) -> Constellation:
    """Build a constellation from a config mapping.

    Two shapes are accepted::

        {"type": "qam", "L": 16, "V_G": 11, "r": 0.3}          # or "target_VA" instead of "r"
        {"type": "custom", "points": [{"x": 1, "p": 0, "prob": 0.5}, ...], "auto_normalize": false}

    ``x`` and ``p`` are the real and imaginary parts of the amplitude at mode D.
    """
    if not isinstance(document, Mapping):
        raise ConfigError("constellation section must be a mapping")
    kind = document.get("type")
    label = document.get("label")
    if kind == "qam":
        unknown = set(document) - {"type", "L", "r", "target_VA", "V_G", "label"}
        if unknown:
            raise ConfigError(f"unknown qam keys: {sorted(unknown)}")
        try:
            L = int(document["L"])
            V_G = float(document["V_G"])
        except KeyError as exc:
            raise ConfigError(f"qam constellation missing key {exc.args[0]!r}") from None
        if ("r" in document) == ("target_VA" in document):
            raise ConfigError("qam constellation needs exactly one of 'r' and 'target_VA'")
        if "r" in document:
            r = float(document["r"])
        else:
            r = calibrate_r(L, V_G, float(document["target_VA"]))
        return qam_constellation(QamSpec(L, r, V_G, label or ""))
    if kind == "custom":
        unknown = set(document) - {"type", "points", "auto_normalize", "label"}
        if unknown:
            raise ConfigError(f"unknown custom-constellation keys: {sorted(unknown)}")
        rows = document.get("points")
        if not isinstance(rows, (list, tuple)) or not rows:
            raise ConfigError("custom constellation needs a non-empty 'points' list")
        try:
            points = np.array([complex(float(row["x"]), float(row["p"])) for row in rows])
            probs = np.array([float(row["prob"]) for row in rows])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad custom point entry: {exc}") from None
        if np.any(probs <= 0):
            raise ConfigError("custom constellation probabilities must be strictly positive")
        total = probs.sum()
        if abs(total - 1.0) > PROB_TOL:
            if not document.get("auto_normalize", False):
                raise ConfigError(f"probabilities sum to {total!r}; set auto_normalize to rescale")
            probs = probs / total
        return Constellation(points, probs, label or f"custom-{len(rows)}")
    raise ConfigError(f"unknown constellation type {kind!r} (expected 'qam' or 'custom')")
