"""Entangling-cloner Gaussian channel acting on mode B0.

Two excess-noise conventions are available:

``paper_cloner``
    Eve's two-mode squeezed state has variance ``V_E = (1 + T eps) / (1 - T)``,
    giving ``gamma_B = T gamma_B0 + (1 - T) V_E I``.
``input_referred``
    The usual convention where ``eps`` is referred to the channel input:
    ``gamma_B = T (gamma_B0 - I) + I + T eps I``.

At ``T = 1`` the cloner formula is singular and ``paper_cloner`` is taken
to be the identity channel; ``input_referred`` still adds ``eps I`` there.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from dmqkd.errors import ConfigError, InfeasibleError
from dmqkd.source import ThreeModeSource
from dmqkd.symplectic import uncertainty_margin


class NoiseConvention(str, Enum):
    PAPER_CLONER = "paper_cloner"
    INPUT_REFERRED = "input_referred"


@dataclass(frozen=True)
class ChannelParams:
    T_C: float
    eps_C: float = 0.0
    convention: NoiseConvention = NoiseConvention.PAPER_CLONER
    att_db_per_km: float = 0.2

    def __post_init__(self):
        try:
            object.__setattr__(self, "convention", NoiseConvention(self.convention))
        except ValueError:
            raise ConfigError(f"unknown noise convention {self.convention!r}") from None
        if not 0.0 < self.T_C <= 1.0:
            raise ConfigError(f"T_C must lie in (0, 1], got {self.T_C!r}")
        if not self.eps_C >= 0.0:
            raise ConfigError(f"eps_C must be non-negative, got {self.eps_C!r}")
        if not self.att_db_per_km > 0.0:
            raise ConfigError(f"att_db_per_km must be positive, got {self.att_db_per_km!r}")
        if self.T_C < 1.0 and self.V_E < 1.0:
            raise ConfigError(f"Eve's state variance {self.V_E:.6g} is below shot noise")

    @classmethod
    def from_distance(cls, d_km: float, eps_C: float = 0.0, convention="paper_cloner", att_db_per_km: float = 0.2):
        return cls(distance_to_transmittance(d_km, att_db_per_km), eps_C, NoiseConvention(convention), att_db_per_km)

    @property
    def V_E(self) -> float:
        """Variance of Eve's two-mode squeezed vacuum; infinite at ``T_C = 1``."""
        T, eps = self.T_C, self.eps_C
        if T == 1.0:
            return float("inf")
        if self.convention is NoiseConvention.PAPER_CLONER:
            return (1.0 + T * eps) / (1.0 - T)
        return 1.0 + T * eps / (1.0 - T)

    @property
    def added_noise(self) -> float:
        """Noise variance the channel adds on top of ``T v_in``, ``(1 - T) V_E``."""
        T = self.T_C
        if self.convention is NoiseConvention.INPUT_REFERRED:
            return (1.0 - T) + T * self.eps_C
        if T == 1.0:
            return 0.0
        return (1.0 - T) * self.V_E

    def output_variance(self, v_in: float) -> float:
        return self.T_C * v_in + self.added_noise

    @property
    def conditional_variance(self) -> float:
        """Output variance for a single coherent input."""
        return self.output_variance(1.0)


def distance_to_transmittance(d_km: float, att_db_per_km: float = 0.2) -> float:
    if d_km < 0:
        raise ConfigError(f"distance must be non-negative, got {d_km!r}")
    return float(10.0 ** (-att_db_per_km * d_km / 10.0))


@dataclass(frozen=True)
class PartialCM:
    """Three-mode covariance after the channel with the A-B block left open.

    ``known`` holds every block except ``kappa_AB`` (rows 0-1, columns 4-5),
    which is zero there. ``physical_kappa`` is the block the simulated
    cloner actually produces; the security analysis never uses it.
    """

    known: np.ndarray
    physical_kappa: np.ndarray
    channel: ChannelParams

    def with_kappa(self, kappa: np.ndarray) -> np.ndarray:
        g = self.known.copy()
        g[0:2, 4:6] = kappa
        g[4:6, 0:2] = np.asarray(kappa).T
        return g

    @property
    def gamma_B(self) -> np.ndarray:
        return self.known[4:6, 4:6]

    @property
    def phi_CB(self) -> np.ndarray:
        return self.known[2:4, 4:6]


def apply_channel(src: ThreeModeSource, ch: ChannelParams) -> PartialCM:
    g0 = src.gamma_ACB0
    T = ch.T_C
    out = g0.copy()
    out[2:4, 4:6] = np.sqrt(T) * g0[2:4, 4:6]
    out[4:6, 2:4] = out[2:4, 4:6].T
    out[4:6, 4:6] = T * g0[4:6, 4:6] + ch.added_noise * np.eye(2)
    kappa = np.sqrt(T) * g0[0:2, 4:6]
    partial = PartialCM(known=out, physical_kappa=kappa, channel=ch)
    full = partial.with_kappa(kappa)
    if uncertainty_margin(full) < -1e-8:
        raise InfeasibleError("channel output violates the uncertainty relation")
    partial.known[0:2, 4:6] = 0.0
    partial.known[4:6, 0:2] = 0.0
    partial.known.setflags(write=False)
    return partial


def conditional_output(src: ThreeModeSource, ch: ChannelParams, i: int, quadrature: str) -> tuple[float, float]:
    """Mean and variance of Bob's ``quadrature`` ('x' or 'p') outcome given point ``i`` was sent."""
    n = src.cond_means.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"constellation index {i} out of range for {n} points")
    col = {"x": 2, "p": 3}[quadrature]
    return float(np.sqrt(ch.T_C) * src.cond_means[i, col]), ch.conditional_variance


def output_means(src: ThreeModeSource, ch: ChannelParams) -> np.ndarray:
    """Bob's conditional means, shape ``(n, 2)`` for ``(x, p)``."""
    return np.sqrt(ch.T_C) * src.cond_means[:, 2:4]
