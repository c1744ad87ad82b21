"""Asymptotic key rates for discrete-modulated CV-QKD with a three-mode entangled source."""

from dmqkd.constellation import Constellation, QamSpec, calibrate_r, load_constellation, qam_constellation
from dmqkd.channel import ChannelParams, apply_channel, distance_to_transmittance
from dmqkd.errors import (
    CalibrationError,
    ConfigError,
    CutoffError,
    DmqkdError,
    InfeasibleError,
    NumericalError,
)
from dmqkd.keyrate import (
    KeyRatePoint,
    Numerics,
    SweepSpec,
    gaussian_reference,
    key_rate,
    prepare_source,
    sweep,
    tolerable_excess_noise,
)
from dmqkd.source import build_purification, split_on_beamsplitter

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ChannelParams",
    "ConfigError",
    "Constellation",
    "CutoffError",
    "DmqkdError",
    "InfeasibleError",
    "KeyRatePoint",
    "NumericalError",
    "Numerics",
    "QamSpec",
    "SweepSpec",
    "apply_channel",
    "build_purification",
    "calibrate_r",
    "distance_to_transmittance",
    "gaussian_reference",
    "key_rate",
    "load_constellation",
    "prepare_source",
    "qam_constellation",
    "split_on_beamsplitter",
    "sweep",
    "tolerable_excess_noise",
]
