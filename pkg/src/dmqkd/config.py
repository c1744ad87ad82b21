"""Run configuration: YAML document, defaults and ``KEY=VALUE`` overrides.

A config has up to six sections::

    constellations:        # or a single mapping under ``constellation``
      - {type: qam, L: 16, V_G: 11, target_VA: 5, label: 256-QAM}
    channel:
      distances_km: [0, 10, 25, 50]   # or distance_km / T_C / T_values
      eps_C: 0.01
      convention: paper_cloner        # or input_referred
      att_db_per_km: 0.2
    protocol: {beta: 0.95, measurement: homodyne, eta_BS: 0.9, gaussian_reference: false}
    numerics: {cutoff: null, kappa_tol: 1.0e-6, grid_points: 33, mi_points: 4001, ...}
    eta_scan: {qam_n: [16, 64, 256], V_G: {16: [3, 4.5]}, V_A: [3, 5]}
    output: {format: csv, threads: 1}
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from dmqkd.errors import ConfigError

DEFAULTS: dict[str, Any] = {
    "constellations": [],
    "channel": {
        "distances_km": None,
        "T_values": None,
        "eps_C": 0.01,
        "convention": "paper_cloner",
        "att_db_per_km": 0.2,
    },
    "protocol": {
        "beta": 0.95,
        "measurement": "homodyne",
        "eta_BS": 0.9,
        "gaussian_reference": False,
    },
    "numerics": {
        "cutoff": None,
        "kappa_tol": 1e-6,
        "grid_points": 33,
        "mi_points": 4001,
        "mi_points_2d": 601,
        "search_mode": "auto",
        "frontier_tol": 1e-4,
        "frontier_eps_limit": 10.0,
    },
    "eta_scan": {
        "qam_n": [16, 64, 256],
        "V_G": {16: [3.0, 4.5], 64: [5.0, 6.0], 256: [8.0, 11.0]},
        "V_A": [3.0, 5.0],
    },
    "output": {"format": None, "threads": 1},
}

# Keys that change how a run executes but never what it computes.
EXECUTION_KEYS = (("output", "threads"), ("output", "format"))


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "V_G":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _normalize(doc: dict) -> dict:
    doc = dict(doc)
    if "constellation" in doc:
        if "constellations" in doc:
            raise ConfigError("give either 'constellation' or 'constellations', not both")
        doc["constellations"] = [doc.pop("constellation")]
    ch = doc.get("channel")
    if isinstance(ch, dict):
        ch = dict(ch)
        if "distance_km" in ch:
            ch["distances_km"] = [ch.pop("distance_km")]
        if "T_C" in ch:
            ch["T_values"] = [ch.pop("T_C")]
        doc["channel"] = ch
    return doc


def apply_override(doc: dict, item: str) -> dict:
    """Set a dotted key from ``KEY=VALUE``; the value is parsed as YAML."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form KEY=VALUE")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {item!r}: {exc}") from None
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override {item!r} has an empty key")
    doc = copy.deepcopy(doc)
    node = doc
    for p in parts[:-1]:
        if isinstance(node, list):
            try:
                node = node[int(p)]
            except (ValueError, IndexError):
                raise ConfigError(f"override {item!r}: bad list index {p!r}") from None
            continue
        node = node.setdefault(p, {})
        if not isinstance(node, (dict, list)):
            raise ConfigError(f"override {item!r}: {p!r} is not a section")
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError(f"override {item!r}: bad list index {last!r}") from None
    else:
        node[last] = value
    return doc


def load_config(path: str | Path | None = None, overrides: list[str] = ()) -> dict:
    """Read ``path`` (YAML or JSON), apply overrides and fill in defaults."""
    doc: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a mapping")
    doc = _normalize(doc)
    for item in overrides:
        doc = _normalize(apply_override(doc, item))
    cfg = _merge(DEFAULTS, doc)
    if not isinstance(cfg["constellations"], list):
        raise ConfigError("'constellations' must be a list")
    return cfg


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def canonical(cfg: dict) -> dict:
    """Config without execution-only keys, JSON-ready."""
    out = copy.deepcopy(cfg)
    for section, key in EXECUTION_KEYS:
        out.get(section, {}).pop(key, None)
    return _plain(out)


def config_hash(cfg: dict) -> str:
    text = json.dumps(canonical(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
