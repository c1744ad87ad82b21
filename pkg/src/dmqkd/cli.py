"""Command-line interface: ``dmqkd {eta-scan,keyrate,sweep,noise-frontier}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 some rows of a table failed (the remaining rows are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Sequence

import numpy as np

from dmqkd import __version__
from dmqkd.channel import ChannelParams, NoiseConvention
from dmqkd.config import canonical, config_hash, load_config
from dmqkd.constellation import QamSpec, calibrate_r, load_constellation, qam_constellation
from dmqkd.errors import ConfigError, DmqkdError
from dmqkd.keyrate import (
    KeyRatePoint,
    Numerics,
    SweepSpec,
    key_rate,
    prepare_source,
    sweep,
    tolerable_excess_noise,
)
from dmqkd.source import build_purification
from dmqkd.symplectic import Measurement

log = logging.getLogger("dmqkd")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4

ETA_COLUMNS = ["qam_n", "V_G", "V_A", "r", "one_minus_eta_A", "error"]
SWEEP_COLUMNS = ["distance_km", "T_C", "eps_C", "constellation", "I_AB", "S_sup", "K_R", "K_R_clamped", "error"]
FRONTIER_COLUMNS = ["distance_km", "constellation", "eps_max", "reason"]


# --------------------------------------------------------------------------- formatting


def format_value(x: Any) -> str:
    """CSV cell text; small magnitudes in scientific notation, missing values empty."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        if x == 0.0:
            return "0"
        if abs(x) < 1e-3:
            return f"{x:.9e}"
        return f"{x:.12g}"
    return str(x)


def _json_ready(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_ready(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_ready(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _json_ready(x.item())
    return x


def metadata(command: str, cfg: dict, extra: dict | None = None) -> dict:
    meta = {
        "tool": "dmqkd",
        "version": __version__,
        "command": command,
        "config_sha256": config_hash(cfg),
        "config": canonical(cfg),
    }
    if extra:
        meta.update(extra)
    return meta


def render(meta: dict, columns: list[str], rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        doc = {"metadata": meta, "rows": [{c: r.get(c) for c in columns} | r.get("_extra", {}) for r in rows]}
        return json.dumps(_json_ready(doc), indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    for key in sorted(meta):
        value = meta[key]
        text = json.dumps(_json_ready(value), sort_keys=True, separators=(",", ":")) if isinstance(value, (dict, list)) else str(value)
        buf.write(f"# {key}: {text}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# --------------------------------------------------------------------------- config helpers


def numerics_from(cfg: dict) -> Numerics:
    n = cfg["numerics"]
    try:
        return Numerics(
            cutoff=n["cutoff"],
            kappa_tol=float(n["kappa_tol"]),
            grid_points=int(n["grid_points"]),
            mi_points=int(n["mi_points"]),
            mi_points_2d=int(n["mi_points_2d"]),
            search_mode=str(n["search_mode"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad numerics section: {exc}") from None


def sources_from(cfg: dict):
    docs = cfg["constellations"]
    if not docs:
        raise ConfigError("no constellation given")
    eta_BS = float(cfg["protocol"]["eta_BS"])
    cutoff = cfg["numerics"]["cutoff"]
    return [prepare_source(load_constellation(d), eta_BS, cutoff) for d in docs]


def _floats(values, name: str) -> list[float]:
    if not isinstance(values, list):
        values = [values]
    if len(values) == 1 and isinstance(values[0], list):
        values = values[0]
    try:
        return [float(x) for x in values]
    except (TypeError, ValueError):
        raise ConfigError(f"channel.{name} must be a number or a list of numbers") from None


def channel_grid(cfg: dict):
    ch = cfg["channel"]
    d, T = ch["distances_km"], ch["T_values"]
    if d is not None and T is not None:
        raise ConfigError("give either distances or transmittances, not both")
    if d is None and T is None:
        raise ConfigError("channel section needs distances_km, distance_km, T_C or T_values")
    return ("distance", _floats(d, "distances_km")) if d is not None else ("T", _floats(T, "T_values"))


def validate_protocol(cfg: dict) -> None:
    """Reject bad protocol/channel settings before any row is computed."""
    proto, ch = cfg["protocol"], cfg["channel"]
    Measurement.parse(proto["measurement"])
    try:
        NoiseConvention(ch["convention"])
    except ValueError:
        raise ConfigError(f"unknown noise convention {ch['convention']!r}") from None
    try:
        beta, eta, eps, att = (float(proto["beta"]), float(proto["eta_BS"]), float(ch["eps_C"]),
                               float(ch["att_db_per_km"]))
    except (TypeError, ValueError):
        raise ConfigError("protocol.beta, protocol.eta_BS, channel.eps_C and channel.att_db_per_km must be numbers") from None
    if not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must lie in (0, 1], got {beta!r}")
    if not 0.0 < eta < 1.0:
        raise ConfigError(f"eta_BS must lie in (0, 1), got {eta!r}")
    if eps < 0.0 or att <= 0.0:
        raise ConfigError("eps_C must be non-negative and att_db_per_km positive")


def _channel(cfg: dict, kind: str, value: float, eps: float | None = None) -> tuple[float | None, ChannelParams]:
    ch = cfg["channel"]
    eps = float(ch["eps_C"]) if eps is None else eps
    if kind == "distance":
        return value, ChannelParams.from_distance(value, eps, ch["convention"], float(ch["att_db_per_km"]))
    return None, ChannelParams(value, eps, ch["convention"], float(ch["att_db_per_km"]))


def point_row(p: KeyRatePoint) -> dict:
    return {
        "distance_km": p.distance_km,
        "T_C": p.T_C,
        "eps_C": p.eps_C,
        "constellation": p.label,
        "I_AB": p.I_AB,
        "S_sup": p.S_sup,
        "K_R": p.K_R,
        "K_R_clamped": p.K_R_clamped,
        "error": p.error,
    }


def _gaussian_V(cfg: dict, sources) -> float | None:
    g = cfg["protocol"]["gaussian_reference"]
    if g is False or g is None:
        return None
    if g is True:
        # match the variance of the state sent into the channel
        return sources[0].V_B0 if sources else None
    try:
        return float(g)
    except (TypeError, ValueError):
        raise ConfigError("protocol.gaussian_reference must be true, false or a variance") from None


# --------------------------------------------------------------------------- commands


def cmd_eta_scan(cfg: dict, threads: int = 1) -> tuple[dict, list[str], list[dict], int]:
    scan = cfg["eta_scan"]
    cutoff = cfg["numerics"]["cutoff"]
    jobs = []
    for n in scan["qam_n"]:
        L = math.isqrt(int(n))
        if L * L != int(n) or L < 2:
            raise ConfigError(f"qam_n must be a square number >= 4, got {n!r}")
        vg = scan["V_G"]
        vgs = vg.get(n, vg.get(str(n))) if isinstance(vg, dict) else vg
        if vgs is None:
            raise ConfigError(f"eta_scan.V_G has no entry for {n}-QAM")
        vas = scan["V_A"]
        if isinstance(vas, dict):
            vas = np.linspace(float(vas["start"]), float(vas["stop"]), int(vas["num"])).tolist()
        for V_G in (vgs if isinstance(vgs, list) else [vgs]):
            for V_A in vas:
                jobs.append((int(n), L, float(V_G), float(V_A)))

    def run(job):
        n, L, V_G, V_A = job
        row = {"qam_n": n, "V_G": V_G, "V_A": V_A}
        try:
            r = calibrate_r(L, V_G, V_A)
            row["r"] = r
            src = build_purification(qam_constellation(QamSpec(L, r, V_G)), cutoff)
            row["one_minus_eta_A"] = 1.0 - src.eta_A
        except DmqkdError as exc:
            row["error"] = f"{exc.kind}: {exc}"
        return row

    rows = _map(run, jobs, threads)
    status = EXIT_PARTIAL if any(r.get("error") for r in rows) else EXIT_OK
    return metadata("eta-scan", cfg), ETA_COLUMNS, rows, status


def cmd_keyrate(cfg: dict, threads: int = 1) -> tuple[dict, list[str], list[dict], int]:
    validate_protocol(cfg)
    kind, values = channel_grid(cfg)
    if len(values) != 1:
        raise ConfigError("keyrate evaluates one channel point; use sweep for several")
    src = sources_from(cfg)[0]
    d, ch = _channel(cfg, kind, values[0])
    proto = cfg["protocol"]
    p = key_rate(src, ch, float(proto["beta"]), proto["measurement"], numerics_from(cfg), d)
    row = point_row(p)
    row["_extra"] = {
        "kappa_star": p.kappa_star,
        "search_iterations": p.search_iterations,
        "search_mode": p.search_mode,
        "feasible": p.feasible,
        "S_physical": p.S_physical,
        "diagnostics": p.diagnostics,
        "measurement": p.measurement,
        "convention": p.convention,
        "beta": p.beta,
    }
    return metadata("keyrate", cfg), SWEEP_COLUMNS, [row], EXIT_OK


def cmd_sweep(cfg: dict, threads: int = 1) -> tuple[dict, list[str], list[dict], int]:
    validate_protocol(cfg)
    kind, values = channel_grid(cfg)
    sources = sources_from(cfg)
    ch = cfg["channel"]
    proto = cfg["protocol"]
    spec = SweepSpec(
        sources=sources,
        distances_km=values if kind == "distance" else (),
        T_values=values if kind == "T" else (),
        eps_C=float(ch["eps_C"]),
        convention=ch["convention"],
        att_db_per_km=float(ch["att_db_per_km"]),
        beta=float(proto["beta"]),
        measurement=proto["measurement"],
        numerics=numerics_from(cfg),
        gaussian_V=_gaussian_V(cfg, sources),
        threads=threads,
    )
    rows = [point_row(p) for p in sweep(spec)]
    status = EXIT_PARTIAL if any(r["error"] for r in rows) else EXIT_OK
    extra = {"gaussian_reference_V": spec.gaussian_V} if spec.gaussian_V is not None else None
    return metadata("sweep", cfg, extra), SWEEP_COLUMNS, rows, status


def cmd_noise_frontier(cfg: dict, threads: int = 1) -> tuple[dict, list[str], list[dict], int]:
    validate_protocol(cfg)
    kind, values = channel_grid(cfg)
    if kind != "distance":
        raise ConfigError("noise-frontier needs channel.distances_km")
    sources = sources_from(cfg)
    ch, proto, num = cfg["channel"], cfg["protocol"], cfg["numerics"]
    numerics = numerics_from(cfg)
    tol = float(num["frontier_tol"])
    jobs = [(src, d) for src in sources for d in values]

    def run(job):
        src, d = job
        row = {"distance_km": d, "constellation": src.constellation.label}
        try:
            row["eps_max"] = tolerable_excess_noise(
                src, d, float(proto["beta"]), tol, proto["measurement"], ch["convention"],
                float(ch["att_db_per_km"]), numerics, float(num["frontier_eps_limit"]),
            )
        except DmqkdError as exc:
            row["reason"] = f"{exc.kind}: {exc}"
        return row

    rows = _map(run, jobs, threads)
    status = EXIT_PARTIAL if any(r.get("reason") for r in rows) else EXIT_OK
    return metadata("noise-frontier", cfg, {"bisection_tol": tol}), FRONTIER_COLUMNS, rows, status


def _map(fn, jobs, threads: int):
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


COMMANDS = {
    "eta-scan": (cmd_eta_scan, "1 - eta_A over QAM size, V_G and V_A", "csv"),
    "keyrate": (cmd_keyrate, "one key-rate point with full diagnostics", "json"),
    "sweep": (cmd_sweep, "key rate over a distance or transmittance grid", "csv"),
    "noise-frontier": (cmd_noise_frontier, "largest excess noise with a positive key rate", "csv"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmqkd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dmqkd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (output order is unaffected)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a dotted config key, e.g. channel.eps_C=0.02 (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    fn, _, default_format = COMMANDS[args.command]
    fmt = args.format
    try:
        cfg = load_config(args.config, args.override)
        fmt = fmt or cfg["output"]["format"] or default_format
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {fmt!r}")
        threads = args.threads if args.threads is not None else int(cfg["output"]["threads"])
        if threads < 1:
            raise ConfigError("threads must be at least 1")
        meta, columns, rows, status = fn(cfg, threads)
    except DmqkdError as exc:
        err = {"error": exc.kind, "message": str(exc), "exit_code": exc.exit_code}
        if (fmt or default_format) == "json":
            emit(json.dumps(err, indent=2, sort_keys=True) + "\n", args.out)
        else:
            sys.stderr.write(f"error [{exc.kind}]: {exc}\n")
        return exc.exit_code
    emit(render(meta, columns, rows, fmt), args.out)
    return status


if __name__ == "__main__":
    sys.exit(main())
