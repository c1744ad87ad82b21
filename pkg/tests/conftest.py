from __future__ import annotations

import numpy as np
import pytest

from dmqkd.constellation import QamSpec, calibrate_r, qam_constellation
from dmqkd.keyrate import prepare_source

# QAM shaping parameters that minimize 1 - eta_A at V_A = 5
QAM_AT_VA5 = {4: 4.5, 8: 6.0, 16: 11.0}
ETA_BS = 0.9

_sources: dict = {}


def qam(L: int, V_G: float, V_A: float, label: str | None = None):
    return qam_constellation(QamSpec(L, calibrate_r(L, V_G, V_A), V_G, label or f"{L * L}-QAM"))


def qam_source(L: int, V_G: float | None = None, V_A: float = 5.0, eta_BS: float = ETA_BS):
    """Cached three-mode source; building the 256-QAM purification is the slow part."""
    V_G = QAM_AT_VA5[L] if V_G is None else V_G
    key = (L, V_G, V_A, eta_BS)
    if key not in _sources:
        _sources[key] = prepare_source(qam(L, V_G, V_A), eta_BS)
    return _sources[key]


@pytest.fixture(scope="session")
def qam_sources():
    return {L: qam_source(L) for L in (4, 8, 16)}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance results are collected here and printed once at the end of the run.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
