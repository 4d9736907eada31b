import json
from pathlib import Path

import numpy as np
import pytest

from secirs.channel import ChannelSet, Design

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracles():
    return json.loads((DATA / "oracles.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def cx(d):
    return np.asarray(d["re"]) + 1j * np.asarray(d["im"])


def oracle_instance(inst):
    """ChannelSet and Design for one frozen oracle instance."""
    M, N, K, KB = inst["dims"]
    g = cx(inst["g"]).reshape(KB, N)
    cs = ChannelSet(cx(inst["H"]), cx(inst["h"]), g, np.asarray(inst["s2"]), 1.0)
    d = Design(np.asarray(inst["theta"]), cx(inst["W"]), cx(inst["c"]))
    return cs, d


def random_instance(seed, M=4, N=8, K_H=2, K_B=1):
    """Random channels plus a generic design (nonzero everywhere)."""
    from secirs.channel import Dims, crandn, sample_channels

    r = np.random.default_rng(seed)
    cs = sample_channels(Dims(M, N, K_H, K_B), r)
    d = Design(r.uniform(0, 2 * np.pi, N), 0.4 * crandn(r, M, K_H), crandn(r, K_H))
    return cs, d


def fd_check(f, x, grad, h=1e-6):
    """Max relative error between ``grad`` and central differences of f at x.

    Complex x is treated as (Re, Im) pairs; ``grad`` is then the real
    gradient packed as d/dRe + 1j d/dIm.
    """
    x = np.asarray(x)
    num = np.zeros(x.shape, dtype=x.dtype)
    for idx in np.ndindex(x.shape):
        for unit in ((1.0, 1j) if np.iscomplexobj(x) else (1.0,)):
            xp, xm = x.copy(), x.copy()
            xp[idx] += h * unit
            xm[idx] -= h * unit
            num[idx] += (f(xp) - f(xm)) / (2 * h) * (1.0 if unit == 1.0 else 1j)
    return float(np.max(np.abs(num - grad)) / max(np.max(np.abs(num)), 1e-12))


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
