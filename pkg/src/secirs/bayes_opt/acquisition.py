"""Constrained acquisition functions (minimization convention)."""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .gp import GPSurrogate, gp_predict


def beta(t: int) -> float:
    """UCB exploration weight 0.4 * log(2t + 2); t counts completed BO steps."""
    return 0.4 * np.log(2.0 * t + 2.0)


def expected_improvement(mu, var, incumbent: float) -> np.ndarray:
    """E[max(incumbent - f, 0)] for f ~ N(mu, var)."""
    mu = np.asarray(mu, dtype=float)
    sd = np.sqrt(np.maximum(var, 0.0))
    gap = incumbent - mu
    out = np.maximum(gap, 0.0)
    pos = sd > 0
    u = gap[pos] / sd[pos]
    out[pos] = gap[pos] * ndtr(u) + sd[pos] * np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)
    return out


def prob_feasible(gps, X, known=None) -> np.ndarray:
    """Product over constraints of P(g_j(x) <= 0) under each posterior.

    ``known`` holds exact constraint values (n, k) for constraints that are not
    modelled; they contribute an indicator instead of a Gaussian CDF.
    """
    X = np.atleast_2d(X)
    p = np.ones(X.shape[0])
    for gp in gps:
        mu, var = gp_predict(gp, X)
        sd = np.sqrt(var)
        with np.errstate(divide="ignore", invalid="ignore"):
            pj = np.where(sd > 0, ndtr(-mu / np.where(sd > 0, sd, 1.0)), (mu <= 0).astype(float))
        p *= pj
    if known is not None:
        p *= np.all(np.atleast_2d(known) <= 0, axis=1)
    return p


def incumbent_value(f, g1, g2) -> float:
    """Best feasible observed f, or the smallest observed f when none is feasible."""
    f = np.asarray(f, dtype=float)
    ok = (np.asarray(g1) <= 0) & (np.asarray(g2) <= 0)
    return float(np.min(f[ok])) if np.any(ok) else float(np.min(f))


def acquisition_eic(gp_f: GPSurrogate, gp_g, X, incumbent: float, known=None) -> np.ndarray:
    """EI below ``incumbent`` times the posterior feasibility probability."""
    mu, var = gp_predict(gp_f, X)
    return expected_improvement(mu, var, incumbent) * prob_feasible(gp_g, X, known)


def acquisition_cucb(gp_f: GPSurrogate, gp_g, X, t: int, delta: float = 0.05,
                     known=None) -> np.ndarray:
    """-(mu - sqrt(beta_t) sigma) where P(feasible) >= 1 - delta, -inf elsewhere."""
    mu, var = gp_predict(gp_f, X)
    score = -(mu - np.sqrt(beta(t)) * np.sqrt(var))
    pf = prob_feasible(gp_g, X, known)
    return np.where(pf >= 1.0 - delta, score, -np.inf)
