"""Constrained Bayesian optimization over a latent box."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from ..channel import Design, Dims, Weights
from .acquisition import acquisition_cucb, acquisition_eic, incumbent_value, prob_feasible
from .codec import (LatentCodec, RayleighSampler, decode, decode_batch, default_latent_dim,
                    design_kernel_spec, feature_dim, latent_features, mc_objective)
from .gp import GPSurrogate, KernelSpec, gp_fit, information_gain

# observed constraint values within this of zero count as satisfied (roundoff
# from the power rescaling lands a hair above the boundary)
FEAS_TOL = 1e-9


@dataclass
class BoConfig:
    T: int = 60  # total evaluations, initial design included
    n_init: int = 10
    acquisition: str = "eic"  # "eic" | "cucb"
    box: float = 3.0
    n_candidates: int = 1024
    n_refine: int = 20
    refine_radius: float = 0.1  # fraction of the box half-width
    local_frac: float = 0.25  # share of candidates drawn around the best points
    refit_every: int = 10  # full multi-start refit period; warm starts otherwise
    delta: float = 0.05  # constrained-UCB gate
    analytic_g1: bool = False

    def __post_init__(self):
        if not self.T > self.n_init >= 2:
            raise ValueError(f"need T > n_init >= 2, got T={self.T}, n_init={self.n_init}")
        if self.acquisition not in ("eic", "cucb"):
            raise ValueError(f"unknown acquisition {self.acquisition!r}")
        if self.box <= 0 or self.n_candidates < 1 or self.n_refine < 0:
            raise ValueError("box, n_candidates, n_refine out of range")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class BoState:
    Z: np.ndarray
    f: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    t: int
    acquisition: str
    incumbent: np.ndarray | None = None
    hypers: dict = field(default_factory=dict)

    def feasible_mask(self) -> np.ndarray:
        return (self.g1 <= FEAS_TOL) & (self.g2 <= FEAS_TOL)


@dataclass
class BoTrace:
    t: list = field(default_factory=list)
    f: list = field(default_factory=list)
    g1: list = field(default_factory=list)
    g2: list = field(default_factory=list)
    feasible: list = field(default_factory=list)
    best_feasible: list = field(default_factory=list)  # inf until a feasible point exists
    info_gain: list = field(default_factory=list)  # nan for the initial design

    def rows(self):
        return list(zip(self.t, self.f, self.g1, self.g2, self.feasible,
                        self.best_feasible, self.info_gain))


@dataclass
class BoResult:
    z: np.ndarray
    f: float
    feasible: bool
    state: BoState
    trace: BoTrace


def latin_hypercube(rng: np.random.Generator, n: int, d: int, box: float) -> np.ndarray:
    u = qmc.LatinHypercube(d=d, seed=rng).random(n)
    return box * (2.0 * u - 1.0)


def _fit(X, y, spec, prev: GPSurrogate | None, full: bool) -> GPSurrogate:
    if prev is None or full:
        return gp_fit(X, y, spec)
    return gp_fit(X, y, spec, init=prev.hyper)


def constrained_bo(evaluate: Callable, dim: int, config: BoConfig, rng: np.random.Generator,
                   features: Callable | None = None, spec: KernelSpec | None = None,
                   g1_exact: Callable | None = None) -> BoResult:
    """Minimize f(z) s.t. g1(z) <= 0, g2(z) <= 0 over the box [-B, B]^dim.

    ``evaluate(z) -> (f, g1, g2)`` may be noisy. Surrogates are fitted on
    ``features(Z)`` (identity by default) with kernel ``spec``. When
    ``config.analytic_g1`` is set, ``g1_exact(Z)`` replaces the g1 surrogate.
    """
    features = features or (lambda Z: np.atleast_2d(Z))
    if spec is None:
        spec = KernelSpec.ard(dim)
    if config.analytic_g1 and g1_exact is None:
        raise ValueError("analytic_g1 needs g1_exact")
    B = config.box
    trace = BoTrace()
    Z = latin_hypercube(rng, config.n_init, dim, B)
    obs = [tuple(float(v) for v in evaluate(z)) for z in Z]
    f, g1, g2 = (np.array(c) for c in zip(*obs))
    best = np.inf
    for i in range(config.n_init):
        ok = g1[i] <= FEAS_TOL and g2[i] <= FEAS_TOL
        if ok:
            best = min(best, f[i])
        _record(trace, i + 1, f[i], g1[i], g2[i], ok, best, np.nan)

    gps: dict[str, GPSurrogate | None] = {"f": None, "g1": None, "g2": None}
    for step in range(config.T - config.n_init):
        full = step % config.refit_every == 0
        X = features(Z)
        gps["f"] = _fit(X, f, spec, gps["f"], full)
        if not config.analytic_g1:
            gps["g1"] = _fit(X, g1, spec, gps["g1"], full)
        gps["g2"] = _fit(X, g2, spec, gps["g2"], full)
        cons = [gps["g2"]] if config.analytic_g1 else [gps["g1"], gps["g2"]]
        inc = incumbent_value(f, g1 - FEAS_TOL, g2 - FEAS_TOL)

        mode = [config.acquisition]

        def score(C):
            Xc = features(C)
            known = g1_exact(C)[:, None] if config.analytic_g1 else None
            if mode[0] == "eic":
                return acquisition_eic(gps["f"], cons, Xc, inc, known)
            if mode[0] == "cucb":
                return acquisition_cucb(gps["f"], cons, Xc, step, config.delta, known)
            return prob_feasible(cons, Xc, known)

        cand = _candidates(rng, Z, f, g1, g2, config, dim)
        s = score(cand)
        # fallbacks are chosen once on the candidate set so that the local
        # refinement compares scores on a single scale
        if mode[0] == "eic" and not np.max(s) > 0:  # improvement mass underflowed
            mode[0] = "cucb"
            s = score(cand)
        if not np.any(np.isfinite(s)):  # nothing passes the UCB gate
            mode[0] = "pf"
            s = score(cand)
        k = int(np.argmax(s))
        z_new, s_best = cand[k], s[k]
        radius = config.refine_radius * B
        for _ in range(config.n_refine):
            prop = np.clip(z_new + radius * rng.standard_normal(dim), -B, B)
            sp = score(prop[None])[0]
            if sp > s_best:
                z_new, s_best = prop, sp
            else:
                radius *= 0.7
        fv, g1v, g2v = (float(v) for v in evaluate(z_new))
        Z = np.vstack([Z, z_new])
        f, g1, g2 = np.append(f, fv), np.append(g1, g1v), np.append(g2, g2v)
        ok = g1v <= FEAS_TOL and g2v <= FEAS_TOL
        if ok:
            best = min(best, fv)
        _record(trace, Z.shape[0], fv, g1v, g2v, ok, best, information_gain(gps["f"]))

    state = BoState(Z, f, g1, g2, config.T, config.acquisition,
                    hypers={k: v.hyper for k, v in gps.items() if v is not None})
    mask = state.feasible_mask()
    if np.any(mask):
        idx = np.flatnonzero(mask)[np.argmin(f[mask])]
        feasible = True
    else:
        viol = np.maximum(g1, 0.0) + np.maximum(g2, 0.0)
        idx = int(np.argmin(viol))
        feasible = False
    state.incumbent = Z[idx].copy()
    return BoResult(Z[idx].copy(), float(f[idx]), feasible, state, trace)


def _record(trace, t, f, g1, g2, ok, best, ig):
    trace.t.append(t)
    trace.f.append(float(f))
    trace.g1.append(float(g1))
    trace.g2.append(float(g2))
    trace.feasible.append(bool(ok))
    trace.best_feasible.append(float(best))
    trace.info_gain.append(float(ig))


def _candidates(rng, Z, f, g1, g2, config: BoConfig, dim: int) -> np.ndarray:
    """Uniform draws over the box plus Gaussian draws around the best observed points."""
    B = config.box
    n_loc = int(round(config.local_frac * config.n_candidates))
    n_uni = config.n_candidates - n_loc
    out = [rng.uniform(-B, B, size=(n_uni, dim))]
    if n_loc:
        viol = np.maximum(g1, 0.0) + np.maximum(g2, 0.0)
        order = np.lexsort((f, viol))[:5]  # feasible first, then by f
        centers = Z[order[rng.integers(0, order.size, n_loc)]]
        sd = config.refine_radius * B * rng.uniform(0.1, 2.0, size=(n_loc, 1))
        out.append(np.clip(centers + sd * rng.standard_normal((n_loc, dim)), -B, B))
    return np.vstack(out)


# ---------------------------------------------------------------------------
# design search


@dataclass
class DesignBoConfig:
    bo: BoConfig = field(default_factory=BoConfig)
    n_mc: int = 32
    d: int | None = None  # latent dimension; None -> min(D, ceil(8 eps^-2 ln T))
    eps: float = 0.5
    codec_seed: int = 0

    def __post_init__(self):
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")


def run_bo(dims: Dims, weights: Weights, config: DesignBoConfig, rng: np.random.Generator,
           sampler=None) -> tuple[Design, BoResult, LatentCodec]:
    """Search designs without channel knowledge, using only Monte Carlo evaluations.

    ``sampler`` supplies channel draws (``RayleighSampler`` by default). The
    projection is drawn from ``config.codec_seed``; evaluation noise and the
    search itself use ``rng``.
    """
    D = feature_dim(dims)
    d = config.d or default_latent_dim(D, config.bo.T, config.eps)
    codec = LatentCodec.create(dims, d, np.random.default_rng(config.codec_seed), weights.p_max)
    sampler = sampler or RayleighSampler(dims)

    def evaluate(z):
        return mc_objective(z, codec, weights, config.n_mc, rng, sampler)[:3]

    def g1_exact(Z):
        _, W, _ = decode_batch(codec, Z)
        return np.sum(np.abs(W) ** 2, axis=(1, 2)) - weights.p_max

    res = constrained_bo(evaluate, d, config.bo, rng,
                         features=lambda Z: latent_features(codec, Z),
                         spec=design_kernel_spec(dims), g1_exact=g1_exact)
    return decode(codec, res.z), res, codec
