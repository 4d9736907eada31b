"""Augmented-Lagrangian alternating projected gradient for the secure
sum-MSE design, plus closed-form precoders and the sum-MSE lower bound.

Gradient conventions
--------------------
``grad_W`` and ``grad_theta`` are real gradients: for complex ``W`` the
returned matrix is ``dL/dRe(W) + 1j * dL/dIm(W)`` (twice the Wirtinger
derivative with respect to ``conj(W)``). ``grad_c`` is the Wirtinger
derivative ``dL/dconj(c)`` itself, i.e. half the real gradient. Both are
descent directions: ``x <- x - step * grad``.

Penalty form
------------
With ``inequality=True`` (default) each constraint contributes
``(max(0, lam_i + rho*g_i)**2 - lam_i**2) / (2*rho)``. Wherever
``lam_i + rho*g_i >= 0`` this equals ``lam_i*g_i + rho/2*g_i**2``; below that
it stops rewarding slack. Its gradient multiplies ``grad g_i`` by
``max(0, lam_i + rho*g_i)``. ``inequality=False`` evaluates the plain
``lam_i*g_i + rho/2*g_i**2`` everywhere.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    TWO_PI,
    ChannelSet,
    Design,
    Weights,
    constraint_values,
    crandn,
    effective_channels,
    mmse_equalizer,
    objective,
    sum_mse,
    wrap_phase,
)

log = logging.getLogger(__name__)


@dataclass
class DualState:
    lambda1: float = 0.0  # leakage multiplier
    lambda2: float = 0.0  # power multiplier
    rho: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("multipliers must be nonnegative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class StepSchedule:
    gamma0: float = 0.1
    alpha: float = 0.05

    def __call__(self, t: int) -> float:
        return self.gamma0 / (1.0 + self.alpha * t)


@dataclass
class CsiOracle:
    """Channel knowledge available to the optimizer.

    ``epsilon == 0`` returns the true channels. Otherwise every call to
    :meth:`view` returns a fresh estimate
    ``sqrt(1 - eps^2) * X + eps * E`` with ``E`` i.i.d. CN(0, 1) for each of
    ``H``, ``h`` and ``g``.
    """

    cs: ChannelSet
    epsilon: float = 0.0
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.epsilon > 0 and self.rng is None:
            raise ValueError("noisy CSI needs an rng")

    @property
    def exact(self) -> bool:
        return self.epsilon == 0.0

    def view(self) -> ChannelSet:
        if self.exact:
            return self.cs
        return perturb_channels(self.cs, self.epsilon, self.rng)


def perturb_channels(cs: ChannelSet, epsilon: float, rng: np.random.Generator) -> ChannelSet:
    a = np.sqrt(1.0 - epsilon ** 2)
    return ChannelSet(
        a * cs.H + epsilon * crandn(rng, *cs.H.shape),
        a * cs.h + epsilon * crandn(rng, *cs.h.shape),
        a * cs.g + epsilon * crandn(rng, *cs.g.shape),
        cs.sigma2_user, cs.sigma2_eav,
    )


# ---------------------------------------------------------------------------
# augmented Lagrangian and its gradients


def _penalty(g: float, lam: float, rho: float, inequality: bool) -> float:
    if inequality:
        return (max(0.0, lam + rho * g) ** 2 - lam ** 2) / (2.0 * rho)
    return lam * g + 0.5 * rho * g ** 2


def effective_multipliers(cs: ChannelSet, d: Design, w: Weights, dual: DualState,
                          inequality: bool = True) -> tuple[float, float]:
    """Multipliers that scale grad g1 and grad g2 in the augmented Lagrangian."""
    g1, g2 = constraint_values(cs, d, w)
    m1 = dual.lambda1 + dual.rho * g1
    m2 = dual.lambda2 + dual.rho * g2
    if inequality:
        return max(0.0, m1), max(0.0, m2)
    return m1, m2


def augmented_lagrangian(cs: ChannelSet, d: Design, w: Weights, dual: DualState,
                         inequality: bool = True) -> float:
    g1, g2 = constraint_values(cs, d, w)
    return (objective(cs, d, w)
            + _penalty(g1, dual.lambda1, dual.rho, inequality)
            + _penalty(g2, dual.lambda2, dual.rho, inequality))


def grad_W(cs: ChannelSet, d: Design, w: Weights, dual: DualState,
           inequality: bool = True) -> np.ndarray:
    H_eff, G_eff = effective_channels(cs, d.theta)
    m1, m2 = effective_multipliers(cs, d, w, dual, inequality)
    W, c = d.W, d.c
    g = 2.0 * H_eff @ ((np.abs(c) ** 2)[:, None] * (H_eff.conj().T @ W))
    g -= 2.0 * H_eff * np.conj(c)[None, :]
    g += 2.0 * (w.mu + m2) * W
    if G_eff.shape[1]:
        g += 2.0 * (w.lam + m1) * (G_eff @ (G_eff.conj().T @ W))
    return g


def grad_c(cs: ChannelSet, d: Design, w: Weights | None = None,
           dual: DualState | None = None) -> np.ndarray:
    """dL/dconj(c_k) = c_k (||h_eff,k^H W||^2 + sigma_k^2) - conj(h_eff,k^H w_k)."""
    H_eff, _ = effective_channels(cs, d.theta)
    A = H_eff.conj().T @ d.W
    total = np.sum(np.abs(A) ** 2, axis=1) + cs.sigma2_user
    return d.c * total - np.conj(np.diag(A))


def grad_theta(cs: ChannelSet, d: Design, w: Weights, dual: DualState,
               inequality: bool = True) -> np.ndarray:
    u = np.exp(1j * d.theta)
    HW = cs.H @ d.W  # (N, K_H)
    A = (cs.h.conj() * u) @ HW  # A[k, j] = h_k^H Phi H w_j
    c2 = np.abs(d.c) ** 2
    ju = 1j * u
    # d A[k, j] / d theta_n = j u_n conj(h[k, n]) HW[n, j]
    inner = np.sum(c2[None, :] * cs.h.conj().T * (HW @ A.conj().T), axis=1)
    lin = np.sum(d.c[None, :] * cs.h.conj().T * HW, axis=1)
    grad = 2.0 * np.real(ju * inner) - 2.0 * np.real(ju * lin)
    if cs.g.shape[0]:
        m1, _ = effective_multipliers(cs, d, w, dual, inequality)
        B = (cs.g.conj() * u) @ HW
        leak = np.sum(cs.g.conj().T * (HW @ B.conj().T), axis=1)
        grad += 2.0 * (w.lam + m1) * np.real(ju * leak)
    return grad


def project_phases(x, previous=None) -> np.ndarray:
    """Map raw phases (real input) or reflection coefficients (complex input)
    onto the unit-modulus set, returned as phases in [0, 2*pi).

    A zero-magnitude complex entry keeps the corresponding ``previous`` phase
    (0 when no previous phase is given).
    """
    x = np.asarray(x)
    if np.iscomplexobj(x):
        theta = np.angle(x)
        zero = x == 0
        if np.any(zero):
            prev = np.zeros(x.shape) if previous is None else np.asarray(previous, dtype=float)
            theta = np.where(zero, prev, theta)
        return wrap_phase(theta)
    return wrap_phase(x)


def dual_update(dual: DualState, g1: float, g2: float) -> DualState:
    return DualState(max(0.0, dual.lambda1 + dual.rho * g1),
                     max(0.0, dual.lambda2 + dual.rho * g2), dual.rho)


def project_power(W: np.ndarray, p_max: float) -> np.ndarray:
    p = float(np.sum(np.abs(W) ** 2))
    if p > p_max:
        return W * np.sqrt(p_max / p)
    return W


# ---------------------------------------------------------------------------
# Algorithm driver


@dataclass
class OptTrace:
    L_aug: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    sum_mse: list = field(default_factory=list)
    g1: list = field(default_factory=list)
    g2: list = field(default_factory=list)
    lambda1: list = field(default_factory=list)
    lambda2: list = field(default_factory=list)
    step: list = field(default_factory=list)
    dW: list = field(default_factory=list)
    dc: list = field(default_factory=list)
    dtheta: list = field(default_factory=list)
    pg_norm: list = field(default_factory=list)
    # L_aug before the W step and after each of the W, c and theta steps
    primal_path: list = field(default_factory=list)
    stopped: str = ""

    def __len__(self):
        return len(self.L_aug)

    def rows(self) -> list[dict]:
        keys = ["L_aug", "objective", "sum_mse", "g1", "g2", "lambda1", "lambda2", "step"]
        return [dict(iteration=i + 1, **{k: getattr(self, k)[i] for k in keys})
                for i in range(len(self))]


class NonFiniteError(FloatingPointError):
    def __init__(self, msg: str, trace: OptTrace):
        super().__init__(msg)
        self.trace = trace


@dataclass
class AltOptConfig:
    T_max: int = 100
    tol: float = 1e-3
    patience: int = 3
    schedule: StepSchedule = field(default_factory=StepSchedule)
    c_update: str = "closed_form"  # or "gradient"; "fixed" keeps c (C = I mode)
    backtrack: bool = True
    max_halvings: int = 40
    project_power: bool = True
    accel: bool = False
    inequality: bool = True
    noisy_smoothing: float = 0.8  # EMA weight on the stall statistic under noisy CSI


def initial_design(cs: ChannelSet, w: Weights, rng: np.random.Generator,
                   feasible: bool = False) -> Design:
    """Random phases, column-normalized matched filter at P_max / K_H per user,
    MMSE equalizers. ``feasible=True`` shrinks W until leakage <= gamma_leak / 2."""
    N, M = cs.H.shape
    K = cs.h.shape[0]
    theta = rng.uniform(0.0, TWO_PI, N)
    H_eff, _ = effective_channels(cs, theta)
    norms = np.linalg.norm(H_eff, axis=0)
    W = H_eff / np.where(norms > 0, norms, 1.0) * np.sqrt(w.p_max / K)
    d = Design(theta, W, np.zeros(K))
    if feasible:
        g1, _ = constraint_values(cs, d, w)
        leak = g1 + w.gamma_leak
        if leak > 0.5 * w.gamma_leak:
            d.W = d.W * np.sqrt(0.5 * w.gamma_leak / leak)
    d.c = mmse_equalizer(cs, d)
    return d


def _extrapolate(x, x_prev, beta, periodic=False):
    diff = x - x_prev
    if periodic:
        diff = np.angle(np.exp(1j * diff))
    return x + beta * diff


def run_alternating(csi: ChannelSet | CsiOracle, init: Design, w: Weights,
                    dual0: DualState | None = None, config: AltOptConfig | None = None,
                    callback=None) -> tuple[Design, DualState, OptTrace]:
    """Alternating (W, c) then theta projected-gradient steps with dual ascent.

    Every block step is evaluated on a channel view from the oracle (fresh per
    block in noisy mode). With ``backtrack=True`` the schedule value is the
    largest trial step and is halved until the augmented Lagrangian on that
    view does not increase. The trace always reports values on the true
    channels.
    """
    cfg = config or AltOptConfig()
    oracle = csi if isinstance(csi, CsiOracle) else CsiOracle(csi)
    cs_true = oracle.cs
    dual = dual0 or DualState()
    d = init.copy()
    d.theta = wrap_phase(d.theta)
    if cfg.project_power:
        d.W = project_power(d.W, w.p_max)
    trace = OptTrace()
    prev = d.copy()  # previous iterate, for extrapolation
    small = 0
    # stall detection sees only what the optimizer knows: the true objective
    # with exact CSI, otherwise an exponential average over estimated views
    F_prev = objective(oracle.view(), d, w)

    def L(view, design):
        return augmented_lagrangian(view, design, w, dual, cfg.inequality)

    def step_block(view, make, base_val):
        """Try make(s) for s = gamma, gamma/2, ...; return (design, value, s)."""
        s = gamma
        for _ in range(cfg.max_halvings + 1):
            cand = make(s)
            val = L(view, cand)
            if not cfg.backtrack or val <= base_val:
                return cand, val, s
            s *= 0.5
        return None, base_val, 0.0

    for t in range(cfg.T_max):
        gamma = cfg.schedule(t)
        beta = t / (t + 3.0) if cfg.accel else 0.0
        L0 = L(cs_true, d)
        path = [L0]

        # W block
        view = oracle.view()
        base = L(view, d)
        anchors = [d]
        if beta > 0:
            y = d.copy()
            y.W = _extrapolate(d.W, prev.W, beta)
            anchors.insert(0, y)
        new = None
        for anchor in anchors:
            G = grad_W(view, anchor, w, dual, cfg.inequality)

            def make_W(s, anchor=anchor, G=G):
                cand = d.copy()
                Wn = anchor.W - s * G
                cand.W = project_power(Wn, w.p_max) if cfg.project_power else Wn
                return cand

            new, _, sW = step_block(view, make_W, base)
            if new is not None:
                break
        d_W = new if new is not None else d
        dW = float(np.linalg.norm(d_W.W - d.W))
        path.append(L(cs_true, d_W))

        # c block
        view = oracle.view()
        d_c = d_W
        if cfg.c_update == "closed_form":
            d_c = d_W.copy()
            d_c.c = mmse_equalizer(view, d_W)
            if cfg.backtrack and L(view, d_c) > L(view, d_W):
                d_c = d_W
        elif cfg.c_update == "gradient":
            base = L(view, d_W)
            Gc = grad_c(view, d_W)

            def make_c(s):
                cand = d_W.copy()
                cand.c = d_W.c - s * Gc
                return cand

            new, _, _ = step_block(view, make_c, base)
            d_c = new if new is not None else d_W
        elif cfg.c_update != "fixed":
            raise ValueError(f"unknown c_update {cfg.c_update!r}")
        dc = float(np.linalg.norm(d_c.c - d_W.c))
        path.append(L(cs_true, d_c))

        # theta block
        view = oracle.view()
        base = L(view, d_c)
        anchors = [d_c]
        if beta > 0:
            y = d_c.copy()
            y.theta = _extrapolate(d_c.theta, prev.theta, beta, periodic=True)
            anchors.insert(0, y)
        new = None
        for anchor in anchors:
            Gt = grad_theta(view, anchor, w, dual, cfg.inequality)

            def make_t(s, anchor=anchor, Gt=Gt):
                cand = d_c.copy()
                cand.theta = project_phases(anchor.theta - s * Gt)
                return cand

            new, _, _ = step_block(view, make_t, base)
            if new is not None:
                break
        d_t = new if new is not None else d_c
        dth = float(np.linalg.norm(np.angle(np.exp(1j * (d_t.theta - d_c.theta)))))
        path.append(L(cs_true, d_t))

        prev, d = d, d_t

        # dual ascent on the (estimated) constraint values
        view = oracle.view()
        g1v, g2v = constraint_values(view, d, w)
        dual = dual_update(dual, g1v, g2v)
        F_seen = objective(view, d, w)
        if not oracle.exact:
            F_seen = cfg.noisy_smoothing * F_prev + (1.0 - cfg.noisy_smoothing) * F_seen

        g1, g2 = constraint_values(cs_true, d, w)
        F = objective(cs_true, d, w)
        trace.L_aug.append(L(cs_true, d))
        trace.objective.append(F)
        trace.sum_mse.append(sum_mse(cs_true, d))
        trace.g1.append(g1)
        trace.g2.append(g2)
        trace.lambda1.append(dual.lambda1)
        trace.lambda2.append(dual.lambda2)
        trace.step.append(gamma)
        trace.dW.append(dW)
        trace.dc.append(dc)
        trace.dtheta.append(dth)
        trace.primal_path.append(path)
        trace.pg_norm.append(_pg_norm(cs_true, d, w, dual, gamma, cfg))
        if callback is not None:
            callback(t, d, dual, trace)

        if not (np.isfinite(F) and np.all(np.isfinite(path))
                and np.all(np.isfinite(d.W)) and np.all(np.isfinite(d.c))):
            trace.stopped = "non-finite"
            raise NonFiniteError(f"non-finite iterate at iteration {t + 1}", trace)

        small = small + 1 if F_prev - F_seen < cfg.tol else 0
        F_prev = F_seen
        if small >= cfg.patience:
            trace.stopped = "tol"
            break
    else:
        trace.stopped = "T_max"
    return d, dual, trace


def _pg_norm(cs, d, w, dual, eta, cfg) -> float:
    """Norm of the projected gradient mapping (diagnostic only)."""
    gW = grad_W(cs, d, w, dual, cfg.inequality)
    Wn = d.W - eta * gW
    if cfg.project_power:
        Wn = project_power(Wn, w.p_max)
    gt = grad_theta(cs, d, w, dual, cfg.inequality)
    tn = project_phases(d.theta - eta * gt)
    dth = np.angle(np.exp(1j * (d.theta - tn)))
    parts = [np.sum(np.abs(d.W - Wn) ** 2), np.sum(dth ** 2)]
    if cfg.c_update == "gradient":
        parts.append(np.sum(np.abs(eta * grad_c(cs, d)) ** 2))
    return float(np.sqrt(sum(parts))) / eta


def sublinear_rate_fit(values, t_min: int = 5) -> tuple[float, float]:
    """Fit ``values[t] - values[-1] <= C / t`` by least squares on t > t_min.

    Returns ``(C, fraction of those iterations lying under C / t)``.
    """
    v = np.asarray(values, dtype=float)
    gap = v - v[-1]
    t = np.arange(1, v.size + 1, dtype=float)
    sel = t > t_min
    if not np.any(sel):
        return 0.0, 1.0
    x = 1.0 / t[sel]
    C = float(np.dot(gap[sel], x) / np.dot(x, x))
    frac = float(np.mean(gap[sel] <= C * x + 1e-12))
    return C, frac


# ---------------------------------------------------------------------------
# closed forms and bounds


def closed_form_precoder_ridge_nulling(cs: ChannelSet, theta, c, gamma: float,
                                       kappa: float) -> np.ndarray:
    """Ridge-nulling precoder for fixed phases and equalizers.

    ``gamma = mu + lambda2`` and ``kappa = lam + lambda1``. Written for a single
    eavesdropper; with several, each contributes its own rank-one term.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    c = np.asarray(c, dtype=complex)
    H_eff, G_eff = effective_channels(cs, theta)
    M = H_eff.shape[0]
    A = H_eff @ ((np.abs(c) ** 2)[:, None] * H_eff.conj().T) + gamma * np.eye(M)
    if G_eff.shape[1]:
        A = A + kappa * (G_eff @ G_eff.conj().T)
    return np.linalg.solve(A, H_eff * np.conj(c)[None, :])


def closed_form_precoder_highsnr(cs: ChannelSet, theta, p_max: float,
                                 power_alloc=None) -> np.ndarray:
    """W = U[:, :K_H] diag(sqrt(p)) from the SVD of H_eff.

    ``power_alloc`` holds per-stream powers (uniform ``p_max / K_H`` by default)
    and is scaled down if its sum exceeds ``p_max``.
    """
    H_eff, _ = effective_channels(cs, theta)
    M, K = H_eff.shape
    if K > M:
        raise ValueError(f"need K_H <= M, got K_H={K}, M={M}")
    p = np.full(K, p_max / K) if power_alloc is None else np.asarray(power_alloc, dtype=float)
    if np.any(p < 0):
        raise ValueError("power allocation must be nonnegative")
    if p.sum() > p_max:
        p = p * (p_max / p.sum())
    U, s, _ = np.linalg.svd(H_eff, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(M, K) * np.finfo(float).eps)) if s.size and s[0] > 0 else 0
    if rank < K:
        warnings.warn(f"H_eff has rank {rank} < K_H={K}; unused streams get zero power",
                      RuntimeWarning, stacklevel=2)
    W = np.zeros((M, K), dtype=complex)
    W[:, :rank] = U[:, :rank] * np.sqrt(p[:rank])[None, :]
    return W


def lower_bound_cost(cs: ChannelSet, theta, p_max: float, iters: int = 200) -> float:
    """min sum_k s_k / (a_k p_k + s_k) over p >= 0, sum p <= p_max, a_k = ||h_eff,k||^2.

    Water-filling form: p_k(nu) = max(0, (sqrt(s_k a_k / nu) - s_k) / a_k), with
    the budget multiplier nu found by bisection in log space.
    """
    H_eff, _ = effective_channels(cs, theta)
    a = np.sum(np.abs(H_eff) ** 2, axis=0)
    s = cs.sigma2_user
    if p_max <= 0 or not np.any(a > 0):
        return float(len(a))
    act = a > 0

    def powers(nu):
        p = np.zeros_like(a)
        p[act] = np.maximum(0.0, (np.sqrt(s[act] * a[act] / nu) - s[act]) / a[act])
        return p

    hi = float(np.max(a[act] / s[act]))  # every p_k is zero at or above this
    lo = hi
    while powers(lo).sum() < p_max:
        lo *= 1e-2
    log_lo, log_hi = np.log(lo), np.log(hi)
    for _ in range(iters):
        mid = 0.5 * (log_lo + log_hi)
        if powers(np.exp(mid)).sum() > p_max:
            log_lo = mid
        else:
            log_hi = mid
    p = powers(np.exp(log_hi))
    return float(np.sum(s / (a * p + s)))
