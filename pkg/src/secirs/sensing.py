"""Distributed Byzantine-resilient spectrum sensing.

Each secondary user accumulates a log-likelihood ratio from energy
measurements, shares a capped trimmed-mean belief with its neighbours for
``R`` synchronous rounds, and the BS fuses the final shared beliefs with
trimmed attention weights and a min rule against its own belief.

The scalar functions follow the per-user description; :func:`simulate_batch`
runs many independent sensing frames at once with trials on the leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# overflow guard only; exp(700) is still finite in float64. A tighter clamp
# makes high-SNR H0 beliefs tie exactly at the floor, which breaks threshold
# calibration.
LOGIT_CLAMP = 700.0
ATTACKS = ("always_one", "always_zero", "inverted", "uniform_random", "none")


def sigmoid(psi):
    return expit(np.clip(psi, -LOGIT_CLAMP, LOGIT_CLAMP))


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def stationary_prior(P01: float, P10: float) -> float:
    if P01 + P10 == 0:
        raise ValueError("P01 + P10 must be positive")
    return P01 / (P01 + P10)


@dataclass
class Topology:
    adjacency: np.ndarray  # (K, K) symmetric bool, no self loops
    byzantine: np.ndarray  # (K,) bool

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=bool)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A)):
            raise ValueError("adjacency must have no self loops")
        self.adjacency = A
        self.byzantine = np.asarray(self.byzantine, dtype=bool).reshape(-1)
        if self.byzantine.size != A.shape[0]:
            raise ValueError("byzantine mask length must equal K")

    @property
    def K(self) -> int:
        return self.adjacency.shape[0]

    @property
    def K_B(self) -> int:
        return int(self.byzantine.sum())

    def neighbors(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[k])

    @classmethod
    def fully_connected(cls, K_H: int, K_B: int) -> "Topology":
        K = K_H + K_B
        return cls(~np.eye(K, dtype=bool), np.arange(K) >= K_H)


def random_topology(K_H: int, K_B: int, rng: np.random.Generator, p: float = 0.8,
                    max_tries: int = 100) -> Topology:
    """Erdos-Renyi graph, redrawn until every honest user has >= 2 K_B + 1 neighbours.

    Falls back to the complete graph after ``max_tries`` draws. Users
    ``K_H .. K_H + K_B - 1`` are Byzantine.
    """
    K = K_H + K_B
    byz = np.arange(K) >= K_H
    for _ in range(max_tries):
        U = np.triu(rng.random((K, K)) < p, 1)
        A = U | U.T
        if np.all(A[~byz].sum(axis=1) >= 2 * K_B + 1):
            return Topology(A, byz)
    return Topology.fully_connected(K_H, K_B)


@dataclass
class BeliefState:
    psi: np.ndarray
    delta: np.ndarray

    @property
    def pi(self) -> np.ndarray:
        return sigmoid(self.psi)

    @classmethod
    def initial(cls, K: int, prior: float) -> "BeliefState":
        return cls(np.full(K, float(logit(prior))), np.full(K, prior))

    def copy(self) -> "BeliefState":
        return BeliefState(self.psi.copy(), self.delta.copy())


@dataclass(frozen=True)
class AttackStrategy:
    kind: str = "always_one"

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ValueError(f"unknown attack {self.kind!r}; choose from {ATTACKS}")

    def emit(self, own_pi, rng: np.random.Generator) -> np.ndarray:
        """Reported value given the attacker's own (honestly computed) belief."""
        own_pi = np.asarray(own_pi, dtype=float)
        if self.kind == "always_one":
            return np.ones_like(own_pi)
        if self.kind == "always_zero":
            return np.zeros_like(own_pi)
        if self.kind == "inverted":
            return 1.0 - own_pi
        if self.kind == "uniform_random":
            return rng.random(own_pi.shape)
        return own_pi  # "none": behaves honestly apart from never trimming


@dataclass(frozen=True)
class FusionParams:
    tau_a: float = 0.01
    tau: float = 0.5
    R: int = 25
    trim_count: int = 0

    def __post_init__(self):
        if not self.tau_a > 0:
            raise ValueError("tau_a must be positive")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.trim_count < 0:
            raise ValueError("trim_count must be >= 0")


# ---------------------------------------------------------------------------
# measurement model


def energy_statistic(h1, J: int, snr_linear: float, sigma2: float, rng: np.random.Generator,
                     size=None):
    """Energy sum_j |y_j|^2 of J samples, y ~ CN(0, sigma2 (1 + gamma H1)).

    ``h1`` may be a boolean array; the result then has its shape (or ``size``).
    """
    if J < 1 or snr_linear < 0 or sigma2 <= 0:
        raise ValueError("need J >= 1, snr >= 0, sigma2 > 0")
    h1 = np.asarray(h1, dtype=bool)
    shape = h1.shape if size is None else size
    # sum of J unit-mean exponentials
    E = rng.gamma(J, 1.0, size=shape)
    scale = sigma2 * np.where(h1, 1.0 + snr_linear, 1.0)
    out = E * scale
    return float(out) if np.ndim(out) == 0 else out


def llr(E, J: int, snr_linear: float, sigma2: float):
    """Exact log-likelihood ratio of the energy under the Gaussian-signal model."""
    g = snr_linear
    return -J * np.log1p(g) + np.asarray(E) * g / (sigma2 * (1.0 + g))


def logit_update(state: BeliefState, k: int, ell: float) -> BeliefState:
    out = state.copy()
    out.psi[k] += ell
    return out


def belief_ratio_update(pi_prev, L):
    """Bayes update in probability form: pi L / (1 - pi + pi L)."""
    pi_prev = np.asarray(pi_prev, dtype=float)
    return pi_prev * L / (1.0 - pi_prev + pi_prev * L)


# ---------------------------------------------------------------------------
# consensus and fusion


def trimmed_mean(values, trim: int) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size < 2 * trim + 1:
        raise ValueError("insufficient values to trim")
    return float(np.mean(v[trim:v.size - trim]))


def trimmed_consensus(pi_k: float, neighbor_deltas, K_B: int) -> float:
    """min(pi_k, trimmed mean of the neighbours' previous shared values).

    With fewer than 2 K_B + 1 neighbours the user keeps its own belief.
    """
    nd = np.asarray(neighbor_deltas, dtype=float)
    if nd.size < 2 * K_B + 1:
        return float(pi_k)
    return float(min(pi_k, trimmed_mean(nd, K_B)))


def run_sensing_round(state: BeliefState, topo: Topology, energies, J: int, snr_linear: float,
                      sigma2: float, attack: AttackStrategy, rng: np.random.Generator,
                      trim: int | None = None) -> BeliefState:
    """One synchronous round: every user updates its logit from ``energies[k]``;
    honest users then apply the trimmed consensus on last round's shared values
    and Byzantine users broadcast their attack value."""
    trim = topo.K_B if trim is None else trim
    ell = llr(np.asarray(energies, dtype=float), J, snr_linear, sigma2)
    out = BeliefState(state.psi + ell, state.delta.copy())
    pi = out.pi
    prev = state.delta
    for k in range(topo.K):
        if topo.byzantine[k]:
            continue
        nb = topo.neighbors(k)
        out.delta[k] = trimmed_consensus(pi[k], prev[nb], trim)
    byz = topo.byzantine
    if np.any(byz):
        out.delta[byz] = attack.emit(pi[byz], rng)
    return out


def attention_weights(deltas, tau_a: float) -> np.ndarray:
    d = np.asarray(deltas, dtype=float)
    a = -((d - d.mean()) ** 2) / tau_a
    a = np.exp(a - a.max())
    return a / a.sum()


def bs_fuse(final_deltas, bs_pi: float, params: FusionParams, K_B: int | None = None) -> float:
    """Trim, attention-weight the survivors, then take the min with the BS belief."""
    K_B = params.trim_count if K_B is None else K_B
    d = np.sort(np.asarray(final_deltas, dtype=float))
    if d.size < 2 * K_B + 1:
        raise ValueError("insufficient reports")
    surv = d[K_B:d.size - K_B]
    att = float(np.dot(attention_weights(surv, params.tau_a), surv))
    return min(att, float(bs_pi))


def decide(fused, tau: float):
    """H1 (True) iff fused >= tau."""
    return np.asarray(fused) >= tau


def threshold_from_samples(h0_fused, target_pfa: float) -> float:
    """Smallest threshold whose empirical false-alarm rate on ``h0_fused`` is <= target.

    This is the empirical (1 - target) quantile, moved just above it when
    ties at the quantile would push the rate past the target.
    """
    x = np.sort(np.asarray(h0_fused, dtype=float))
    n = x.size
    if not 0 < target_pfa < 1:
        raise ValueError("target_pfa must lie in (0, 1)")
    if n < 1.0 / target_pfa:
        raise ValueError(f"need at least {int(np.ceil(1 / target_pfa))} H0 samples, got {n}")
    allowed = int(np.floor(target_pfa * n))  # samples that may lie at or above tau
    tau = x[n - allowed] if allowed > 0 else np.nextafter(x[-1], np.inf)
    if np.count_nonzero(x >= tau) > allowed:
        tau = np.nextafter(tau, np.inf)
    return float(tau)


def pu_markov_step(state: int, P01: float, P10: float, rng: np.random.Generator) -> int:
    if not (0 <= P01 <= 1 and 0 <= P10 <= 1):
        raise ValueError("transition probabilities must lie in [0, 1]")
    u = rng.random()
    if state == 0:
        return int(u < P01)
    return int(not u < P10)


def pu_markov_chain(n: int, P01: float, P10: float, rng: np.random.Generator,
                    start: int | None = None) -> np.ndarray:
    """State sequence of length n; the start is drawn from the stationary law by default."""
    out = np.empty(n, dtype=int)
    s = int(rng.random() < stationary_prior(P01, P10)) if start is None else int(start)
    u = rng.random(n)
    for i in range(n):
        out[i] = s
        s = int(u[i] < P01) if s == 0 else int(not u[i] < P10)
    return out


# ---------------------------------------------------------------------------
# batched simulator


@dataclass(frozen=True)
class SensingScenario:
    K_H: int = 8
    K_B: int = 3
    J: int = 10
    J_bs: int | None = None  # BS samples; defaults to J
    R: int = 25
    snr_db: float = 0.0
    sigma2: float = 1.0
    P01: float = 0.2
    P10: float = 0.3
    attack: str = "always_one"
    edge_prob: float = 0.8  # < 0 or >= 1 selects the complete graph
    tau_a: float = 0.01
    trimmed: bool = True  # False: plain means at users and BS (naive baseline)

    def __post_init__(self):
        if self.K_H < 1 or self.K_B < 0 or self.J < 1 or self.R < 1:
            raise ValueError("need K_H >= 1, K_B >= 0, J >= 1, R >= 1")
        if self.sigma2 <= 0 or self.tau_a <= 0:
            raise ValueError("sigma2 and tau_a must be positive")
        AttackStrategy(self.attack)
        if self.trimmed and self.K_H + self.K_B < 2 * self.K_B + 1:
            raise ValueError("insufficient reports for BS trimming")

    @property
    def K(self) -> int:
        return self.K_H + self.K_B

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def prior(self) -> float:
        return stationary_prior(self.P01, self.P10)


def _batched_trimmed_mean(vals, mask, trim):
    """Trimmed mean over the masked entries of the last axis.

    vals, mask: (..., K, K) with mask[..., k, i] selecting neighbour i of k.
    Returns (mean, count) with mean = nan where count < 2 trim + 1.
    """
    x = np.where(mask, vals, np.inf)
    x = np.sort(x, axis=-1)
    n = mask.sum(axis=-1)
    x = np.where(np.isfinite(x), x, 0.0)
    cs = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x, axis=-1)], axis=-1)
    hi = np.clip(n - trim, 0, None)
    top = np.take_along_axis(cs, hi[..., None], -1)[..., 0]
    bot = cs[..., trim] if trim < cs.shape[-1] else np.zeros(n.shape)
    m = n - 2 * trim
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(m >= 1, (top - bot) / np.maximum(m, 1), np.nan)
    return mean, n


def _batched_fuse(deltas, bs_pi, trim, tau_a):
    d = np.sort(deltas, axis=-1)
    surv = d[..., trim:d.shape[-1] - trim]
    bar = surv.mean(axis=-1, keepdims=True)
    a = -((surv - bar) ** 2) / tau_a
    a = np.exp(a - a.max(axis=-1, keepdims=True))
    a /= a.sum(axis=-1, keepdims=True)
    return np.minimum(np.sum(a * surv, axis=-1), bs_pi)


@dataclass
class BatchResult:
    fused: np.ndarray  # (n,) final fused belief
    fused_rounds: np.ndarray  # (n, R) fused belief if the frame stopped after round t
    delta: np.ndarray  # (n, R + 1, K) shared values, round 0 included
    pi: np.ndarray  # (n, R + 1, K)
    h1: np.ndarray  # (n,) bool
    byzantine: np.ndarray  # (K,) bool


def simulate_batch(sc: SensingScenario, h1, rng: np.random.Generator,
                   keep_traces: bool = False) -> BatchResult:
    """Run independent sensing frames, one per entry of ``h1`` (PU state fixed per frame).

    Every frame draws its own topology. Users observe a fresh J-sample energy
    each round; the BS takes one J_bs-sample measurement after the last round
    and starts from the stationary prior.
    """
    h1 = np.asarray(h1, dtype=bool).reshape(-1)
    n, K, KB = h1.size, sc.K, sc.K_B
    trim = KB if sc.trimmed else 0
    attack = AttackStrategy(sc.attack)
    g, s2, J = sc.snr_linear, sc.sigma2, sc.J
    A = np.empty((n, K, K), dtype=bool)
    if 0 < sc.edge_prob < 1:
        for i in range(n):
            A[i] = random_topology(sc.K_H, KB, rng, sc.edge_prob).adjacency
    else:
        A[:] = Topology.fully_connected(sc.K_H, KB).adjacency
    byz = np.arange(K) >= sc.K_H
    honest = ~byz

    psi = np.full((n, K), float(logit(sc.prior)))
    delta = np.full((n, K), sc.prior)
    pi = sigmoid(psi)
    if np.any(byz):  # attackers emit from round 0 on
        delta[:, byz] = attack.emit(pi[:, byz], rng)
    J_bs = sc.J_bs or J
    # the BS measurement is drawn once; fused_rounds reuses it at every round
    E_bs = energy_statistic(h1, J_bs, g, s2, rng)
    bs_pi = sigmoid(logit(sc.prior) + llr(E_bs, J_bs, g, s2))
    R = sc.R
    fused_rounds = np.empty((n, R))
    if keep_traces:
        d_tr = np.empty((n, R + 1, K))
        p_tr = np.empty((n, R + 1, K))
        d_tr[:, 0], p_tr[:, 0] = delta, pi
    for t in range(R):
        E = energy_statistic(np.broadcast_to(h1[:, None], (n, K)), J, g, s2, rng)
        psi = psi + llr(E, J, g, s2)
        pi = sigmoid(psi)
        tm, cnt = _batched_trimmed_mean(np.broadcast_to(delta[:, None, :], (n, K, K)), A, trim)
        new = np.where(cnt >= 2 * trim + 1, np.minimum(pi, np.nan_to_num(tm, nan=1.0)), pi)
        if trim == 0:  # naive mean still needs at least one neighbour
            new = np.where(cnt >= 1, new, pi)
        delta = np.where(honest, new, delta)
        if np.any(byz):
            delta[:, byz] = attack.emit(pi[:, byz], rng)
        fused_rounds[:, t] = _batched_fuse(delta, bs_pi, trim, sc.tau_a)
        if keep_traces:
            d_tr[:, t + 1], p_tr[:, t + 1] = delta, pi
    if not keep_traces:
        d_tr = p_tr = np.empty((n, 0, K))
    return BatchResult(fused_rounds[:, -1].copy(), fused_rounds, d_tr, p_tr, h1, byz)


def calibrate_threshold(sc: SensingScenario, target_pfa: float, trials: int,
                        rng: np.random.Generator) -> float:
    """Empirical (1 - target) quantile of the fused belief over ``trials`` H0 frames."""
    if trials < 1.0 / target_pfa:
        raise ValueError("too few trials for the requested false-alarm rate")
    res = simulate_batch(sc, np.zeros(trials, dtype=bool), rng)
    return threshold_from_samples(res.fused, target_pfa)


def detection_rates(sc: SensingScenario, tau: float, trials: int,
                    rng: np.random.Generator) -> tuple[float, float]:
    """(Pd, Pfa) over ``trials`` H1 frames and ``trials`` H0 frames."""
    h1 = np.concatenate([np.ones(trials, bool), np.zeros(trials, bool)])
    res = simulate_batch(sc, h1, rng)
    dec = decide(res.fused, tau)
    return float(dec[:trials].mean()), float(dec[trials:].mean())
