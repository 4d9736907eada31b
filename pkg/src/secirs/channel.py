"""Channels, designs and the physical-layer quantities built on them.

Conventions
-----------
``H`` is the BS->IRS matrix (N x M). Honest-user channels ``h`` are stored
row-wise as a (K_H, N) array and eavesdropper channels ``g`` as (K_B, N).
The IRS is parametrized by its phase vector ``theta``; the reflection
matrix ``diag(exp(1j*theta))`` is never formed, so unit modulus holds by
construction.

Effective channels are returned column-wise: ``H_eff[:, k] = H^H Phi^H h_k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Dims:
    M: int
    N: int
    K_H: int
    K_B: int = 0

    def __post_init__(self):
        if self.M < 1 or self.N < 1 or self.K_H < 1:
            raise ValueError(f"M, N, K_H must be >= 1, got {self}")
        if self.K_B < 0:
            raise ValueError(f"K_B must be >= 0, got {self.K_B}")

    @property
    def K(self) -> int:
        return self.K_H + self.K_B

    def sensing_resilient(self) -> bool:
        """Strict honest majority: K_B <= floor(K/2) - 1."""
        return self.K_B <= self.K // 2 - 1


@dataclass
class ChannelSet:
    H: np.ndarray  # (N, M)
    h: np.ndarray  # (K_H, N)
    g: np.ndarray  # (K_B, N)
    sigma2_user: np.ndarray  # (K_H,)
    sigma2_eav: np.ndarray  # (K_B,)

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=complex))
        N, M = self.H.shape
        self.h = np.asarray(self.h, dtype=complex).reshape(-1, N)
        self.g = np.asarray(self.g, dtype=complex).reshape(-1, N)
        self.sigma2_user = np.broadcast_to(
            np.asarray(self.sigma2_user, dtype=float), (self.h.shape[0],)).copy()
        self.sigma2_eav = np.broadcast_to(
            np.asarray(self.sigma2_eav, dtype=float), (self.g.shape[0],)).copy()
        if np.any(self.sigma2_user <= 0) or np.any(self.sigma2_eav <= 0):
            raise ValueError("noise variances must be strictly positive")

    @property
    def dims(self) -> Dims:
        N, M = self.H.shape
        return Dims(M=M, N=N, K_H=self.h.shape[0], K_B=self.g.shape[0])

    def copy(self) -> "ChannelSet":
        return ChannelSet(self.H.copy(), self.h.copy(), self.g.copy(),
                          self.sigma2_user.copy(), self.sigma2_eav.copy())


@dataclass
class Design:
    theta: np.ndarray  # (N,) phases
    W: np.ndarray  # (M, K_H) precoder
    c: np.ndarray  # (K_H,) equalizers

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).reshape(-1)
        self.W = np.atleast_2d(np.asarray(self.W, dtype=complex))
        self.c = np.asarray(self.c, dtype=complex).reshape(-1)
        if self.W.shape[1] != self.c.size:
            raise ValueError(f"W has {self.W.shape[1]} columns but c has {self.c.size} entries")

    @property
    def phi(self) -> np.ndarray:
        """Diagonal of the reflection matrix (unit modulus by construction)."""
        return np.exp(1j * self.theta)

    def copy(self) -> "Design":
        return Design(self.theta.copy(), self.W.copy(), self.c.copy())


@dataclass(frozen=True)
class Weights:
    lam: float = 1.0  # leakage penalty
    mu: float = 0.01  # power regularization
    gamma_leak: float = 0.1
    p_max: float = 1.0

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError("lam and mu must be nonnegative")
        if self.gamma_leak <= 0 or self.p_max <= 0:
            raise ValueError("gamma_leak and p_max must be strictly positive")


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    """CN(0, 1) samples: real and imaginary parts each N(0, 1/2)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channels(dims: Dims, rng: np.random.Generator,
                    sigma2_user=1.0, sigma2_eav=1.0) -> ChannelSet:
    """Draw one i.i.d. Rayleigh realization of every channel."""
    H = crandn(rng, dims.N, dims.M)
    h = crandn(rng, dims.K_H, dims.N)
    g = crandn(rng, dims.K_B, dims.N)
    return ChannelSet(H, h, g, sigma2_user, sigma2_eav)


def _check(cs: ChannelSet, theta: np.ndarray, W: np.ndarray | None = None):
    N, M = cs.H.shape
    if theta.shape != (N,):
        raise ValueError(f"theta must have shape ({N},), got {theta.shape}")
    if W is not None and W.shape != (M, cs.h.shape[0]):
        raise ValueError(f"W must have shape ({M}, {cs.h.shape[0]}), got {W.shape}")


def effective_channels(cs: ChannelSet, theta) -> tuple[np.ndarray, np.ndarray]:
    """Return (H_eff (M, K_H), G_eff (M, K_B)) with columns H^H Phi^H h_k and H^H Phi^H g_e."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    _check(cs, theta)
    phic = np.exp(-1j * theta)
    Hh = cs.H.conj().T
    return Hh @ (phic[:, None] * cs.h.T), Hh @ (phic[:, None] * cs.g.T)


def _gains(cs: ChannelSet, d: Design):
    """A[k, j] = h_eff,k^H w_j and B[e, k] = h_eff,e^H w_k."""
    _check(cs, d.theta, d.W)
    H_eff, G_eff = effective_channels(cs, d.theta)
    return H_eff.conj().T @ d.W, G_eff.conj().T @ d.W


def mse_all(cs: ChannelSet, d: Design) -> np.ndarray:
    A, _ = _gains(cs, d)
    total = np.sum(np.abs(A) ** 2, axis=1) + cs.sigma2_user
    c = d.c
    return np.abs(c) ** 2 * total - 2.0 * np.real(c * np.diag(A)) + 1.0


def mse_k(cs: ChannelSet, d: Design, k: int) -> float:
    if not 0 <= k < cs.h.shape[0]:
        raise IndexError(f"user index {k} out of range for K_H={cs.h.shape[0]}")
    return float(mse_all(cs, d)[k])


def sum_mse(cs: ChannelSet, d: Design) -> float:
    return float(np.sum(mse_all(cs, d)))


def leakage_signal_power(cs: ChannelSet, d: Design) -> tuple[np.ndarray, float]:
    """Per-eavesdropper signal leakage sum_k |g_e^H Phi H w_k|^2 and its total."""
    _, B = _gains(cs, d)
    per = np.sum(np.abs(B) ** 2, axis=1)
    return per, float(np.sum(per))


def sinr_all(cs: ChannelSet, d: Design) -> np.ndarray:
    A, _ = _gains(cs, d)
    p = np.abs(A) ** 2
    sig = np.diag(p)
    return sig / (p.sum(axis=1) - sig + cs.sigma2_user)


def sinr_k(cs: ChannelSet, d: Design, k: int) -> float:
    return float(sinr_all(cs, d)[k])


def mmse_equalizer(cs: ChannelSet, d: Design) -> np.ndarray:
    """Per-user equalizer minimizing MSE_k for the current (theta, W).

    The minimizer of ``|c|^2 T - 2 Re{c a} + 1`` is ``conj(a) / T``; at that
    point ``MSE_k = 1 / (1 + SINR_k)``.
    """
    A, _ = _gains(cs, d)
    total = np.sum(np.abs(A) ** 2, axis=1) + cs.sigma2_user
    return np.conj(np.diag(A)) / total


def objective(cs: ChannelSet, d: Design, w: Weights) -> float:
    _, leak = leakage_signal_power(cs, d)
    return sum_mse(cs, d) + w.lam * leak + w.mu * float(np.sum(np.abs(d.W) ** 2))


def constraint_values(cs: ChannelSet, d: Design, w: Weights) -> tuple[float, float]:
    """(g1, g2) = (total leakage - gamma_leak, ||W||_F^2 - p_max); feasible iff both <= 0."""
    _, leak = leakage_signal_power(cs, d)
    return leak - w.gamma_leak, float(np.sum(np.abs(d.W) ** 2)) - w.p_max


def wrap_phase(theta) -> np.ndarray:
    """Map phases to [0, 2*pi)."""
    out = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)
