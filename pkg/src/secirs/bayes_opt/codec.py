"""Latent encoding of designs and Monte Carlo evaluation of decoded designs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..channel import ChannelSet, Design, Dims, Weights, crandn
from .gp import GPHyper, KernelSpec, kernel_matrix


def feature_dim(dims: Dims) -> int:
    return 2 * dims.N + 2 * dims.M * dims.K_H + 2 * dims.K_H


def feature_map(d: Design) -> np.ndarray:
    """[cos theta; sin theta; Re vec W; Im vec W; Re c; Im c] (vec stacks columns)."""
    w = d.W.reshape(-1, order="F")
    return np.concatenate([np.cos(d.theta), np.sin(d.theta), w.real, w.imag, d.c.real, d.c.imag])


def default_latent_dim(D: int, T: int, eps: float = 0.5) -> int:
    return min(D, math.ceil(8.0 * eps ** -2 * math.log(T)))


@dataclass
class LatentCodec:
    dims: Dims
    R: np.ndarray  # (d, D), entries N(0, 1/d)
    p_max: float

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        if self.R.shape[1] != feature_dim(self.dims):
            raise ValueError("projection width does not match the feature dimension")
        # least-norm right inverse R^T (R R^T)^{-1}
        self.dec = np.linalg.pinv(self.R)

    @classmethod
    def create(cls, dims: Dims, d: int, rng: np.random.Generator, p_max: float) -> "LatentCodec":
        D = feature_dim(dims)
        return cls(dims, rng.standard_normal((d, D)) / np.sqrt(d), p_max)

    @property
    def d(self) -> int:
        return self.R.shape[0]

    @property
    def D(self) -> int:
        return self.R.shape[1]


def encode(codec: LatentCodec, d: Design) -> np.ndarray:
    return codec.R @ feature_map(d)


def decode_batch(codec: LatentCodec, Z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode latent rows into (theta (n, N), W (n, M, K_H), c (n, K_H))."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    V = Z @ codec.dec.T  # (n, D)
    M, N, K = codec.dims.M, codec.dims.N, codec.dims.K_H
    cos, sin = V[:, :N], V[:, N:2 * N]
    theta = np.arctan2(sin, cos)  # atan2(0, 0) = 0
    o = 2 * N
    MK = M * K
    W = (V[:, o:o + MK] + 1j * V[:, o + MK:o + 2 * MK]).reshape(-1, K, M).transpose(0, 2, 1)
    o += 2 * MK
    c = V[:, o:o + K] + 1j * V[:, o + K:o + 2 * K]
    power = np.sum(np.abs(W) ** 2, axis=(1, 2))
    scale = np.where(power > codec.p_max, np.sqrt(codec.p_max / np.maximum(power, 1e-300)), 1.0)
    W = W * scale[:, None, None]
    return theta, W, c


def decode(codec: LatentCodec, z) -> Design:
    theta, W, c = decode_batch(codec, z)
    return Design(theta[0], W[0], c[0])


def design_kernel_spec(dims: Dims) -> KernelSpec:
    """Blocks: phases (torus), vec W (Re/Im), c (Re/Im)."""
    N, MK, K = dims.N, dims.M * dims.K_H, dims.K_H
    return KernelSpec(((0, N, "torus"), (N, N + 2 * MK, "euclid"),
                       (N + 2 * MK, N + 2 * MK + 2 * K, "euclid")))


def design_features(theta, W, c) -> np.ndarray:
    """Kernel inputs [theta | Re vec W | Im vec W | Re c | Im c] per row."""
    theta = np.atleast_2d(theta)
    W = np.asarray(W)
    if W.ndim == 2:
        W = W[None]
    c = np.atleast_2d(c)
    w = W.transpose(0, 2, 1).reshape(W.shape[0], -1)  # column stacking
    return np.concatenate([theta, w.real, w.imag, c.real, c.imag], axis=1)


def latent_features(codec: LatentCodec, Z) -> np.ndarray:
    return design_features(*decode_batch(codec, Z))


def kernel_designs(d1: Design, d2: Design, hyper: GPHyper) -> float:
    spec = design_kernel_spec(Dims(d1.W.shape[0], d1.theta.size, d1.c.size))
    X1 = design_features(d1.theta, d1.W, d1.c)
    X2 = design_features(d2.theta, d2.W, d2.c)
    return float(kernel_matrix(spec, hyper, X1, X2)[0, 0])


def kernel_latent(codec: LatentCodec, z1, z2, hyper: GPHyper) -> float:
    """Product kernel (torus x W x c) evaluated on the decoded designs."""
    spec = design_kernel_spec(codec.dims)
    return float(kernel_matrix(spec, hyper, latent_features(codec, z1),
                               latent_features(codec, z2))[0, 0])


# ---------------------------------------------------------------------------
# channel samplers and Monte Carlo evaluation


class ChannelBatch(NamedTuple):
    H: np.ndarray  # (n, N, M)
    h: np.ndarray  # (n, K_H, N)
    g: np.ndarray  # (n, K_B, N)
    sigma2_user: np.ndarray  # (K_H,)


@dataclass
class RayleighSampler:
    """Independent CN(0, 1) channel draws."""

    dims: Dims
    sigma2: float = 1.0

    def sample(self, rng: np.random.Generator, n: int) -> ChannelBatch:
        d = self.dims
        return ChannelBatch(crandn(rng, n, d.N, d.M), crandn(rng, n, d.K_H, d.N),
                            crandn(rng, n, d.K_B, d.N), np.full(d.K_H, self.sigma2))


@dataclass
class PerturbedSampler:
    """Draws ``sqrt(1 - eps^2) * X + eps * E`` around a fixed channel set."""

    cs: ChannelSet
    epsilon: float = 0.1

    def sample(self, rng: np.random.Generator, n: int) -> ChannelBatch:
        a = np.sqrt(1.0 - self.epsilon ** 2)
        e = self.epsilon
        cs = self.cs
        return ChannelBatch(a * cs.H + e * crandn(rng, n, *cs.H.shape),
                            a * cs.h + e * crandn(rng, n, *cs.h.shape),
                            a * cs.g + e * crandn(rng, n, *cs.g.shape),
                            cs.sigma2_user)


class McEstimate(NamedTuple):
    f: float
    g1: float  # ||W||_F^2 - p_max
    g2: float  # mean total leakage - gamma_leak
    f_stderr: float


def batch_terms(batch: ChannelBatch, d: Design) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw sum-MSE and total leakage for one design."""
    u = np.exp(1j * d.theta)
    HW = batch.H @ d.W  # (n, N, K)
    A = np.einsum("nkm,m,nmj->nkj", batch.h.conj(), u, HW)
    total = np.sum(np.abs(A) ** 2, axis=2) + batch.sigma2_user
    diagA = np.einsum("nkk->nk", A)
    mse = np.abs(d.c) ** 2 * total - 2.0 * np.real(d.c * diagA) + 1.0
    if batch.g.shape[1]:
        B = np.einsum("nem,m,nmj->nej", batch.g.conj(), u, HW)
        leak = np.sum(np.abs(B) ** 2, axis=(1, 2))
    else:
        leak = np.zeros(batch.H.shape[0])
    return mse.sum(axis=1), leak


def mc_objective(z, codec: LatentCodec, weights: Weights, n_mc: int, rng: np.random.Generator,
                 sampler=None) -> McEstimate:
    """Decode ``z`` once and average objective and constraints over ``n_mc`` channel draws.

    Constraint order follows the BO loop: ``g1`` is the power constraint (exact,
    since W is fixed by the decode), ``g2`` the averaged leakage constraint.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    sampler = sampler or RayleighSampler(codec.dims)
    d = decode(codec, z)
    mse, leak = batch_terms(sampler.sample(rng, n_mc), d)
    power = float(np.sum(np.abs(d.W) ** 2))
    vals = mse + weights.lam * leak + weights.mu * power
    se = float(np.std(vals, ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else 0.0
    return McEstimate(float(np.mean(vals)), power - weights.p_max,
                      float(np.mean(leak)) - weights.gamma_leak, se)
