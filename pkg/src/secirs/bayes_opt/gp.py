"""Gaussian-process surrogate with a block-separable squared-exponential kernel.

Inputs are feature rows split into blocks. A ``euclid`` block contributes
its squared Euclidean distance, a ``torus`` block the squared wrapped
phase distance ``sum_n angle(exp(1j*(x_n - x'_n)))**2``. The kernel is

    k(x, x') = signal_var * exp(-0.5 * sum_b dist_b(x, x') / ell_b**2)

so the block kernels multiply.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

JITTER_START = 1e-8
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class KernelSpec:
    blocks: tuple  # ((start, stop, kind), ...)

    @classmethod
    def ard(cls, dim: int) -> "KernelSpec":
        """One Euclidean block (own length scale) per input coordinate."""
        return cls(tuple((i, i + 1, "euclid") for i in range(dim)))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def sqdist(self, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
        """Per-block squared distances, shape (n_blocks, n1, n2)."""
        X1 = np.atleast_2d(X1)
        X2 = np.atleast_2d(X2)
        out = np.empty((self.n_blocks, X1.shape[0], X2.shape[0]))
        for b, (lo, hi, kind) in enumerate(self.blocks):
            A, B = X1[:, lo:hi], X2[:, lo:hi]
            if kind == "torus":
                diff = A[:, None, :] - B[None, :, :]
                diff = np.mod(diff + np.pi, 2.0 * np.pi) - np.pi
                out[b] = np.sum(diff * diff, axis=-1)
            elif kind == "euclid":
                d = (np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T)
                out[b] = np.maximum(d, 0.0)
            else:
                raise ValueError(f"unknown block kind {kind!r}")
        return out


@dataclass(frozen=True)
class GPHyper:
    lengthscales: tuple
    signal_var: float = 1.0
    noise_var: float = 1e-6

    def __post_init__(self):
        if min(self.lengthscales) <= 0 or self.signal_var <= 0 or self.noise_var < 0:
            raise ValueError(f"invalid hyperparameters {self}")


def kernel_from_sqdist(D: np.ndarray, hyper: GPHyper) -> np.ndarray:
    ell2 = np.asarray(hyper.lengthscales, dtype=float) ** 2
    return hyper.signal_var * np.exp(-0.5 * np.tensordot(1.0 / ell2, D, axes=1))


def kernel_matrix(spec: KernelSpec, hyper: GPHyper, X1, X2=None) -> np.ndarray:
    X2 = X1 if X2 is None else X2
    return kernel_from_sqdist(spec.sqdist(X1, X2), hyper)


def cholesky_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor of K, adding jitter 1e-8, 1e-7, ... 1e-4 on failure.

    Jitter is relative to the mean diagonal of K, so it is the absolute
    ladder when the signal variance is 1. Returns the absolute jitter added.
    """
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    if not scale > 0:
        scale = 1.0
    rel = JITTER_START
    eye = np.eye(K.shape[0])
    while rel <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + rel * scale * eye), rel * scale
        except np.linalg.LinAlgError:
            rel *= 10.0
    raise np.linalg.LinAlgError("kernel matrix not positive definite even with jitter 1e-4")


@dataclass
class GPSurrogate:
    spec: KernelSpec
    hyper: GPHyper
    X: np.ndarray
    y: np.ndarray
    mean: float = 0.0
    chol: np.ndarray = field(default=None, repr=False)
    alpha: np.ndarray = field(default=None, repr=False)
    jitter: float = 0.0
    lml: float = float("nan")

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.chol is None:
            D = self.spec.sqdist(self.X, self.X)
            self._factor(kernel_from_sqdist(D, self.hyper))

    def _factor(self, K):
        n = K.shape[0]
        Ky = K + self.hyper.noise_var * np.eye(n)
        self.chol, self.jitter = cholesky_jitter(Ky)
        r = self.y - self.mean
        self.alpha = cho_solve((self.chol, True), r)
        self.lml = float(-0.5 * r @ self.alpha - np.sum(np.log(np.diag(self.chol)))
                         - 0.5 * n * np.log(2.0 * np.pi))

    @property
    def n(self) -> int:
        return self.X.shape[0]


def gp_predict(gp: GPSurrogate, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at the rows of ``Xq``.

    mean = m + k^T (K + s2 I)^{-1} (y - m), var = k(x, x) - k^T (K + s2 I)^{-1} k,
    with the variance clamped at zero.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Ks = kernel_matrix(gp.spec, gp.hyper, gp.X, Xq)  # (n, q)
    mean = gp.mean + Ks.T @ gp.alpha
    v = solve_triangular(gp.chol, Ks, lower=True)
    var = gp.hyper.signal_var - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def log_marginal_likelihood(spec: KernelSpec, hyper: GPHyper, X, y, mean: float = 0.0,
                            D: np.ndarray | None = None) -> float:
    X = np.atleast_2d(X)
    D = spec.sqdist(X, X) if D is None else D
    K = kernel_from_sqdist(D, hyper) + hyper.noise_var * np.eye(X.shape[0])
    try:
        L, _ = cholesky_jitter(K)
    except np.linalg.LinAlgError:
        return -np.inf
    r = np.asarray(y, dtype=float) - mean
    a = cho_solve((L, True), r)
    return float(-0.5 * r @ a - np.sum(np.log(np.diag(L))) - 0.5 * len(r) * np.log(2 * np.pi))


def information_gain(gp: GPSurrogate) -> float:
    """0.5 * log det(I + K / noise_var) over the training inputs."""
    K = kernel_matrix(gp.spec, gp.hyper, gp.X)
    s2 = max(gp.hyper.noise_var, 1e-12)
    _, logdet = np.linalg.slogdet(np.eye(gp.n) + K / s2)
    return 0.5 * float(logdet)


_FACTORS = (4.0, 2.0, 0.5, 0.25)


def gp_fit(X, y, spec: KernelSpec, init: GPHyper | None = None, noise_floor: float = 1e-6,
           fixed_noise: float | None = None, n_starts: int = 5, max_sweeps: int = 8,
           normalize: bool = True) -> GPSurrogate:
    """Fit hyperparameters by maximizing the log marginal likelihood.

    Search is a coordinate grid in log space: each start sets every block
    length scale to a multiple (0.25x ... 4x) of that block's median pairwise
    distance, then sweeps the coordinates (length scales, signal variance,
    noise variance) trying multiplicative moves of 4, 2, 1/2, 1/4 until no
    move improves. Passing ``init`` replaces the starts with that point.

    Targets are centred and scaled internally when ``normalize`` is set; the
    returned surrogate is expressed in the original units.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] < 2:
        raise ValueError("gp_fit needs at least 2 points")
    m, s = 0.0, 1.0
    if normalize:
        m = float(np.mean(y))
        s = float(np.std(y))
        if not s > 0:
            s = 1.0
    yn = (y - m) / s
    D = spec.sqdist(X, X)
    iu = np.triu_indices(X.shape[0], 1)
    scales = []
    for b in range(spec.n_blocks):
        dists = np.sqrt(D[b][iu])
        dists = dists[dists > 0]
        scales.append(float(np.median(dists)) if dists.size else 1.0)
    scales = np.array(scales)
    if fixed_noise is not None:
        log_n_lo = log_n_hi = np.log(max(fixed_noise, 1e-300) / s ** 2)
    else:
        log_n_lo, log_n_hi = np.log(noise_floor / s ** 2), 0.0
    lo = np.concatenate([np.log(scales * 1e-3), [np.log(1e-2)], [log_n_lo]])
    hi = np.concatenate([np.log(scales * 1e3), [np.log(1e2)], [log_n_hi]])

    def unpack(p):
        return GPHyper(tuple(np.exp(p[:-2])), float(np.exp(p[-2])), float(np.exp(p[-1])))

    def score(p):
        return log_marginal_likelihood(spec, unpack(p), X, yn, 0.0, D)

    if init is not None:
        p0 = np.concatenate([np.log(init.lengthscales), [np.log(init.signal_var / s ** 2)],
                             [np.log(max(init.noise_var / s ** 2, 1e-300))]])
        starts = [np.clip(p0, lo, hi)]
    else:
        mults = np.exp(np.linspace(np.log(0.25), np.log(4.0), n_starts))
        starts = [np.clip(np.concatenate([np.log(scales * k), [0.0], [np.log(1e-2)]]), lo, hi)
                  for k in mults]
    moves = np.log(_FACTORS)
    best_p, best_v = None, -np.inf
    for p in starts:
        p = p.copy()
        v = score(p)
        for _ in range(max_sweeps):
            improved = False
            for i in range(p.size):
                if lo[i] == hi[i]:
                    continue
                for mv in moves:
                    q = p.copy()
                    q[i] = np.clip(q[i] + mv, lo[i], hi[i])
                    if q[i] == p[i]:
                        continue
                    vq = score(q)
                    if vq > v + 1e-9:
                        p, v, improved = q, vq, True
                        break
            if not improved:
                break
        if v > best_v:
            best_p, best_v = p, v
    if best_p is None:  # every start scored -inf
        best_p = starts[0]
    hn = unpack(best_p)
    hyper = GPHyper(hn.lengthscales, hn.signal_var * s ** 2,
                    max(hn.noise_var * s ** 2, noise_floor if fixed_noise is None else fixed_noise))
    return GPSurrogate(spec, hyper, X, y, mean=m)


def gp_condition(gp: GPSurrogate, X, y) -> GPSurrogate:
    """Same hyperparameters and mean, new training data."""
    return replace(gp, X=np.atleast_2d(X), y=np.asarray(y, float), chol=None, alpha=None)
