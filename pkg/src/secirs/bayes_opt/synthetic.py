"""2-d constrained quadratic used to sanity-check the BO loop."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConstrainedQuadratic:
    """f(z) = |z - a|^2 + f0 s.t. z1 + z2 <= b and -z1 <= r (second one slack near the optimum)."""

    a: tuple = (1.0, 0.5)
    f0: float = 1.0
    b: float = 0.5
    r: float = 2.0
    noise: float = 0.0

    def __call__(self, z, rng: np.random.Generator | None = None):
        z = np.asarray(z, dtype=float)
        f = float(np.sum((z - np.asarray(self.a)) ** 2) + self.f0)
        if self.noise and rng is not None:
            f += self.noise * float(rng.standard_normal())
        return f, float(z[0] + z[1] - self.b), float(-z[0] - self.r)

    def exact_optimum(self) -> float:
        """Closed form: project a onto the half-plane z1 + z2 <= b (the other constraint is slack)."""
        a = np.asarray(self.a, dtype=float)
        excess = max(0.0, a.sum() - self.b)
        return float(2 * (excess / 2) ** 2 + self.f0)

    def grid_optimum(self, box: float = 3.0, n: int = 1000) -> tuple[np.ndarray, float]:
        """Best feasible value over an n x n grid on [-box, box]^2."""
        u = np.linspace(-box, box, n)
        Z1, Z2 = np.meshgrid(u, u, indexing="ij")
        F = (Z1 - self.a[0]) ** 2 + (Z2 - self.a[1]) ** 2 + self.f0
        ok = (Z1 + Z2 - self.b <= 0) & (-Z1 - self.r <= 0)
        F = np.where(ok, F, np.inf)
        i = np.unravel_index(np.argmin(F), F.shape)
        return np.array([Z1[i], Z2[i]]), float(F[i])
