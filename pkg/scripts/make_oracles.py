"""Freeze independently computed reference values into tests/data/oracles.json.

Everything here is evaluated with mpmath at 50 digits straight from the
defining formulas (explicit sums, explicit matrix inverses), without
importing the package. Rerun only when an oracle definition changes.
"""
import json
from pathlib import Path

import mpmath as mp
import numpy as np

mp.mp.dps = 50
OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "oracles.json"


def cplx(a):
    a = np.asarray(a)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def mpc(z):
    return mp.mpc(float(z.real), float(z.imag))


def channel_instance(rng, M, N, K, KB):
    f = lambda *s: (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / np.sqrt(2)
    return dict(H=f(N, M), h=f(K, N), g=f(KB, N), theta=rng.uniform(0, 2 * np.pi, N),
                W=f(M, K), c=f(K), s2=rng.uniform(0.5, 2.0, K))


def physical(inst):
    H, h, g, th, W, c, s2 = (inst[k] for k in ("H", "h", "g", "theta", "W", "c", "s2"))
    N, M = H.shape
    K = h.shape[0]
    ph = [mp.expjpi(-mp.mpf(float(t)) / mp.pi) for t in th]  # e^{-j theta}

    def eff(v):  # H^H Phi^H v, by explicit summation
        return [mp.fsum(mp.conj(mpc(H[n, m])) * ph[n] * mpc(v[n]) for n in range(N))
                for m in range(M)]

    he = [eff(h[k]) for k in range(K)]
    ge = [eff(g[e]) for e in range(g.shape[0])]

    def inner(a, wcol):  # a^H w
        return mp.fsum(mp.conj(a[m]) * mpc(W[m, wcol]) for m in range(M))

    A = [[inner(he[k], j) for j in range(K)] for k in range(K)]
    mse, sinr = [], []
    for k in range(K):
        tot = mp.fsum(abs(A[k][j]) ** 2 for j in range(K)) + s2[k]
        ck = mpc(c[k])
        mse.append(abs(ck) ** 2 * tot - 2 * mp.re(ck * A[k][k]) + 1)
        sinr.append(abs(A[k][k]) ** 2 / (tot - abs(A[k][k]) ** 2))
    leak = [mp.fsum(abs(inner(ge[e], j)) ** 2 for j in range(K)) for e in range(len(ge))]
    return dict(H_eff=[[complex(x) for x in col] for col in he], mse=[float(x) for x in mse],
                sinr=[float(x) for x in sinr], leak=[float(x) for x in leak])


def gp3(rng):
    X = rng.uniform(-1, 1, (3, 2))
    y = rng.standard_normal(3)
    Xq = rng.uniform(-1, 1, (4, 2))
    ell, sv, nv = 0.7, 1.3, 0.05

    def k(a, b):
        d2 = mp.fsum((mp.mpf(float(a[i])) - mp.mpf(float(b[i]))) ** 2 for i in range(2))
        return sv * mp.exp(-d2 / (2 * mp.mpf(ell) ** 2))

    Kmat = mp.matrix(3, 3)
    for i in range(3):
        for j in range(3):
            Kmat[i, j] = k(X[i], X[j]) + (nv if i == j else 0)
    Kinv = Kmat ** -1
    mean, var = [], []
    for q in Xq:
        kt = mp.matrix([k(X[i], q) for i in range(3)])
        a = Kinv * kt
        mean.append(float(mp.fsum(a[i] * y[i] for i in range(3))))
        var.append(float(k(q, q) - mp.fsum(kt[i] * a[i] for i in range(3))))
    return dict(X=X.tolist(), y=y.tolist(), Xq=Xq.tolist(), lengthscale=ell, signal_var=sv,
                noise_var=nv, mean=mean, var=var)


def ei_closed(mu, sd, inc):
    u = (inc - mu) / sd
    return float((inc - mu) * mp.ncdf(u) + sd * mp.npdf(u))


def main():
    rng = np.random.default_rng(12345)
    insts = []
    for M, N, K, KB in ((4, 8, 2, 1), (2, 4, 2, 2), (3, 5, 1, 0)):
        inst = channel_instance(rng, M, N, K, KB)
        phys = physical(inst)
        insts.append({"dims": [M, N, K, KB],
                      **{k: cplx(v) for k, v in inst.items() if k not in ("theta", "s2")},
                      "theta": inst["theta"].tolist(), "s2": inst["s2"].tolist(),
                      "H_eff": cplx(np.array(phys["H_eff"]).T), "mse": phys["mse"],
                      "sinr": phys["sinr"], "leak": phys["leak"]})
    data = {
        "channel_instances": insts,
        "gp_3point": gp3(rng),
        "ei": [{"mu": m, "sd": s, "inc": i, "value": ei_closed(m, s, i)}
               for m, s, i in ((0.0, 1.0, 0.0), (0.3, 0.5, 0.1), (-1.0, 2.0, 0.5))],
        "beta_t0": float(mp.mpf("0.4") * mp.log(2)),
        "markov_stationary": 0.2 / (0.2 + 0.3),
        "llr_boundary_E": float(2 * mp.log(2)),
    }
    OUT.write_text(json.dumps(data, indent=1))
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
