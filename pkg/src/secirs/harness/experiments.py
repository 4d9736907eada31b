"""Experiment families: seeded Monte Carlo sweeps producing result rows."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from ..alt_opt import (AltOptConfig, CsiOracle, DualState, StepSchedule, initial_design,
                       lower_bound_cost, run_alternating)
from ..bayes_opt.codec import PerturbedSampler, RayleighSampler, decode
from ..bayes_opt.loop import BoConfig, DesignBoConfig, run_bo
from ..channel import ChannelSet, Design, Dims, Weights, effective_channels, sample_channels, sum_mse
from ..sensing import SensingScenario, decide, simulate_batch, threshold_from_samples
from .config import ExperimentConfig
from .emit import ResultRow
from .seeds import derive_seed, trial_rng

log = logging.getLogger(__name__)


@dataclass
class ExperimentOutput:
    rows: list = field(default_factory=list)
    raw: list = field(default_factory=list)  # per-trial records


def metric_detection(decisions, truth) -> tuple[float, float]:
    """(Pd, Pfa) from boolean H1 decisions and the true hypotheses."""
    dec = np.asarray(decisions, dtype=bool).reshape(-1)
    tru = np.asarray(truth, dtype=bool).reshape(-1)
    if dec.shape != tru.shape:
        raise ValueError("decisions and truth must have the same length")
    if not tru.any() or tru.all():
        raise ValueError("need at least one trial of each hypothesis")
    return float(dec[tru].mean()), float(dec[~tru].mean())


def metric_wpt_zeta(cs: ChannelSet, d: Design) -> float:
    """P_harv / (P_tx * P_leak) for the equalizer-free mode.

    P_harv is the total signal power received by honest users
    sum_k sum_j |h_eff,k^H w_j|^2. Returns +inf when there is no leakage.
    """
    P_tx = float(np.sum(np.abs(d.W) ** 2))
    if P_tx == 0:
        raise ValueError("zero transmit power")
    H_eff, G_eff = effective_channels(cs, d.theta)
    P_harv = float(np.sum(np.abs(H_eff.conj().T @ d.W) ** 2))
    P_leak = float(np.sum(np.abs(G_eff.conj().T @ d.W) ** 2))
    if P_leak == 0:
        return float("inf")
    return P_harv / (P_tx * P_leak)


def _summary(x) -> tuple[float, float | None, int]:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n > 1:
        return float(x.mean()), float(x.std(ddof=1) / np.sqrt(n)), n
    return float(x.mean()), None, n


def _binomial(p: float, n: int) -> float | None:
    return float(np.sqrt(p * (1 - p) / n)) if n > 1 else None


# ---------------------------------------------------------------------------
# sensing families


def _scenario(cfg: ExperimentConfig, **over) -> SensingScenario:
    s = cfg.sensing
    kw = dict(K_H=cfg.dims.K_H, K_B=cfg.dims.K_B, J=s.J, J_bs=s.J_bs, R=s.R, snr_db=s.snr_db,
              P01=s.P01, P10=s.P10, attack=s.attack, edge_prob=s.edge_prob, tau_a=s.tau_a)
    kw.update(over)
    return SensingScenario(**kw)


def _detect(cfg, sc, rng, out: ExperimentOutput, sweep_name, value, metric, want_raw):
    n = cfg.trials
    tau = threshold_from_samples(
        simulate_batch(sc, np.zeros(cfg.sensing.calib_trials, bool), rng).fused, cfg.sensing.pfa)
    truth = np.concatenate([np.ones(n, bool), np.zeros(n, bool)])
    res = simulate_batch(sc, truth, rng)
    dec = decide(res.fused, tau)
    pd, pfa = metric_detection(dec, truth)
    seed = cfg.seed
    out.rows.append(ResultRow(cfg.id, sweep_name, value, f"pd_{metric}", pd, _binomial(pd, n), n, seed))
    out.rows.append(ResultRow(cfg.id, sweep_name, value, f"pfa_{metric}", pfa, _binomial(pfa, n), n,
                              seed))
    if want_raw:
        for i in range(2 * n):
            out.raw.append(dict(experiment=cfg.id, sweep=sweep_name, value=value, metric=metric,
                                trial=i, h1=int(truth[i]), fused=float(res.fused[i]),
                                tau=tau, decision=int(dec[i])))


def _pd_vs_snr(cfg: ExperimentConfig, raw: bool) -> ExperimentOutput:
    out = ExperimentOutput()
    Js = cfg.sensing.J_values or (cfg.sensing.J,)
    for si, snr in enumerate(cfg.sweep):
        for ji, J in enumerate(Js):
            rng = trial_rng(cfg.seed, cfg.id, si, ji)
            _detect(cfg, _scenario(cfg, J=int(J), snr_db=float(snr)), rng, out, "snr_db", snr,
                    f"J{int(J)}", raw)
            if cfg.sensing.naive_baseline:
                rng = trial_rng(cfg.seed, cfg.id + "/naive", si, ji)
                _detect(cfg, _scenario(cfg, J=int(J), snr_db=float(snr), trimmed=False), rng,
                        out, "snr_db", snr, f"naive_J{int(J)}", raw)
    return out


def _pd_vs_iter(cfg: ExperimentConfig, raw: bool) -> ExperimentOutput:
    """Pd after each round, thresholds calibrated per round; sweep = honest-user counts.

    The Byzantine count keeps the ratio K_B / K_H of ``dims``.
    """
    out = ExperimentOutput()
    n = cfg.trials
    ratio = cfg.dims.K_B / cfg.dims.K_H
    for si, kh in enumerate(cfg.sweep):
        kh = int(kh)
        kb = int(round(kh * ratio))
        sc = _scenario(cfg, K_H=kh, K_B=kb)
        rng = trial_rng(cfg.seed, cfg.id, si, 0)
        h0 = simulate_batch(sc, np.zeros(cfg.sensing.calib_trials, bool), rng)
        truth = np.concatenate([np.ones(n, bool), np.zeros(n, bool)])
        res = simulate_batch(sc, truth, rng)
        for t in range(sc.R):
            tau = threshold_from_samples(h0.fused_rounds[:, t], cfg.sensing.pfa)
            dec = decide(res.fused_rounds[:, t], tau)
            pd, pfa = metric_detection(dec, truth)
            m = f"KH{kh}_KB{kb}"
            out.rows.append(ResultRow(cfg.id, "round", t + 1, f"pd_{m}", pd, _binomial(pd, n), n,
                                      cfg.seed))
            out.rows.append(ResultRow(cfg.id, "round", t + 1, f"pfa_{m}", pfa, _binomial(pfa, n),
                                      n, cfg.seed))
            if raw:
                for i in range(2 * n):
                    out.raw.append(dict(experiment=cfg.id, sweep="round", value=t + 1, metric=m,
                                        trial=i, h1=int(truth[i]),
                                        fused=float(res.fused_rounds[i, t]), tau=tau,
                                        decision=int(dec[i])))
    return out


def _roc(cfg: ExperimentConfig, raw: bool) -> ExperimentOutput:
    out = ExperimentOutput()
    n = cfg.trials
    sc = _scenario(cfg)
    rng = trial_rng(cfg.seed, cfg.id, 0, 0)
    h0 = simulate_batch(sc, np.zeros(cfg.sensing.calib_trials, bool), rng).fused
    truth = np.concatenate([np.ones(n, bool), np.zeros(n, bool)])
    res = simulate_batch(sc, truth, rng)
    for target in cfg.sweep:
        tau = threshold_from_samples(h0, float(target))
        dec = decide(res.fused, tau)
        pd, pfa = metric_detection(dec, truth)
        out.rows.append(ResultRow(cfg.id, "pfa_target", target, "pd", pd, _binomial(pd, n), n,
                                  cfg.seed))
        out.rows.append(ResultRow(cfg.id, "pfa_target", target, "pfa", pfa, _binomial(pfa, n), n,
                                  cfg.seed))
    if raw:
        for i in range(2 * n):
            out.raw.append(dict(experiment=cfg.id, sweep="pfa_target", value=0, metric="fused",
                                trial=i, h1=int(truth[i]), fused=float(res.fused[i])))
    return out


# ---------------------------------------------------------------------------
# design families


def _alt_config(cfg: ExperimentConfig, c_update: str = "closed_form") -> AltOptConfig:
    o = cfg.optimizer
    return AltOptConfig(T_max=o.T_max, tol=o.tol, schedule=StepSchedule(o.gamma0, o.alpha),
                        accel=o.accel, c_update=c_update)


def _bo_config(cfg: ExperimentConfig, sweep: int, trial: int) -> DesignBoConfig:
    b = cfg.bo
    bo = BoConfig(T=b.T, n_init=b.n_init, acquisition=b.acquisition, box=b.box,
                  n_candidates=b.n_candidates, n_refine=b.n_refine, analytic_g1=b.analytic_g1)
    codec_seed = derive_seed(cfg.seed, cfg.id + "/codec", sweep, trial)
    return DesignBoConfig(bo, n_mc=b.n_mc, d=b.d, eps=b.eps, codec_seed=codec_seed)


def _instance(cfg: ExperimentConfig, rng, dims: Dims | None = None) -> ChannelSet:
    return sample_channels(dims or cfg.dims, rng, sigma2_user=cfg.optimizer.sigma2,
                           sigma2_eav=cfg.optimizer.sigma2)


@dataclass
class _TrialDesigns:
    full: Design
    partial: Design
    bo: Design | None
    full_trace: object
    partial_trace: object
    bo_result: object
    codec: object


def _solve_trial(cfg: ExperimentConfig, cs: ChannelSet, w: Weights, rng, si: int, ti: int,
                 c_update: str = "closed_form") -> _TrialDesigns:
    init = initial_design(cs, w, rng, feasible=True)
    if c_update == "fixed":
        init.c = np.ones_like(init.c)
    acfg = _alt_config(cfg, c_update)
    dual0 = DualState(rho=cfg.optimizer.rho)
    full, _, tr_full = run_alternating(cs, init, w, dual0, acfg)
    oracle = CsiOracle(cs, cfg.optimizer.epsilon, rng)
    partial, _, tr_part = run_alternating(oracle, init, w, dual0, acfg)
    bo_design = res = codec = None
    if cfg.bo.enabled:
        sampler = (PerturbedSampler(cs, cfg.optimizer.epsilon) if cfg.bo.sampler == "perturbed"
                   else RayleighSampler(cs.dims, cfg.optimizer.sigma2))
        bo_design, res, codec = run_bo(cs.dims, w, _bo_config(cfg, si, ti), rng, sampler)
    return _TrialDesigns(full, partial, bo_design, tr_full, tr_part, res, codec)


def _bo_incumbent_curve(cs: ChannelSet, res, codec) -> np.ndarray:
    """True-channel sum MSE of the incumbent after each evaluation."""
    st = res.state
    feas = st.feasible_mask()
    viol = np.maximum(st.g1, 0.0) + np.maximum(st.g2, 0.0)
    out = np.empty(st.f.size)
    best = None
    for t in range(st.f.size):
        cand = np.arange(t + 1)
        if feas[:t + 1].any():
            idx = cand[feas[:t + 1]][np.argmin(st.f[:t + 1][feas[:t + 1]])]
        else:
            idx = int(np.argmin(viol[:t + 1]))
        if idx != best:
            best = idx
            val = sum_mse(cs, decode(codec, st.Z[idx]))
        out[t] = val
    return out


def _pad(x, n):
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.full(n - x.size, x[-1])]) if x.size < n else x[:n]


def _mse_vs_iter(cfg: ExperimentConfig, raw: bool) -> ExperimentOutput:
    out = ExperimentOutput()
    w = cfg.optimizer.weights()
    T, Tb = cfg.optimizer.T_max, cfg.bo.T
    curves = {"alt_full": [], "alt_partial": [], "bo": []}
    for ti in range(cfg.trials):
        rng = trial_rng(cfg.seed, cfg.id, 0, ti)
        cs = _instance(cfg, rng)
        r = _solve_trial(cfg, cs, w, rng, 0, ti)
        curves["alt_full"].append(_pad(r.full_trace.sum_mse, T))
        curves["alt_partial"].append(_pad(r.partial_trace.sum_mse, T))
        if r.bo_result is not None:
            curves["bo"].append(_bo_incumbent_curve(cs, r.bo_result, r.codec))
    for name, cur in curves.items():
        if not cur:
            continue
        C = np.array(cur)
        for t in range(C.shape[1]):
            m, se, n = _summary(C[:, t])
            out.rows.append(ResultRow(cfg.id, "iteration", t + 1, f"sum_mse_{name}", m, se, n,
                                      cfg.seed))
        if raw:
            for ti, row in enumerate(C):
                for t, v in enumerate(row):
                    out.raw.append(dict(experiment=cfg.id, sweep="iteration", value=t + 1,
                                        metric=f"sum_mse_{name}", trial=ti, x=float(v)))
    return out


def _per_snr(cfg: ExperimentConfig, raw: bool, wpt: bool) -> ExperimentOutput:
    out = ExperimentOutput()
    for si, snr in enumerate(cfg.sweep):
        p_max = cfg.optimizer.sigma2 * 10.0 ** (float(snr) / 10.0)
        w = cfg.optimizer.weights(p_max)
        vals: dict[str, list] = {}
        for ti in range(cfg.trials):
            rng = trial_rng(cfg.seed, cfg.id, si, ti)
            cs = _instance(cfg, rng)
            r = _solve_trial(cfg, cs, w, rng, si, ti, "fixed" if wpt else "closed_form")
            designs = {"alt_full": r.full, "alt_partial": r.partial}
            if r.bo is not None:
                designs["bo"] = r.bo
            for name, d in designs.items():
                if wpt:
                    vals.setdefault(f"zeta_{name}", []).append(metric_wpt_zeta(cs, d))
                else:
                    vals.setdefault(f"sum_mse_{name}", []).append(sum_mse(cs, d))
            if not wpt:
                vals.setdefault("lower_bound", []).append(
                    lower_bound_cost(cs, r.full.theta, p_max))
        for name, v in vals.items():
            v = np.asarray(v, dtype=float)
            finite = v[np.isfinite(v)]
            if finite.size < v.size:
                log.warning("%s: %d infinite %s values excluded at snr %s", cfg.id,
                            v.size - finite.size, name, snr)
            if finite.size == 0:
                out.rows.append(ResultRow(cfg.id, "snr_db", snr, name, float("inf"), None, 0,
                                          cfg.seed))
                continue
            m, se, n = _summary(finite)
            out.rows.append(ResultRow(cfg.id, "snr_db", snr, name, m, se, n, cfg.seed))
            if raw:
                for ti, x in enumerate(v):
                    out.raw.append(dict(experiment=cfg.id, sweep="snr_db", value=snr, metric=name,
                                        trial=ti, x=float(x)))
    return out


def _bo_vs_alt(cfg: ExperimentConfig, raw: bool) -> ExperimentOutput:
    out = ExperimentOutput()
    w = cfg.optimizer.weights()
    vals: dict[str, list] = {}
    for ti in range(cfg.trials):
        rng = trial_rng(cfg.seed, cfg.id, 0, ti)
        cs = _instance(cfg, rng)
        r = _solve_trial(cfg, cs, w, rng, 0, ti)
        vals.setdefault("sum_mse_alt_full", []).append(sum_mse(cs, r.full))
        vals.setdefault("sum_mse_alt_partial", []).append(sum_mse(cs, r.partial))
        if r.bo is not None:
            vals.setdefault("sum_mse_bo", []).append(sum_mse(cs, r.bo))
            vals.setdefault("bo_feasible", []).append(float(r.bo_result.feasible))
    for name, v in vals.items():
        m, se, n = _summary(v)
        out.rows.append(ResultRow(cfg.id, "epsilon", cfg.optimizer.epsilon, name, m, se, n,
                                  cfg.seed))
        if raw:
            for ti, x in enumerate(v):
                out.raw.append(dict(experiment=cfg.id, sweep="epsilon",
                                    value=cfg.optimizer.epsilon, metric=name, trial=ti,
                                    x=float(x)))
    return out


_RUNNERS = {
    "pd_vs_snr": _pd_vs_snr,
    "pd_vs_iter": _pd_vs_iter,
    "roc": _roc,
    "mse_vs_iter": _mse_vs_iter,
    "mse_vs_snr": lambda cfg, raw: _per_snr(cfg, raw, wpt=False),
    "wpt_zeta": lambda cfg, raw: _per_snr(cfg, raw, wpt=True),
    "bo_vs_alt": _bo_vs_alt,
}


def run_experiment(cfg: ExperimentConfig, emit_raw: bool = False) -> ExperimentOutput:
    return _RUNNERS[cfg.experiment](cfg, emit_raw)


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return dataclasses.replace(cfg, seed=seed)
