"""Experiment configuration: JSON in, validated dataclasses out.

Unknown keys are rejected at every level so that a typo never silently
falls back to a default.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..channel import Dims, Weights

EXPERIMENTS = ("pd_vs_snr", "pd_vs_iter", "roc", "mse_vs_iter", "mse_vs_snr", "wpt_zeta",
               "bo_vs_alt")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


@dataclass(frozen=True)
class SensingParams:
    J: int = 10
    J_values: tuple = ()  # extra series for pd_vs_snr
    J_bs: int | None = None
    R: int = 25
    P01: float = 0.2
    P10: float = 0.3
    pfa: float = 0.01
    attack: str = "always_one"
    edge_prob: float = 0.8
    tau_a: float = 0.01
    snr_db: float = 5.0
    calib_trials: int = 10000
    naive_baseline: bool = False  # also report untrimmed consensus


@dataclass(frozen=True)
class OptimizerParams:
    lam: float = 1.0
    mu: float = 0.01
    gamma_leak: float = 0.1
    p_max: float = 1.0
    sigma2: float = 1.0
    gamma0: float = 0.1
    alpha: float = 0.05
    rho: float = 1.0
    T_max: int = 100
    tol: float = 1e-3
    epsilon: float = 0.1  # partial-CSI error level
    accel: bool = False

    def weights(self, p_max: float | None = None) -> Weights:
        return Weights(self.lam, self.mu, self.gamma_leak, self.p_max if p_max is None else p_max)


@dataclass(frozen=True)
class BoParams:
    enabled: bool = True
    T: int = 40
    n_init: int = 8
    n_mc: int = 16
    acquisition: str = "eic"
    d: int | None = None
    eps: float = 0.5
    box: float = 3.0
    n_candidates: int = 512
    n_refine: int = 20
    analytic_g1: bool = True
    sampler: str = "perturbed"  # "perturbed" around the trial channels, or "rayleigh"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dims: Dims
    trials: int = 100
    seed: int = 0
    name: str | None = None
    sweep: tuple = ()
    sensing: SensingParams = field(default_factory=SensingParams)
    optimizer: OptimizerParams = field(default_factory=OptimizerParams)
    bo: BoParams = field(default_factory=BoParams)

    @property
    def id(self) -> str:
        return self.name or self.experiment


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(data) - names)
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown key")
    kw = {}
    for k, v in data.items():
        kw[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(path or cls.__name__, str(e)) from None


def _check(cond: bool, field: str, msg: str):
    if not cond:
        raise ConfigError(field, msg)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    _check(cfg.experiment in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")
    _check(isinstance(cfg.trials, int) and cfg.trials >= 1, "trials", "must be an integer >= 1")
    _check(isinstance(cfg.seed, int) and 0 <= cfg.seed < 2 ** 64, "seed", "must be a u64")
    s, o, b = cfg.sensing, cfg.optimizer, cfg.bo
    _check(s.J >= 1 and all(j >= 1 for j in s.J_values), "sensing.J", "must be >= 1")
    _check(s.R >= 1, "sensing.R", "must be >= 1")
    _check(0 <= s.P01 <= 1 and 0 <= s.P10 <= 1 and s.P01 + s.P10 > 0, "sensing.P01",
           "transition probabilities must lie in [0, 1] with P01 + P10 > 0")
    _check(0 < s.pfa < 1, "sensing.pfa", "must lie in (0, 1)")
    _check(s.calib_trials * s.pfa >= 1, "sensing.calib_trials", "need calib_trials >= 1 / pfa")
    _check(s.attack in ("always_one", "always_zero", "inverted", "uniform_random", "none"),
           "sensing.attack", "unknown attack")
    _check(s.tau_a > 0, "sensing.tau_a", "must be positive")
    _check(o.rho > 0 and o.gamma0 > 0 and o.alpha >= 0, "optimizer.rho", "step/penalty out of range")
    _check(o.T_max >= 1 and o.tol >= 0, "optimizer.T_max", "must be >= 1")
    _check(0 <= o.epsilon < 1, "optimizer.epsilon", "must lie in [0, 1)")
    _check(o.sigma2 > 0, "optimizer.sigma2", "must be positive")
    try:
        o.weights()
    except ValueError as e:
        raise ConfigError("optimizer", str(e)) from None
    _check(b.T > b.n_init >= 2, "bo.T", "need T > n_init >= 2")
    _check(b.n_mc >= 1, "bo.n_mc", "must be >= 1")
    _check(b.acquisition in ("eic", "cucb"), "bo.acquisition", "must be eic or cucb")
    _check(b.sampler in ("perturbed", "rayleigh"), "bo.sampler", "must be perturbed or rayleigh")
    if cfg.experiment in ("pd_vs_snr", "roc", "mse_vs_snr", "wpt_zeta", "pd_vs_iter"):
        _check(len(cfg.sweep) >= 1, "sweep", f"{cfg.experiment} needs a non-empty sweep")
    if cfg.experiment == "roc":
        _check(all(0 < v < 1 for v in cfg.sweep), "sweep", "false-alarm targets must lie in (0, 1)")
        _check(all(s.calib_trials * v >= 1 for v in cfg.sweep), "sensing.calib_trials",
               "too few calibration trials for the smallest target")
    if cfg.experiment == "pd_vs_iter":
        _check(all(float(v).is_integer() and v >= 1 for v in cfg.sweep), "sweep",
               "pd_vs_iter sweeps honest-user counts (positive integers)")
    return cfg


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    data = dict(data)
    if "experiment" not in data:
        raise ConfigError("experiment", "missing")
    if "dims" not in data:
        raise ConfigError("dims", "missing")
    kw = {}
    kw["dims"] = _build(Dims, data.pop("dims"), "dims")
    for key, cls in (("sensing", SensingParams), ("optimizer", OptimizerParams),
                     ("bo", BoParams)):
        if key in data:
            kw[key] = _build(cls, data.pop(key), key)
    cfg = _build(ExperimentConfig, {**data, **{k: None for k in kw}}, "")
    cfg = dataclasses.replace(cfg, **kw)
    return validate(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e}") from None
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)
