"""Flat JSON experiment configuration.

Every key has a default and a short provenance note.  Unknown keys are
rejected and values are validated before any computation starts.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

from .errors import ConfigurationError

KINDS = ("simulate", "rate-sweep", "pointwise-sweep", "tails", "hodge", "verify")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "simulate"
    seed: int = 0
    # federated protocol
    m: int = 8
    n: int = 128
    epsilon: Optional[float] = None
    mechanism: str = "none"
    L_star_override: Optional[int] = None
    lstar_log_base: float = 2.0
    laplace_rule: str = "composition"
    burn_in: int = 5000
    thinning: int = 20
    chord_method: str = "lp"
    oracle_grid: int = 4096
    round_mode: str = "auto"
    C0: Optional[float] = None
    # basis and truth
    family: str = "haar"
    A: int = 1
    l0: int = 0
    cascade_depth: int = 14
    alpha: float = 0.8
    p: float = 2.0
    q: float = 2.0
    R: float = 2.0
    C_R: Optional[float] = None
    profile: str = "envelope"
    L_gen: int = 12
    n_truths: int = 1
    # estimator
    estimator: str = "btpw"
    variant: str = "soft"
    kappa1: Optional[float] = None
    kappa2: Optional[float] = None
    kappa_N_ref: int = 1024
    kappa_draws: int = 10000
    kappa_power: float = 2.0
    threshold_log_base: float = math.e
    L_alpha: Optional[int] = None
    t0: float = 0.3
    # sweeps
    reps: int = 50
    N_list: tuple = (1024, 2048, 4096, 8192, 16384, 32768, 65536)
    m_list: tuple = ("fixed",)
    epsilon_list: tuple = ()
    fit_x: str = "N"
    fit_target: Optional[float] = None
    fit_tolerance: float = 0.15
    # tails
    tail_L: int = 6
    tail_levels: tuple = (2, 4)
    tail_blocks: tuple = (1, 4)
    tail_m_list: tuple = (1, 16)
    tail_theta: float = 1.0
    tail_draws: int = 100000
    tail_t_points: int = 25
    tail_slack: float = 10.0
    # two-point demo
    hodge_C: float = 1.0
    hodge_N_list: tuple = (1024, 4096, 16384)
    hodge_m_list: tuple = ("1", "N")
    hodge_reps: int = 20000
    hodge_points: int = 41
    # verify
    verify_pairs: int = 200
    verify_reps: int = 10000

    def __post_init__(self):
        validate(self)

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    def hash(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_json()
        d.update(changes)
        return from_dict(d)


PROVENANCE: dict[str, str] = {
    "kind": "experiment to run",
    "seed": "root seed; every stream is derived from (seed, tag, index)",
    "m": "number of servers",
    "n": "samples per server",
    "epsilon": "privacy budget per server; null means no privacy",
    "mechanism": "none | laplace | osc-exact | osc-surrogate",
    "L_star_override": "finest level; null means ceil(log_b N) with b = lstar_log_base",
    "lstar_log_base": "L* uses base-2 logarithms so that 2^L* is about N (override via L_star_override)",
    "laplace_rule": "composition: whole transcript epsilon-DP; coefficient: per-coefficient bound",
    "burn_in": "hit-and-run burn-in steps (MCMC default 5000)",
    "thinning": "hit-and-run steps between kept draws",
    "chord_method": "lp (exact ray LP) or bisection",
    "oracle_grid": "grid points for the oscillation-norm LP",
    "round_mode": "auto | servers | pooled execution path",
    "C0": "overlap constant of the dominating body; null means computed from the basis",
    "family": "haar | daubechies",
    "A": "Daubechies order (1 for Haar)",
    "l0": "coarsest level",
    "cascade_depth": "dyadic depth of the cascade tables",
    "alpha": "Besov smoothness of generated truths",
    "p": "Besov p",
    "q": "Besov q",
    "R": "Besov radius",
    "C_R": "coefficient envelope constant; null means the largest value that keeps the density floor",
    "profile": "envelope: coefficients on the envelope with random signs; uniform: inside it",
    "L_gen": "finest generated level of truths",
    "n_truths": "independent truths per configuration",
    "estimator": "btpw | ttpw | lap-trunc | np-thresh | truth | zero-detail | raw",
    "variant": "soft | hard block thresholding",
    "kappa1": "statistical threshold constant; null means calibrated (1 - 1/N_ref quantile, Monte Carlo)",
    "kappa2": "privacy threshold constant; null means calibrated (1 - N^-kappa_power quantile)",
    "kappa_N_ref": "reference sample size for kappa1 calibration",
    "kappa_draws": "Monte Carlo draws for calibration (seeded)",
    "kappa_power": "privacy calibration exceedance exponent: per-block exceedance N^-power",
    "threshold_log_base": "logarithm base in thresholds, block sizes and L_{m,N} (natural)",
    "L_alpha": "truncation level of lap-trunc; null means the rate-balancing oracle level",
    "t0": "evaluation point of pointwise risk",
    "reps": "Monte Carlo replications per configuration (>= 50)",
    "N_list": "total sample sizes of a sweep",
    "m_list": "server counts: integers, 'N' (one sample each), 'fixed' (use m)",
    "epsilon_list": "privacy budgets of a sweep; empty means [epsilon]",
    "fit_x": "N or privacy (m n^2 eps^2 / log N) as the rate-fit abscissa",
    "fit_target": "expected slope; null means derived from alpha",
    "fit_tolerance": "slope tolerance of the verdict",
    "tail_L": "finest level of the noise body in tail studies",
    "tail_levels": "levels whose blocks are examined",
    "tail_blocks": "block sizes examined",
    "tail_m_list": "numbers of averaged noise vectors",
    "tail_theta": "noise rate n * epsilon",
    "tail_draws": "draws per tail curve (>= 10^4)",
    "tail_t_points": "points of the t grid",
    "tail_slack": "multiplicative slack on the analytic tail bound",
    "hodge_C": "threshold constant of the two-point demo",
    "hodge_N_list": "sample sizes of the two-point demo",
    "hodge_m_list": "server counts of the two-point demo ('1', 'N' or integers)",
    "hodge_reps": "replications per grid point",
    "hodge_points": "p grid size",
    "verify_pairs": "neighboring dataset pairs in the sensitivity check",
    "verify_reps": "replications in the oracle-inequality check (>= 10^4)",
}

_TUPLES = {f.name for f in fields(ExperimentConfig) if isinstance(f.default, tuple)}


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigurationError(msg)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float))) and not isinstance(v, bool)


def _m_token(v) -> bool:
    return (_is_int(v) and v >= 1) or v in ("N", "fixed", "1") or (isinstance(v, str) and v.isdigit() and int(v) >= 1)


def validate(c: ExperimentConfig) -> None:
    _check(c.kind in KINDS, f"kind must be one of {KINDS}")
    for name in ("m", "n", "reps", "n_truths", "kappa_N_ref", "kappa_draws", "tail_draws", "tail_t_points",
                 "hodge_reps", "hodge_points", "verify_pairs", "verify_reps", "oracle_grid", "burn_in", "thinning",
                 "cascade_depth", "L_gen", "tail_L"):
        _check(_is_int(getattr(c, name)) and getattr(c, name) >= 1, f"{name} must be a positive integer")
    _check(_is_int(c.seed) and 0 <= c.seed < 1 << 64, "seed must be an unsigned 64-bit integer")
    _check(_is_int(c.l0) and c.l0 >= 0, "l0 must be a nonnegative integer")
    _check(_is_int(c.A), "A must be an integer")
    _check(c.epsilon is None or (_is_num(c.epsilon) and c.epsilon > 0), "epsilon must be positive or null")
    _check(c.mechanism in ("none", "laplace", "osc-exact", "osc-surrogate"), "unknown mechanism")
    _check(c.mechanism == "none" or c.epsilon is not None or len(c.epsilon_list) > 0,
           "a private mechanism needs epsilon")
    _check(c.family in ("haar", "daubechies"), "family must be haar or daubechies")
    _check(c.estimator in ("btpw", "ttpw", "lap-trunc", "np-thresh", "truth", "zero-detail", "raw"),
           "unknown estimator")
    _check(c.variant in ("soft", "hard"), "variant must be soft or hard")
    _check(c.profile in ("uniform", "envelope"), "profile must be uniform or envelope")
    _check(c.fit_x in ("N", "privacy"), "fit_x must be N or privacy")
    _check(c.round_mode in ("auto", "servers", "pooled"), "unknown round_mode")
    _check(c.chord_method in ("lp", "bisection"), "chord_method must be lp or bisection")
    _check(c.laplace_rule in ("composition", "coefficient"), "unknown laplace_rule")
    for name in ("alpha", "R", "tail_theta", "tail_slack", "kappa_power", "fit_tolerance", "lstar_log_base",
                 "threshold_log_base", "p", "q"):
        _check(_is_num(getattr(c, name)) and getattr(c, name) > 0, f"{name} must be positive")
    _check(c.hodge_C >= 0, "hodge_C must be nonnegative")
    _check(0.0 < c.t0 < 1.0, "t0 must lie in (0, 1)")
    for name in ("kappa1", "kappa2", "C_R", "C0", "fit_target"):
        v = getattr(c, name)
        _check(v is None or _is_num(v), f"{name} must be a number or null")
    for name in ("kappa1", "kappa2", "C0"):
        v = getattr(c, name)
        _check(v is None or v > 0, f"{name} must be positive")
    for name in ("L_star_override", "L_alpha"):
        v = getattr(c, name)
        _check(v is None or _is_int(v), f"{name} must be an integer or null")
    _check(all(_is_int(v) and v >= 2 for v in c.N_list), "N_list entries must be integers >= 2")
    _check(all(_m_token(v) for v in c.m_list), "m_list entries must be positive integers, 'N' or 'fixed'")
    _check(all(_m_token(v) for v in c.hodge_m_list), "hodge_m_list entries must be positive integers or 'N'")
    _check(all(_is_num(v) and v > 0 for v in c.epsilon_list), "epsilon_list entries must be positive")
    _check(all(_is_int(v) and v >= 2 for v in c.hodge_N_list), "hodge_N_list entries must be integers >= 2")
    _check(all(_is_int(v) and v >= 1 for v in c.tail_blocks + c.tail_m_list), "tail lists need positive integers")
    _check(all(_is_int(v) and c.l0 <= v <= c.tail_L for v in c.tail_levels), "tail_levels must lie in l0..tail_L")
    _check(c.reps >= 50 or c.kind in ("simulate", "verify", "tails", "hodge"), "reps must be >= 50")
    _check(c.tail_draws >= 10000, "tail_draws must be >= 10000")
    _check(c.verify_reps >= 10000, "verify_reps must be >= 10000")


def from_dict(d: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigurationError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    kw = {}
    for k, v in d.items():
        if k in _TUPLES:
            if not isinstance(v, (list, tuple)):
                raise ConfigurationError(f"{k} must be a list")
            v = tuple(v)
        elif isinstance(v, (list, dict)):
            raise ConfigurationError(f"{k} must be a scalar (the config is flat)")
        kw[k] = v
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:  # pragma: no cover - guarded by the key check
        raise ConfigurationError(str(exc)) from exc


def loads(text: str) -> ExperimentConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}") from exc
    return from_dict(d)


def load(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def list_defaults() -> list[tuple[str, Any, str]]:
    d = ExperimentConfig().to_json()
    return [(k, d[k], PROVENANCE[k]) for k in d]
