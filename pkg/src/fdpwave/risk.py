"""Monte Carlo risk, theoretical rates, rate fits and the small numerical
studies built on them (tails, oracle inequality, two-point lower bound)."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, stats

from . import seeding
from .besov import DensityModel, uniform_approx
from .calibration import DEFAULT_DRAWS, DEFAULT_N_REF, DEFAULT_PRIVACY_POWER, calibrated_schedule
from .errors import ArgumentError, ConfigurationError, DomainError
from .estimators import (
    _log,
    build_blocks,
    estimate_btpw,
    estimate_truncated_laplace,
    soft_threshold_block,
    ttpw_coefficients,
)
from .mechanisms import SurrogateBody, averaged_surrogate_noise
from .protocol import FederatedConfig, NoiseModel, _map, simulate_round
from .wavelets import MultiresCoefficients, MultiresIndexSet, WaveletBasis, reconstruct_point

logger = logging.getLogger(__name__)

ESTIMATOR_KINDS = ("btpw", "ttpw", "lap-trunc", "np-thresh", "truth", "zero-detail", "raw", "constant")
MIN_REPS = 50
MIN_TAIL_REPS = 10_000


# --------------------------------------------------------------------------- rates


def theoretical_rate_global(alpha: float, m: int, n: int, epsilon: float) -> float:
    """``N^{-2a/(2a+1)} + (m n^2 eps^2 / log N)^{-2a/(2a+2)}``."""
    N = m * n
    r = N ** (-2 * alpha / (2 * alpha + 1))
    if math.isfinite(epsilon):
        r += (m * n * n * epsilon * epsilon / math.log(N)) ** (-2 * alpha / (2 * alpha + 2))
    return r


class OutOfScopeWarning(UserWarning):
    """A rate was evaluated where its smoothness assumption does not hold."""


def theoretical_rate_pointwise(nu: float, m: int, n: int, epsilon: float) -> float:
    """``(N/log N)^{-2nu/(2nu+1)} + (m n^2 eps^2 / L_{m,N})^{-2nu/(2nu+2)}``.

    ``nu <= 1/2`` still returns a value but raises ``OutOfScopeWarning``.
    """
    if nu <= 0.5:
        warnings.warn(f"pointwise rate used with nu={nu} <= 1/2", OutOfScopeWarning, stacklevel=2)
    N = m * n
    lg = math.log(N)
    r = (N / lg) ** (-2 * nu / (2 * nu + 1))
    if math.isfinite(epsilon):
        L = lg * lg / m if m <= lg else lg
        r += (m * n * n * epsilon * epsilon / L) ** (-2 * nu / (2 * nu + 2))
    return r


def oracle_level(alpha: float, m: int, n: int, epsilon: float, l0: int, L_star: int) -> int:
    """Resolution balancing squared bias ``2^{-2 a L}`` against the dominant
    variance term; the returned level lies in ``[l0 - 1, L*]``."""
    N = m * n
    L_stat = math.log2(N) / (2 * alpha + 1)
    L = L_stat
    if math.isfinite(epsilon):
        L_priv = math.log2(m * n * n * epsilon * epsilon) / (2 * alpha + 2)
        stat = N ** (-2 * alpha / (2 * alpha + 1))
        priv = (m * n * n * epsilon * epsilon) ** (-2 * alpha / (2 * alpha + 2))
        if priv > stat:
            L = L_priv
    return int(min(L_star, max(l0 - 1, math.floor(L + 0.5))))


@dataclass(frozen=True)
class RateFit:
    x: tuple
    risk: tuple
    slope: float
    intercept: float
    slope_se: float
    target: Optional[float] = None
    tol: float = 0.15

    @property
    def passed(self) -> Optional[bool]:
        if self.target is None:
            return None
        return abs(self.slope - self.target) <= self.tol

    def to_json(self) -> dict:
        return {
            "x": list(self.x),
            "risk": list(self.risk),
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.slope_se,
            "target": self.target,
            "tolerance": self.tol,
            "verdict": None if self.passed is None else ("PASS" if self.passed else "FAIL"),
        }


def fit_rate_exponent(x: Sequence[float], risk: Sequence[float], target: Optional[float] = None,
                      tol: float = 0.15) -> RateFit:
    """Least squares slope of ``log risk`` on ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(risk, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 4:
        raise ArgumentError("need at least four matching points")
    if np.any(np.diff(x) <= 0):
        raise ArgumentError("x must be strictly increasing")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ArgumentError("rate fits need positive x and risk")
    res = stats.linregress(np.log(x), np.log(y))
    return RateFit(tuple(x.tolist()), tuple(y.tolist()), float(res.slope), float(res.intercept),
                   float(res.stderr), target, tol)


# --------------------------------------------------------------------------- MC risk


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str = "btpw"
    variant: str = "soft"
    kappa1: Optional[float] = None
    kappa2: Optional[float] = None
    L_alpha: Optional[int] = None
    alpha: Optional[float] = None
    constant: float = 1.0
    calib_draws: int = DEFAULT_DRAWS
    calib_N_ref: int = DEFAULT_N_REF
    calib_power: float = DEFAULT_PRIVACY_POWER

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ArgumentError(f"estimator kind must be one of {ESTIMATOR_KINDS}")
        if self.variant not in ("soft", "hard"):
            raise ArgumentError("variant must be 'soft' or 'hard'")


@dataclass(frozen=True)
class RiskReport:
    risk: float
    stderr: float
    reps: int
    theory: Optional[float]
    losses: np.ndarray = field(repr=False)
    tag: str = ""
    schedule: Optional[dict] = None
    tail: float = 0.0
    config: Optional[FederatedConfig] = None

    @property
    def ratio(self) -> Optional[float]:
        return None if not self.theory else self.risk / self.theory


def l2_loss(est: MultiresCoefficients, density: DensityModel) -> float:
    """``||f_hat - f||_2^2`` via Plancherel, including detail energy beyond ``L*``."""
    truth = density.truth(est.index_set.L)
    da = est.approx - truth.approx
    dd = est.detail - truth.detail
    return float(da @ da + dd @ dd + density.tail_energy(est.index_set.L))


class _Plan:
    """Reusable pieces of a risk study for one configuration."""

    def __init__(self, config: FederatedConfig, basis: WaveletBasis, spec: EstimatorSpec, mode: str):
        self.config = config
        self.basis = basis
        self.spec = spec
        L = config.L_star(basis.l0)
        self.iset = MultiresIndexSet(basis.l0, L)
        self.noise = NoiseModel(config, basis, self.iset)
        self.schedule = None
        self.blocks = build_blocks(L, config.N, basis.l0)
        if spec.kind in ("btpw", "np-thresh", "ttpw"):
            cfg = config if spec.kind != "np-thresh" else replace(config, mechanism="none", epsilon=math.inf)
            self.schedule = calibrated_schedule(
                cfg, basis, mode, spec.kappa1, spec.kappa2, spec.calib_N_ref, spec.calib_draws,
                power=spec.calib_power,
            )
        self.L_alpha = spec.L_alpha
        if spec.kind == "lap-trunc" and self.L_alpha is None:
            if spec.alpha is None:
                raise ArgumentError("lap-trunc needs alpha or L_alpha")
            self.L_alpha = oracle_level(spec.alpha, config.m, config.n, config.epsilon, basis.l0, L)

    def estimate(self, agg: MultiresCoefficients, density: DensityModel) -> MultiresCoefficients:
        k = self.spec.kind
        if k in ("btpw", "np-thresh"):
            tag = "NP-THRESH" if k == "np-thresh" else None
            return estimate_btpw(agg, self.schedule, self.blocks, self.spec.variant, tag).coeffs
        if k == "ttpw":
            return ttpw_coefficients(agg, self.schedule)
        if k == "lap-trunc":
            return estimate_truncated_laplace(agg, self.L_alpha).coeffs
        if k == "truth":
            return density.truth(self.iset.L)
        if k == "zero-detail":
            return agg.replace(detail=np.zeros_like(agg.detail))
        if k == "constant":
            # c times the uniform density.
            return agg.replace(approx=self.spec.constant * uniform_approx(self.basis, self.iset.l0),
                               detail=np.zeros_like(agg.detail))
        return agg


def _rep_config(config: FederatedConfig, rep: int) -> FederatedConfig:
    return config.with_seed(seeding.child_seed(config.seed, seeding.TAG_REP, rep))


def mc_global_risk(config: FederatedConfig, basis: WaveletBasis, density: DensityModel,
                   spec: EstimatorSpec = EstimatorSpec(), reps: int = 20, threads: int = 1) -> RiskReport:
    """Mean integrated squared error over ``reps`` independent rounds.

    Each replication uses its own seed derived from ``(config.seed, rep)``;
    replications run in parallel and are reduced in order.
    """
    if reps < MIN_REPS:
        raise ArgumentError(f"reps must be >= {MIN_REPS}")
    if not density.exact:
        raise ConfigurationError("global risk needs a density given exactly by its coefficients")
    plan = _Plan(config, basis, spec, "global")

    def one(r):
        agg, _ = simulate_round(_rep_config(config, r), basis, density, 1, plan.iset, plan.noise)
        return l2_loss(plan.estimate(agg, density), density)

    losses = np.array(_map(one, range(reps), threads))
    theory = None
    if density.cls is not None:
        theory = theoretical_rate_global(density.cls.alpha, config.m, config.n, config.epsilon)
    return RiskReport(
        float(losses.mean()), float(losses.std(ddof=1) / math.sqrt(reps)), reps, theory, losses, spec.kind,
        plan.schedule.to_json() if plan.schedule else None, density.tail_energy(plan.iset.L), config,
    )


def mc_pointwise_risk(config: FederatedConfig, basis: WaveletBasis, density: DensityModel, t0: float,
                      spec: EstimatorSpec = EstimatorSpec(kind="ttpw"), reps: int = 20,
                      threads: int = 1) -> RiskReport:
    """Mean squared error at the interior point ``t0``."""
    if not 0.0 < t0 < 1.0:
        raise DomainError("t0 must lie strictly inside (0, 1)")
    if reps < MIN_REPS:
        raise ArgumentError(f"reps must be >= {MIN_REPS}")
    plan = _Plan(config, basis, spec, "pointwise")
    target = float(density(t0))

    def one(r):
        agg, _ = simulate_round(_rep_config(config, r), basis, density, 1, plan.iset, plan.noise)
        return (float(reconstruct_point(plan.estimate(agg, density), t0)) - target) ** 2

    losses = np.array(_map(one, range(reps), threads))
    theory = None
    if density.cls is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OutOfScopeWarning)
            theory = theoretical_rate_pointwise(density.cls.nu, config.m, config.n, config.epsilon)
    return RiskReport(
        float(losses.mean()), float(losses.std(ddof=1) / math.sqrt(reps)), reps, theory, losses, spec.kind,
        plan.schedule.to_json() if plan.schedule else None, 0.0, config,
    )


# --------------------------------------------------------------------------- tails


def layer_cake_second_moment(x: np.ndarray, t: float) -> float:
    """``E[X^2 1{X >= t}]`` through ``t^2 P(X >= t) + int_t^inf 2s P(X >= s) ds``
    on the empirical law of ``x >= 0``."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    above = x[x >= t]
    if above.size == 0:
        return 0.0
    # The survival function is a step function: integrate it exactly.
    pts = np.concatenate([[t], above])
    surv = (n - np.searchsorted(x, pts[:-1], side="right")) / n
    return float(t * t * above.size / n + np.sum(surv * (pts[1:] ** 2 - pts[:-1] ** 2)))


def surrogate_tail_bound(t: float, sigma: float, b: int, m: int, slack: float = 10.0) -> float:
    """``slack * (t^2 P(t) + int_t^inf 2s P(s) ds)`` with the sub-exponential
    block tail ``P(s) = min(1, 5^b exp(-m min(s^2/(32 sigma^2), s/(8 sigma))))``
    for the mean of ``m`` vectors of independent Laplace(sigma) entries."""

    def P(s):
        return min(1.0, math.exp(b * math.log(5.0) - m * min(s * s / (32 * sigma**2), s / (8 * sigma))))

    tail, _ = integrate.quad(lambda s: 2 * s * P(s), t, math.inf, limit=200)
    return slack * (t * t * P(t) + tail)


@dataclass(frozen=True)
class TailReport:
    t: np.ndarray
    prob: np.ndarray
    prob_se: np.ndarray
    trunc2: np.ndarray
    trunc2_se: np.ndarray
    bound: np.ndarray
    second_moment: float
    sigma: float
    b: int
    m: int
    draws: int

    def below_bound(self) -> np.ndarray:
        return self.trunc2 <= self.bound

    def to_rows(self) -> list[dict]:
        return [
            dict(t=float(self.t[i]), prob=float(self.prob[i]), prob_se=float(self.prob_se[i]),
                 trunc2=float(self.trunc2[i]), trunc2_se=float(self.trunc2_se[i]), bound=float(self.bound[i]))
            for i in range(self.t.size)
        ]


def tail_empirics(basis: WaveletBasis, L: int, level: int, b: int, theta: float, m: int,
                  t_grid: Sequence[float], draws: int, rng: np.random.Generator,
                  slack: float = 10.0) -> TailReport:
    """Empirical block-norm tails of averaged surrogate noise on ``V_L``,
    next to the sub-exponential bound."""
    if draws < MIN_TAIL_REPS:
        raise ArgumentError(f"draws must be >= {MIN_TAIL_REPS}")
    iset = MultiresIndexSet(basis.l0, L)
    if not basis.l0 <= level <= L:
        raise ArgumentError("level outside the index set")
    if not 1 <= b <= 1 << level:
        raise ArgumentError("block size must be between 1 and 2^level")
    body = SurrogateBody(basis, iset)
    sl = iset.level_slice(level)
    norms = np.empty(draws)
    chunk = max(1, (1 << 20) // iset.s_L)
    for s in range(0, draws, chunk):
        k = min(chunk, draws - s)
        v = averaged_surrogate_noise(body, theta, m, rng, k)
        norms[s : s + k] = np.linalg.norm(v[:, sl][:, :b], axis=1)
    t = np.asarray(t_grid, dtype=float)
    sq = norms**2
    prob = np.array([(norms >= ti).mean() for ti in t])
    ind = [(sq * (norms >= ti)) for ti in t]
    trunc2 = np.array([x.mean() for x in ind])
    trunc2_se = np.array([x.std(ddof=1) / math.sqrt(draws) for x in ind])
    sigma = body.level_weight(level) / theta
    bound = np.array([surrogate_tail_bound(ti, sigma, b, m, slack) for ti in t])
    return TailReport(t, prob, np.sqrt(prob * (1 - prob) / draws), trunc2, trunc2_se, bound,
                      float(sq.mean()), sigma, b, m, draws)


# --------------------------------------------------------------------------- oracle inequality


@dataclass(frozen=True)
class OracleReport:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    diff_se: float
    reps: int

    @property
    def passed(self) -> bool:
        """``lhs <= rhs + 3`` standard errors of the paired difference."""
        return self.lhs <= self.rhs + 3.0 * self.diff_se


def oracle_inequality_check(f: np.ndarray, tau: float, noise: Callable[[np.random.Generator, int], np.ndarray],
                            reps: int, rng: np.random.Generator) -> OracleReport:
    """Compare ``E||soft_tau(f + Z) - f||^2`` with
    ``min(||f||^2, 4 tau^2) + 4 E||Z||^2 1{||Z|| > tau}`` on shared draws of ``Z``.

    ``noise(rng, reps)`` must return a ``(reps, d)`` array.
    """
    if reps < MIN_TAIL_REPS:
        raise ArgumentError(f"reps must be >= {MIN_TAIL_REPS}")
    if tau < 0:
        raise ArgumentError("tau must be nonnegative")
    f = np.asarray(f, dtype=float).ravel()
    Z = np.asarray(noise(rng, reps), dtype=float)
    if Z.shape != (reps, f.size):
        raise ArgumentError("noise sampler returned the wrong shape")
    Y = f + Z
    nrm = np.linalg.norm(Y, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(nrm > tau, 1.0 - tau / np.where(nrm > 0, nrm, 1.0), 0.0)
    lhs = np.sum((fac[:, None] * Y - f) ** 2, axis=1)
    zn = np.linalg.norm(Z, axis=1)
    rhs = min(float(f @ f), 4.0 * tau * tau) + 4.0 * zn**2 * (zn > tau)
    se = lambda v: float(v.std(ddof=1) / math.sqrt(reps))
    return OracleReport(float(lhs.mean()), se(lhs), float(rhs.mean()), se(rhs), se(lhs - rhs), reps)


def surrogate_block_sampler(basis: WaveletBasis, L: int, level: int, d: int, theta: float, m: int = 1):
    """Sampler of ``d`` coordinates of one block of (averaged) surrogate noise
    at ``level`` of ``V_L``, in the ``noise(rng, reps)`` form used above."""
    iset = MultiresIndexSet(basis.l0, L)
    if not basis.l0 <= level <= L or d > 1 << level:
        raise ArgumentError("block does not fit the level")
    body = SurrogateBody(basis, iset)
    start = iset.level_slice(level).start

    def sample(rng: np.random.Generator, reps: int) -> np.ndarray:
        return averaged_surrogate_noise(body, theta, m, rng, reps)[:, start : start + d]

    return sample


def soft_threshold_risk_single(f: np.ndarray, v: np.ndarray, tau: float) -> float:
    return float(np.sum((soft_threshold_block(f + v, tau) - f) ** 2))


# --------------------------------------------------------------------------- two-point lower bound


@dataclass(frozen=True)
class HodgeReport:
    p_grid: np.ndarray
    risk: np.ndarray
    stderr: np.ndarray
    threshold: float
    noise_scale: float
    m: int
    n: int
    epsilon: float
    C: float

    @property
    def risk_at_half(self) -> float:
        return float(self.risk[np.argmin(np.abs(self.p_grid - 0.5))])

    @property
    def sup_risk(self) -> float:
        return float(self.risk.max())

    def to_rows(self) -> list[dict]:
        return [dict(p=float(p), risk=float(r), stderr=float(s)) for p, r, s in zip(self.p_grid, self.risk, self.stderr)]


def hodge_threshold(m: int, n: int, epsilon: float, C: float = 1.0) -> float:
    return C * math.log(m * n) / math.sqrt(m * n * epsilon * epsilon)


def hodge_grid(m: int, n: int, epsilon: float, C: float = 1.0, points: int = 41) -> np.ndarray:
    """``p`` values from 1/2 out to twice the decision threshold."""
    thresh = hodge_threshold(m, n, epsilon, C)
    return np.clip(0.5 + thresh * np.linspace(0.0, 2.0, points), 0.05, 0.95)


def hodge_demo(m: int, n: int, epsilon: float, C: float = 1.0, p_grid: Optional[Sequence[float]] = None,
               reps: int = 2000, seed: int = 0) -> HodgeReport:
    """Bernoulli mean estimation from Laplace-privatized server means, with the
    estimator that snaps to 1/2 inside the threshold ``C log N / sqrt(m n eps^2)``.

    The averaged transcript is ``Bin(N, p)/N + (2/(n eps)) (G1 - G2)/m``,
    which is the mean of ``m`` server means plus Laplace noise.
    """
    if m < 1 or n < 1 or not epsilon > 0:
        raise ArgumentError("need m, n >= 1 and epsilon > 0")
    if C < 0:
        raise ArgumentError("C must be nonnegative")
    N = m * n
    thresh = hodge_threshold(m, n, epsilon, C)
    grid = hodge_grid(m, n, epsilon, C) if p_grid is None else np.asarray(p_grid, dtype=float)
    if np.any((grid <= 0) | (grid >= 1)):
        raise ArgumentError("p grid must lie inside (0, 1)")
    scale = 2.0 / (n * epsilon)
    risks, ses = [], []
    for i, p in enumerate(grid):
        rng = seeding.stream(seed, seeding.TAG_MISC, "hodge", i)
        T = rng.binomial(N, p, reps) / N + scale * (rng.gamma(m, 1.0, reps) - rng.gamma(m, 1.0, reps)) / m
        est = np.where(np.abs(T - 0.5) <= thresh, 0.5, T)
        loss = (est - p) ** 2
        risks.append(loss.mean())
        ses.append(loss.std(ddof=1) / math.sqrt(reps))
    return HodgeReport(grid, np.array(risks), np.array(ses), thresh, scale, m, n, epsilon, C)
