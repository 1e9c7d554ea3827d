"""Calibration of the threshold constants by quantile matching.

``kappa1`` matches ``sqrt(kappa1 log N / N)`` to the ``1 - N^-1`` quantile of
the block norm of purely statistical noise (uniform truth, reference sample
size, Monte Carlo).

``kappa2`` matches the privacy part of ``tau_l`` to the ``1 - N^-power``
quantile (``power = 2`` by default) of the block norm of the aggregated
privacy noise at the experiment's own ``(m, n, epsilon, L*)``, maximized over
levels.  When the aggregated coordinates are iid ``(s/m)(G1 - G2)`` with
``G1, G2 ~ Gamma(m)`` (Laplace noise, or surrogate noise with an inactive
box) the quantile is computed from the exact law; otherwise it is a Monte
Carlo quantile, capped at what the sample can resolve.
"""
from __future__ import annotations

import functools
import logging
import math
from typing import Optional

import numpy as np
from scipy import special, stats

from . import kernels, seeding
from .estimators import (
    ThresholdSchedule,
    _log,
    build_blocks,
    build_schedule,
    elbow_factor,
)
from .protocol import FederatedConfig, NoiseModel
from .wavelets import MultiresIndexSet, WaveletBasis

logger = logging.getLogger(__name__)

DEFAULT_DRAWS = 10_000
DEFAULT_N_REF = 1 << 10
DEFAULT_PRIVACY_POWER = 2.0


def _upper_quantile(samples: np.ndarray, exceed: float) -> float:
    # Never ask for a quantile the sample cannot resolve.
    prob = min(1.0 - exceed, 1.0 - 5.0 / samples.shape[0])
    return float(np.quantile(samples, prob))


def gamma_difference_sf(x, m: int, cells: int = 1500) -> np.ndarray:
    """``P(G1 - G2 > x)`` for independent ``Gamma(m, 1)`` variables, ``x >= 0``.

    Conditions on ``G2`` (midpoint rule over its bulk) and uses the
    regularized upper incomplete gamma function, which keeps relative
    accuracy far into the tail.
    """
    lo = float(stats.gamma.ppf(1e-30, m)) if m > 1 else 0.0
    hi = float(stats.gamma.isf(1e-20, m))
    edges = np.linspace(lo, hi, cells + 1)
    g = 0.5 * (edges[1:] + edges[:-1])
    w = np.exp(stats.gamma.logpdf(g, m)) * np.diff(edges)
    w /= w.sum()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x.size)
    for i in range(0, x.size, 256):
        out[i : i + 256] = special.gammaincc(m, x[i : i + 256, None] + g[None, :]) @ w
    return out


@functools.lru_cache(maxsize=256)
def gamma_difference_block_quantile(m: int, b: int, exceed: float, cells: int = 4000) -> float:
    """Upper ``exceed`` quantile of ``||(G1 - G2)_{1..b}||_2``.

    The law of one squared coordinate is binned on ``[0, s_max]`` and
    convolved ``b`` times; with only nonnegative terms the tail keeps its
    relative accuracy.  ``s_max`` is chosen so that the mass it cuts off is
    below ``exceed / 1000`` (a union bound over coordinates).
    """
    if not 0.0 < exceed < 1.0:
        raise ValueError("exceed must lie in (0, 1)")
    target = exceed * 1e-3 / b
    hi = 1.0
    while 2.0 * gamma_difference_sf(hi, m)[0] > target:
        hi *= 2.0
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if 2.0 * gamma_difference_sf(mid, m)[0] > target:
            lo = mid
        else:
            hi = mid
    h = b * hi * hi / cells
    sf = 2.0 * gamma_difference_sf(np.sqrt(np.arange(cells + 1) * h), m)
    sf[0] = 1.0
    p = np.append(np.maximum(-np.diff(sf), 0.0), sf[-1])
    tot = p
    for _ in range(b - 1):
        tot = np.convolve(tot, p)
    surv = np.cumsum(tot[::-1])[::-1]
    idx = int(np.nonzero(surv <= exceed)[0][0])
    # A bin-index sum i covers squared norms in [i h, (i + b) h).
    return math.sqrt((idx + b / 2.0) * h)


@functools.lru_cache(maxsize=64)
def calibrate_statistical(basis: WaveletBasis, mode: str, N_ref: int = DEFAULT_N_REF,
                          draws: int = DEFAULT_DRAWS, seed: int = 0, log_base: float = math.e) -> float:
    """``kappa1`` from block norms of empirical coefficients of uniform samples."""
    if mode == "global":
        b = build_blocks(20, N_ref, 20, log_base).size(20)
    else:
        b = 1
    level = max(basis.l0, int(math.log2(b)) + 3)
    rng = seeding.stream(seed, seeding.TAG_CALIBRATION, "stat", N_ref, level)
    w = np.full(N_ref, 1.0 / N_ref)
    norms = []
    for _ in range(draws):
        x = rng.random(N_ref)
        c = kernels.scatter_level(x, w, basis.psi_table, basis.res, basis.support_len, level, basis.exact)
        c *= 2.0 ** (level / 2.0)
        norms.append(np.linalg.norm(c.reshape(-1, b), axis=1))
    q = _upper_quantile(np.concatenate(norms), 1.0 / N_ref)
    return q * q * N_ref / _log(N_ref, log_base)


def _coordinate_scale(noise: NoiseModel, level: int) -> Optional[float]:
    """Per-server Laplace scale of the detail noise at ``level`` when the
    coordinates are iid Laplace, else None."""
    if noise.mechanism == "laplace":
        return float(noise.scales[noise.index_set.level_slice(level).start])
    if noise.mechanism == "osc-surrogate" and noise.body.box_hit_probability() * noise.config.m <= 1e-12:
        return noise.body.level_weight(level) / noise.detail_theta
    return None


def privacy_block_quantile(noise: NoiseModel, level: int, b: int, exceed: float, draws: int = DEFAULT_DRAWS,
                           rng: Optional[np.random.Generator] = None) -> float:
    """Upper ``exceed`` quantile of the norm of ``b`` aggregated noise
    coordinates at ``level``."""
    m = noise.config.m
    scale = _coordinate_scale(noise, level)
    if scale is not None:
        return gamma_difference_block_quantile(m, b, float(exceed)) * scale / m
    if rng is None:
        rng = seeding.stream(0, seeding.TAG_CALIBRATION, "priv", level)
    sl = noise.index_set.level_slice(level)
    out = np.array([noise.mean_noise(m, rng)[1][sl][:b] for _ in range(draws)])
    return _upper_quantile(np.linalg.norm(out, axis=1), exceed)


def calibrate_privacy(config: FederatedConfig, basis: WaveletBasis, mode: str, draws: int = DEFAULT_DRAWS,
                      seed: int = 0, log_base: float = math.e, power: float = DEFAULT_PRIVACY_POWER,
                      index_set: Optional[MultiresIndexSet] = None) -> float:
    """``kappa2`` for the configured mechanism (0 when there is none)."""
    if not config.private:
        return 0.0
    if power <= 0:
        raise ValueError("power must be positive")
    return _calibrate_privacy_cached(config, basis, mode, draws, seed, log_base, float(power),
                                     index_set or MultiresIndexSet(basis.l0, config.L_star(basis.l0)))


@functools.lru_cache(maxsize=64)
def _calibrate_privacy_cached(config, basis, mode, draws, seed, log_base, power, iset) -> float:
    noise = NoiseModel(config, basis, iset)
    m, n, eps, N = config.m, config.n, config.epsilon, config.N
    blocks = build_blocks(iset.L, N, iset.l0, log_base)
    factor = _log(N, log_base) ** 2 if mode == "global" else elbow_factor(m, N, log_base)
    exceed = float(N) ** (-power)
    kappa = 0.0
    for l in iset.levels:
        b = blocks.size(l) if mode == "global" else 1
        rng = seeding.stream(seed, seeding.TAG_CALIBRATION, "priv", l)
        q = privacy_block_quantile(noise, l, b, exceed, draws, rng)
        kappa = max(kappa, q * q * m * n * n * eps * eps / ((1 << l) * factor))
    return kappa


def calibrated_schedule(config: FederatedConfig, basis: WaveletBasis, mode: str,
                        kappa1: Optional[float] = None, kappa2: Optional[float] = None,
                        N_ref: int = DEFAULT_N_REF, draws: int = DEFAULT_DRAWS, seed: int = 0,
                        log_base: float = math.e, power: float = DEFAULT_PRIVACY_POWER) -> ThresholdSchedule:
    """Schedule whose missing constants are filled by calibration."""
    calibrated = False
    if kappa1 is None:
        kappa1 = calibrate_statistical(basis, mode, N_ref, draws, seed, log_base)
        calibrated = True
    eps = config.epsilon if config.private else math.inf
    if kappa2 is None:
        kappa2 = calibrate_privacy(config, basis, mode, draws, seed, log_base, power) if config.private else 1.0
        calibrated = calibrated or config.private
    L_star = config.L_star(basis.l0)
    return build_schedule(mode, config.m, config.n, eps, (kappa1, kappa2), L_star, basis.l0,
                          "calibrated" if calibrated else "manual", log_base)
