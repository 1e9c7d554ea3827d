"""Privacy noise: K-norm (oscillation) mechanism, its dominating-body
surrogate, and the coordinatewise Laplace baseline.

A K-norm draw is ``D * U`` with ``D ~ Gamma(d + 1, 1/theta)`` and ``U``
uniform on the unit ball ``K``.  The surrogate replaces ``K`` by the convex
body

    K' = { u : |u_lk| <= osc(psi_lk),  sum_lk |u_lk| / c_l <= 1 },
    c_l = C0 * sup|psi| * 2^{l/2 + 1},

where ``C0`` is the largest number of basis functions of ``V_L`` whose
supports can share a point.  ``K`` is contained in ``K'``, so the norm of
``K'`` is dominated by the oscillation norm and the surrogate mechanism is
itself epsilon-DP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, ConfigurationError, InternalError
from .oscnorm import HitAndRun, MCMCSettings, NormOracle
from .wavelets import MultiresIndexSet, WaveletBasis

MECHANISM_TAGS = ("exact-mcmc", "surrogate", "laplace")


def _check_theta(theta: float) -> None:
    if not (theta > 0 and math.isfinite(theta)):
        raise ArgumentError(f"theta must be positive and finite, got {theta}")


def sample_radius(s_L: int, theta: float, rng: np.random.Generator, size=None):
    """Gamma radius with shape ``s_L + 1`` and scale ``1/theta``."""
    _check_theta(theta)
    if s_L < 1:
        raise ArgumentError("s_L must be >= 1")
    return rng.gamma(s_L + 1, 1.0 / theta, size=size)


def clique_constant(basis: WaveletBasis, index_set: MultiresIndexSet) -> int:
    """Largest number of ``psi_lk`` in ``V_L`` that can be nonzero at one point."""
    return int(sum(basis.overlap(l) for l in index_set.levels))


@dataclass(frozen=True, eq=False)
class SurrogateBody:
    basis: WaveletBasis
    index_set: MultiresIndexSet
    C0: float = field(default=None)
    weights: np.ndarray = field(default=None, repr=False)
    box: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        C0 = clique_constant(self.basis, self.index_set) if self.C0 is None else float(self.C0)
        if C0 <= 0:
            raise ConfigurationError("C0 must be positive")
        lv = self.index_set.level_of_entries()
        c_level = {l: C0 * self.basis.sup_psi * 2.0 ** (l / 2.0 + 1.0) for l in self.index_set.levels}
        box_level = {l: self.basis.level_osc(l) for l in self.index_set.levels}
        w = np.array([c_level[l] for l in lv])
        bx = np.array([box_level[l] for l in lv])
        w.setflags(write=False)
        bx.setflags(write=False)
        object.__setattr__(self, "C0", C0)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "box", bx)

    @property
    def dim(self) -> int:
        return self.index_set.s_L

    def level_weight(self, l: int) -> float:
        return float(self.weights[self.index_set.level_slice(l).start])

    def contains(self, u: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        u = np.atleast_2d(u)
        in_box = np.all(np.abs(u) <= self.box * (1 + tol), axis=1)
        in_l1 = np.sum(np.abs(u) / self.weights, axis=1) <= 1 + tol
        return in_box & in_l1

    def gauge(self, u: np.ndarray) -> np.ndarray:
        """Minkowski functional of the body."""
        u = np.atleast_2d(u)
        return np.maximum(np.max(np.abs(u) / self.box, axis=1), np.sum(np.abs(u) / self.weights, axis=1))

    def box_hit_probability(self) -> float:
        """Chance that an unrestricted cross-polytope draw violates the box."""
        d = self.dim
        r = self.box / self.weights
        return float(np.sum(np.where(r < 1.0, (1.0 - np.minimum(r, 1.0)) ** d, 0.0)))


def sample_direction_surrogate(
    body: SurrogateBody, rng: np.random.Generator, size: Optional[int] = None, max_tries: int = 1000
) -> np.ndarray:
    """Uniform draws from the dominating body by rejection from the weighted
    cross-polytope (Rademacher signs times flat-Dirichlet magnitudes)."""
    n = 1 if size is None else int(size)
    d = body.dim
    out = np.empty((n, d))
    filled = 0
    tries = 0
    while filled < n:
        tries += 1
        if tries > max_tries * max(1, n):
            raise InternalError("surrogate rejection sampler exceeded its retry budget")
        need = n - filled
        e = rng.standard_exponential((need, d + 1))
        y = e[:, :d] / e.sum(axis=1, keepdims=True)
        signs = rng.integers(0, 2, size=(need, d)) * 2.0 - 1.0
        u = signs * y * body.weights
        ok = np.all(np.abs(u) <= body.box, axis=1)
        k = int(ok.sum())
        out[filled : filled + k] = u[ok]
        filled += k
    return out[0] if size is None else out


def laplace_c_sens(basis: WaveletBasis, index_set: MultiresIndexSet, rule: str = "composition") -> float:
    """Constant ``c`` for Laplace scales ``c 2^{l/2} / theta``.

    ``composition`` makes the whole transcript epsilon-DP: one data point
    moves ``sum_lk |Delta_lk| 2^{-l/2}`` by at most ``2 sum_l rowsum_l``.
    ``coefficient`` is the per-coefficient bound ``2 max(sup|phi|, sup|psi|)``,
    which only protects each coefficient separately.
    """
    if rule == "coefficient":
        return 2.0 * max(basis.sup_phi, basis.sup_psi)
    if rule != "composition":
        raise ConfigurationError(f"unknown Laplace sensitivity rule {rule!r}")
    total = sum(basis.row_sum(l) for l in index_set.levels)
    if index_set.l0 > 0:
        total += basis.phi_row_sum()
    return 2.0 * total


def laplace_noise(l: int, L: int, theta: float, c_sens: float, rng: np.random.Generator, size=None):
    """Laplace draw(s) with scale ``c_sens 2^{l/2} / theta``."""
    _check_theta(theta)
    if l > L:
        raise ArgumentError("level exceeds L")
    return rng.laplace(0.0, c_sens * 2.0 ** (l / 2.0) / theta, size=size)


def laplace_scales(index_set: MultiresIndexSet, theta: float, c_sens: float) -> np.ndarray:
    return c_sens * 2.0 ** (index_set.level_of_entries() / 2.0) / theta


@dataclass(frozen=True)
class NoiseDraw:
    vector: np.ndarray
    radius: float
    mechanism: str
    theta: float

    def __post_init__(self):
        if self.mechanism not in MECHANISM_TAGS:
            raise ArgumentError(f"unknown mechanism tag {self.mechanism!r}")


class OscNoiseSampler:
    """Repeated oscillation-norm noise draws for one RNG stream.

    ``mode='exact'`` keeps one hit-and-run chain alive across draws;
    ``mode='surrogate'`` samples the dominating body directly.
    """

    def __init__(self, oracle_or_body, theta: float, rng: np.random.Generator, mode: str = "surrogate",
                 mcmc: MCMCSettings = MCMCSettings()):
        _check_theta(theta)
        self.theta = float(theta)
        self.rng = rng
        self.mode = mode
        if mode == "exact":
            if not isinstance(oracle_or_body, NormOracle):
                raise ArgumentError("exact mode needs a NormOracle")
            self._chain = HitAndRun(oracle_or_body, rng, mcmc)
            self.dim = oracle_or_body.dim
        elif mode == "surrogate":
            body = oracle_or_body
            if isinstance(body, NormOracle):
                body = SurrogateBody(body.basis, body.index_set)
            self.body = body
            self.dim = body.dim
        else:
            raise ArgumentError(f"mode must be 'exact' or 'surrogate', got {mode!r}")

    def draw(self) -> NoiseDraw:
        D = float(sample_radius(self.dim, self.theta, self.rng))
        if self.mode == "exact":
            U = self._chain.draw()
            tag = "exact-mcmc"
        else:
            U = sample_direction_surrogate(self.body, self.rng)
            tag = "surrogate"
        return NoiseDraw(D * U, D, tag, self.theta)

    def draws(self, size: int) -> np.ndarray:
        if self.mode == "surrogate":
            D = sample_radius(self.dim, self.theta, self.rng, size=size)
            return D[:, None] * sample_direction_surrogate(self.body, self.rng, size=size)
        return np.array([self.draw().vector for _ in range(size)])


def sample_osc_noise(oracle_or_body, theta: float, rng: np.random.Generator, mode: str = "surrogate",
                     mcmc: MCMCSettings = MCMCSettings()) -> NoiseDraw:
    """A single noise draw (a fresh chain in exact mode)."""
    return OscNoiseSampler(oracle_or_body, theta, rng, mode, mcmc).draw()


def averaged_surrogate_noise(body: SurrogateBody, theta: float, m: int, rng: np.random.Generator,
                             size: int, box_tol: float = 1e-12, chunk: int = 1 << 20) -> np.ndarray:
    """Mean of ``m`` independent surrogate noise vectors, ``size`` times.

    If the box constraint is essentially never active the surrogate draw is
    a vector of independent Laplace(c_l/theta) entries, and the mean of ``m``
    such entries is ``(c_l/(m theta)) (G1 - G2)`` with ``G1, G2 ~ Gamma(m)``;
    that identity is used directly.  Otherwise vectors are drawn and averaged.
    """
    _check_theta(theta)
    d = body.dim
    if body.box_hit_probability() * m <= box_tol:
        scale = body.weights / (m * theta)
        g1 = rng.gamma(m, 1.0, size=(size, d))
        g2 = rng.gamma(m, 1.0, size=(size, d))
        return (g1 - g2) * scale
    out = np.zeros((size, d))
    per = max(1, chunk // max(1, d * m))
    for start in range(0, size, per):
        stop = min(size, start + per)
        k = stop - start
        acc = np.zeros((k, d))
        for _ in range(m):
            D = sample_radius(d, theta, rng, size=k)
            acc += D[:, None] * sample_direction_surrogate(body, rng, size=k)
        out[start:stop] = acc / m
    return out
