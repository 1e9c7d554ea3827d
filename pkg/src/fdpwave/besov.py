"""Besov-ball bookkeeping and random truth densities in the wavelet span."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import ArgumentError, ConfigurationError, GenerationError
from .wavelets import (
    MultiresCoefficients,
    MultiresIndexSet,
    WaveletBasis,
    midpoints,
    reconstruct_grid_at,
)

DENSITY_FLOOR = 0.1
SAMPLING_GRID = 1 << 14
PROFILES = ("uniform", "envelope")


@dataclass(frozen=True)
class BesovClass:
    alpha: float
    p: float = 2.0
    q: float = 2.0
    R: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        if not 2.0 <= self.p <= math.inf:
            raise ConfigurationError("p must lie in [2, inf]")
        if not 1.0 <= self.q <= math.inf:
            raise ConfigurationError("q must lie in [1, inf]")
        if not self.R > 0:
            raise ConfigurationError("radius must be positive")

    @property
    def nu(self) -> float:
        return self.alpha - (0.0 if math.isinf(self.p) else 1.0 / self.p)

    def check_basis(self, basis: WaveletBasis) -> None:
        if basis.family != "haar" and not self.alpha < basis.A:
            raise ConfigurationError(f"alpha={self.alpha} needs a basis of regularity A > alpha")
        if basis.family == "haar" and not self.alpha < 1.0:
            raise ConfigurationError("Haar only represents alpha < 1")


def _lp(v: np.ndarray, p: float) -> float:
    if v.size == 0:
        return 0.0
    a = np.abs(v)
    top = float(a.max())
    if math.isinf(p) or top == 0.0:
        return top
    # Scale first so tiny or huge entries do not under/overflow.
    return top * float(np.sum((a / top) ** p) ** (1.0 / p))


def besov_seq_norm(coeffs: MultiresCoefficients, cls: BesovClass) -> float:
    """Sequence-space Besov norm of the detail coefficients."""
    s = cls.alpha + 0.5 - (0.0 if math.isinf(cls.p) else 1.0 / cls.p)
    terms = np.array([2.0 ** (l * s) * _lp(coeffs.level(l), cls.p) for l in coeffs.index_set.levels])
    return _lp(terms, cls.q)


def envelope(cls: BesovClass, C_R: float, l: int) -> float:
    return C_R * 2.0 ** (-l * (cls.alpha + 0.5))


def default_C_R(cls: BesovClass, basis: WaveletBasis, L_gen: int, single_level: Optional[int] = None) -> float:
    """Half the largest envelope constant that keeps both guarantees.

    The Besov norm stays below ``R`` and ``|f - 1| <= 0.9`` holds
    deterministically, so the density never drops below 0.1.
    """
    levels = [single_level] if single_level is not None else list(range(basis.l0, L_gen + 1))
    nlev = len(levels)
    norm_cap = cls.R / (1.0 if math.isinf(cls.q) else nlev ** (1.0 / cls.q))
    sup_sum = sum(2.0 ** (-l * cls.alpha) * basis.row_sum(l) for l in levels)
    floor_cap = (1.0 - DENSITY_FLOOR) / sup_sum
    return 0.5 * min(norm_cap, floor_cap)


def floor_C_R(cls: BesovClass, basis: WaveletBasis, L_gen: int) -> float:
    """Largest envelope constant for which every coefficient draw keeps the
    density above the floor."""
    sup_sum = sum(2.0 ** (-l * cls.alpha) * basis.row_sum(l) for l in range(basis.l0, L_gen + 1))
    return (1.0 - DENSITY_FLOOR) / sup_sum


def uniform_approx(basis: WaveletBasis, l0: int) -> np.ndarray:
    # The constant 1 in the father basis at level l0.
    return np.full(1 << l0, 2.0 ** (-l0 / 2.0))


@dataclass(frozen=True, eq=False)
class DensityModel:
    """A truth density: ``coeffs`` plus an optional out-of-span term."""

    coeffs: MultiresCoefficients
    cls: Optional[BesovClass] = None
    seed: Optional[int] = None
    C_R: float = 0.0
    extra: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def basis(self) -> WaveletBasis:
        return self.coeffs.basis

    @property
    def L_gen(self) -> int:
        return self.coeffs.index_set.L

    @property
    def exact(self) -> bool:
        """True when ``coeffs`` is the exact expansion of the density."""
        return self.extra is None

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        out = reconstruct_grid_at(self.coeffs, np.atleast_1d(t))
        if self.extra is not None:
            out = out + self.extra(np.atleast_1d(t))
        return out.reshape(t.shape) if t.ndim else out[0]

    @functools.cached_property
    def _grid(self) -> tuple[np.ndarray, np.ndarray]:
        vals = np.asarray(self(midpoints(SAMPLING_GRID)))
        if np.any(vals < 0):
            raise GenerationError("density is negative on the sampling grid")
        cdf = np.concatenate([[0.0], np.cumsum(vals)])
        total = cdf[-1] / SAMPLING_GRID
        if abs(total - 1.0) > 1e-6:
            raise GenerationError(f"density integrates to {total:.8f}, not 1")
        cdf /= cdf[-1]
        edges = np.linspace(0.0, 1.0, SAMPLING_GRID + 1)
        return cdf, edges

    def grid_values(self) -> np.ndarray:
        return np.asarray(self(midpoints(SAMPLING_GRID)))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws on the fixed sampling grid."""
        cdf, edges = self._grid
        u = rng.random(size)
        x = np.interp(u, cdf, edges)
        return np.clip(x, 0.0, 1.0)

    def cell_probabilities(self) -> np.ndarray:
        cdf, _ = self._grid
        return np.diff(cdf)

    def truth(self, L: int) -> MultiresCoefficients:
        """Exact coefficients on ``V_L`` (zero beyond ``L_gen``)."""
        if L <= self.L_gen:
            return self.coeffs.restrict(L)
        return self.coeffs.extend(L)

    def tail_energy(self, L: int) -> float:
        """``sum_{l > L} f_{lk}^2`` over the generated levels."""
        if L >= self.L_gen:
            return 0.0
        start = self.coeffs.index_set.offset(L + 1)
        tail = self.coeffs.detail[start:]
        return float(tail @ tail)


def uniform_density(basis: WaveletBasis, L_gen: Optional[int] = None) -> DensityModel:
    iset = MultiresIndexSet(basis.l0, basis.l0 if L_gen is None else L_gen)
    c = MultiresCoefficients(basis, iset, uniform_approx(basis, basis.l0), np.zeros(iset.s_L))
    return DensityModel(c)


def sample_besov_density(
    cls: BesovClass,
    basis: WaveletBasis,
    L_gen: int,
    rng: np.random.Generator,
    C_R: Optional[float] = None,
    single_level: Optional[int] = None,
    seed: Optional[int] = None,
    max_tries: int = 100,
    profile: str = "uniform",
) -> DensityModel:
    """Random density ``1 + sum u_lk psi_lk`` with ``|u_lk| <= C_R 2^{-l(alpha+1/2)}``.

    ``profile='uniform'`` draws each ``u_lk`` uniformly inside its envelope;
    ``profile='envelope'`` puts it on the envelope with a random sign.
    ``single_level`` populates only that level (a lower-bound style truth).
    """
    if profile not in PROFILES:
        raise ArgumentError(f"profile must be one of {PROFILES}")
    cls.check_basis(basis)
    if L_gen < basis.l0:
        raise ArgumentError("L_gen must be >= l0")
    if L_gen > basis.J - 2:
        raise ArgumentError("L_gen too fine for the cascade depth")
    if single_level is not None and not basis.l0 <= single_level <= L_gen:
        raise ArgumentError("single_level must lie in l0..L_gen")
    if C_R is None:
        C_R = default_C_R(cls, basis, L_gen, single_level)
    if C_R < 0:
        raise ArgumentError("C_R must be nonnegative")
    iset = MultiresIndexSet(basis.l0, L_gen)
    approx = uniform_approx(basis, basis.l0)
    for _ in range(max_tries):
        det = np.zeros(iset.s_L)
        for l in iset.levels:
            if single_level is not None and l != single_level:
                continue
            c_l = envelope(cls, C_R, l)
            if profile == "uniform":
                det[iset.level_slice(l)] = rng.uniform(-c_l, c_l, 1 << l)
            else:
                det[iset.level_slice(l)] = c_l * (2.0 * rng.integers(0, 2, 1 << l) - 1.0)
        model = DensityModel(
            MultiresCoefficients(basis, iset, approx, det),
            cls=cls,
            seed=seed,
            C_R=C_R,
            meta={"single_level": single_level, "profile": profile},
        )
        if C_R == 0.0 or model.grid_values().min() >= DENSITY_FLOOR - 1e-9:
            return model
    raise GenerationError(f"no draw met the density floor in {max_tries} tries; C_R={C_R} too large")


@dataclass(frozen=True)
class DecayReport:
    violations: list  # (l, k, value, bound)
    level_violations: list  # (l, energy, bound)

    @property
    def count(self) -> int:
        return len(self.violations) + len(self.level_violations)


def decay_bound(cls: BesovClass, l: int, C: float = 1.0) -> float:
    return C * cls.R * 2.0 ** (-l * (cls.alpha + 0.5 - (0.0 if math.isinf(cls.p) else 1.0 / cls.p)))


def decay_check(coeffs: MultiresCoefficients, cls: BesovClass, C: float = 1.0) -> DecayReport:
    """Flag coefficients above ``C R 2^{-l(alpha+1/2-1/p)}`` and levels whose
    energy exceeds ``C R^2 2^{-2 l alpha}``."""
    viol, lviol = [], []
    for l in coeffs.index_set.levels:
        v = coeffs.level(l)
        bound = decay_bound(cls, l, C)
        for k in np.nonzero(np.abs(v) > bound * (1 + 1e-12))[0]:
            viol.append((l, int(k) + 1, float(v[k]), bound))
        energy = float(v @ v)
        ebound = C * cls.R ** 2 * 2.0 ** (-2 * l * cls.alpha)
        if energy > ebound * (1 + 1e-12):
            lviol.append((l, energy, ebound))
    return DecayReport(viol, lviol)


# --- bump perturbation ------------------------------------------------------

def _raw_bump(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 0.5
    xi = x[inside]
    out[inside] = (1 - 8 * xi**2) * np.exp(-1.0 / (1 - 4 * xi**2))
    return out


def _mollifier(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 0.5
    out[inside] = np.exp(-1.0 / (1 - 4 * x[inside] ** 2))
    return out


@functools.lru_cache(maxsize=1)
def _bump_constants() -> tuple[float, float]:
    def f(fun):
        return integrate.quad(lambda v: float(fun(np.array(v))), -0.5, 0.5, limit=200, epsabs=1e-14)[0]
    return f(_raw_bump), f(_mollifier)


def bump(x) -> np.ndarray:
    """Smooth bump on (-1/2, 1/2) with zero integral and ``bump(0) > 0``.

    The raw profile ``(1 - 8x^2) exp(-1/(1-4x^2))`` does not integrate to 0,
    so a multiple of the mollifier ``exp(-1/(1-4x^2))`` is subtracted.
    """
    ih, im = _bump_constants()
    return _raw_bump(x) - (ih / im) * _mollifier(x)


def bump_l1() -> float:
    return integrate.quad(lambda v: abs(float(bump(np.array(v)))), -0.5, 0.5, limit=400, epsabs=1e-13)[0]


def bump_perturb(f0: DensityModel, a: float, b: float, t0: float) -> DensityModel:
    """``g(x) = f0(x) + a h(b (t0 - x))``; the bump must fit inside [0, 1]."""
    if b <= 0:
        raise ArgumentError("b must be positive")
    if not 0.0 < t0 < 1.0:
        raise ArgumentError("t0 must lie in (0, 1)")
    half = 0.5 / b
    if t0 - half < 0.0 or t0 + half > 1.0:
        raise ArgumentError("bump support leaves [0, 1]")
    if a == 0.0:
        return f0
    prev = f0.extra

    def extra(t, _prev=prev):
        out = a * bump(b * (t0 - np.asarray(t)))
        return out if _prev is None else out + _prev(t)

    g = DensityModel(f0.coeffs, f0.cls, f0.seed, f0.C_R, extra, dict(f0.meta, bump=(a, b, t0)))
    if g.grid_values().min() < 0:
        raise ArgumentError("perturbed density is negative")
    return g
