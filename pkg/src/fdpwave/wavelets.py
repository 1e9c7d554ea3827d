"""Periodized Haar and Daubechies wavelets on [0, 1].

Shifts are 1-based throughout: ``psi_{l,k}(t) = 2^{l/2} psi_per(2^l t - (k-1))``
for ``k = 1..2^l``, and likewise for the father wavelet at level ``l0``.

Daubechies generators are tabulated on the dyadic grid of spacing ``2^-J``
by the cascade algorithm and evaluated by linear interpolation.  Haar
tables are evaluated with a floor lookup, which is exact.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import kernels
from ._fallback import _lookup
from .errors import ConfigurationError, DomainError, ArgumentError, ResolutionError

FAMILIES = ("haar", "daubechies")
DAUBECHIES_ORDERS = (2, 3, 4)


@functools.lru_cache(maxsize=None)
def daubechies_filter(A: int) -> tuple:
    """Extremal-phase low-pass filter with ``A`` vanishing moments.

    Obtained by spectral factorization of the Daubechies polynomial; the
    roots inside the unit circle are kept.  Normalized so the taps sum to
    sqrt(2).
    """
    if A < 1:
        raise ConfigurationError(f"regularity must be >= 1, got {A}")
    coeffs = [math.comb(A - 1 + k, k) for k in range(A)]
    poly = np.array([1.0])
    for _ in range(A):
        poly = np.convolve(poly, [1.0, 1.0])
    if A > 1:
        for y in np.roots(coeffs[::-1]):
            pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
            z = pair[np.argmin(np.abs(pair))]
            poly = np.convolve(poly, [1.0, -z])
    h = np.real(poly)
    h = h * math.sqrt(2.0) / h.sum()
    if abs(h[0]) < abs(h[-1]):
        h = h[::-1]
    return tuple(float(v) for v in h)


def _cascade(h: np.ndarray, J: int) -> tuple[np.ndarray, np.ndarray]:
    """Father and mother on the grid ``i / 2^J``, ``i = 0..S*2^J``."""
    taps = h.shape[0]
    S = taps - 1
    r2 = math.sqrt(2.0)
    # phi at the integers: eigenvector of the two-scale operator for eigenvalue 1.
    T = np.zeros((S + 1, S + 1))
    for n in range(S + 1):
        for j in range(S + 1):
            k = 2 * n - j
            if 0 <= k < taps:
                T[n, j] = r2 * h[k]
    w, V = np.linalg.eig(T)
    idx = int(np.argmin(np.abs(w - 1.0)))
    phi = np.real(V[:, idx])
    phi = phi / phi.sum()
    prev = phi
    prev_level = phi
    for j in range(1, J + 1):
        size = S * (1 << j) + 1
        cur = np.zeros(size)
        step = 1 << (j - 1)
        for k in range(taps):
            lo = k * step
            hi = min(size, lo + prev.shape[0])
            if lo < hi:
                cur[lo:hi] += r2 * h[k] * prev[: hi - lo]
        prev_level = prev
        prev = cur
    phi_J = prev
    g = np.array([(-1) ** k * h[taps - 1 - k] for k in range(taps)])
    size = S * (1 << J) + 1
    psi_J = np.zeros(size)
    step = 1 << (J - 1)
    for k in range(taps):
        lo = k * step
        hi = min(size, lo + prev_level.shape[0])
        if lo < hi:
            psi_J[lo:hi] += r2 * g[k] * prev_level[: hi - lo]
    return phi_J, psi_J


@functools.lru_cache(maxsize=16)
def _tables(family: str, A: int, J: int) -> tuple[np.ndarray, np.ndarray]:
    res = 1 << J
    if family == "haar":
        phi = np.ones(res + 1)
        phi[-1] = 0.0
        psi = np.ones(res + 1)
        psi[res // 2 :] = -1.0
        psi[-1] = 0.0
    else:
        phi, psi = _cascade(np.array(daubechies_filter(A)), J)
    phi.setflags(write=False)
    psi.setflags(write=False)
    return phi, psi


def _check_unit(t) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError("evaluation points must lie in [0, 1]")
    return arr


@dataclass(frozen=True, eq=False)
class WaveletBasis:
    """A periodized wavelet family with its cascade tables."""

    family: str
    A: int
    l0: int
    J: int
    phi_table: np.ndarray = field(repr=False)
    psi_table: np.ndarray = field(repr=False)
    support_len: int
    sup_phi: float
    sup_psi: float
    boundary: str = "periodized"

    @property
    def res(self) -> int:
        return 1 << self.J

    @property
    def exact(self) -> bool:
        return self.family == "haar"

    @property
    def name(self) -> str:
        return "haar" if self.family == "haar" else f"db{self.A}"

    def describe(self) -> dict:
        return {"family": self.family, "A": self.A, "l0": self.l0, "cascade_depth": self.J}

    # -- evaluation -------------------------------------------------------
    def _eval(self, table, l: int, k: int, t) -> np.ndarray:
        nk = 1 << l
        if not 1 <= k <= nk:
            raise ArgumentError(f"shift k={k} outside 1..{nk} at level {l}")
        arr = _check_unit(t)
        y0 = np.mod(arr * nk - (k - 1), nk)
        out = np.zeros(arr.shape)
        wrap = 0
        while wrap * nk < self.support_len:
            arg = y0 + wrap * nk
            inside = arg < self.support_len
            if inside.any():
                out[inside] += _lookup(table, self.res, arg[inside], self.exact)
            wrap += 1
        return out * 2.0 ** (l / 2.0)

    def eval_psi(self, l: int, k: int, t):
        """``psi_{l,k}(t)``; scalar in, scalar out."""
        if l < 0:
            raise ArgumentError("level must be nonnegative")
        out = self._eval(self.psi_table, l, k, t)
        return float(out) if out.ndim == 0 else out

    def eval_phi(self, r: int, t):
        out = self._eval(self.phi_table, self.l0, r, t)
        return float(out) if out.ndim == 0 else out

    def design(self, l: int, t: np.ndarray, father: bool = False) -> np.ndarray:
        """Dense ``(len(t), 2^l)`` matrix of scaled generator values."""
        table = self.phi_table if father else self.psi_table
        D = kernels.design_level(np.asarray(t, dtype=np.float64), table, self.res,
                                 self.support_len, l, self.exact)
        return D * 2.0 ** (l / 2.0)

    # -- derived constants --------------------------------------------------
    @functools.cached_property
    def _sat_level(self) -> int:
        return max(0, math.ceil(math.log2(self.support_len))) if self.support_len > 1 else 0

    def _cell_design(self, l: int, father: bool = False) -> np.ndarray:
        # Table nodes mapped into the first cell [0, 2^-l); every periodized
        # level-l function is a shift of these values.
        t = np.arange(self.res) / float(self.res) / float(1 << l)
        table = self.phi_table if father else self.psi_table
        return kernels.design_level(t, table, self.res, self.support_len, l, self.exact)

    @functools.lru_cache(maxsize=64)
    def row_sum(self, l: int) -> float:
        """``max_t sum_k |psi_{l,k}(t)| * 2^{-l/2}`` (exact for the interpolant)."""
        ll = min(l, self._sat_level)
        return float(np.abs(self._cell_design(ll)).sum(axis=1).max())

    @functools.lru_cache(maxsize=8)
    def phi_row_sum(self) -> float:
        """Same as ``row_sum`` for the father functions at ``l0``."""
        ll = min(self.l0, self._sat_level)
        return float(np.abs(self._cell_design(ll, father=True)).sum(axis=1).max())

    @functools.lru_cache(maxsize=64)
    def level_osc(self, l: int) -> float:
        """Oscillation ``sup - inf`` of ``psi_{l,k}`` (any k), including ``2^{l/2}``."""
        ll = min(l, self._sat_level)
        nk = 1 << ll
        t = np.arange(self.res * nk) / float(self.res * nk)
        col = kernels.design_level(t, self.psi_table, self.res, self.support_len, ll, self.exact)[:, 0]
        return float(col.max() - col.min()) * 2.0 ** (l / 2.0)

    def overlap(self, l: int) -> int:
        """Number of level-``l`` shifts whose support can contain a given point."""
        return min(self.support_len, 1 << l)


def build_basis(family: str = "haar", A: int = 1, l0: int = 0, cascade_depth: int = 14) -> WaveletBasis:
    """Construct a periodized basis; raises ``ConfigurationError`` on bad input."""
    fam = str(family).lower()
    if fam in ("db", "daub"):
        fam = "daubechies"
    if fam not in FAMILIES:
        raise ConfigurationError(f"unsupported wavelet family {family!r}")
    if fam == "haar" and A != 1:
        raise ConfigurationError("Haar requires A = 1")
    if fam == "daubechies" and A not in DAUBECHIES_ORDERS:
        raise ConfigurationError(f"Daubechies order must be one of {DAUBECHIES_ORDERS}, got {A}")
    if l0 < 0:
        raise ConfigurationError("l0 must be >= 0")
    if cascade_depth < 10:
        raise ConfigurationError("cascade depth J must be >= 10")
    if cascade_depth > 20:
        raise ConfigurationError("cascade depth J above 20 is not supported")
    phi, psi = _tables(fam, A, cascade_depth)
    S = 1 if fam == "haar" else 2 * A - 1
    return WaveletBasis(
        family=fam,
        A=A,
        l0=l0,
        J=cascade_depth,
        phi_table=phi,
        psi_table=psi,
        support_len=S,
        sup_phi=float(np.abs(phi).max()),
        sup_psi=float(np.abs(psi).max()),
    )


@dataclass(frozen=True)
class MultiresIndexSet:
    """``V_L``: detail levels ``l0..L`` plus the approximation block at ``l0``."""

    l0: int
    L: int

    def __post_init__(self):
        if self.l0 < 0 or self.L < self.l0:
            raise ArgumentError(f"need 0 <= l0 <= L, got l0={self.l0}, L={self.L}")

    @property
    def n_approx(self) -> int:
        return 1 << self.l0

    @property
    def s_L(self) -> int:
        return (1 << (self.L + 1)) - (1 << self.l0)

    @property
    def levels(self) -> range:
        return range(self.l0, self.L + 1)

    def offset(self, l: int) -> int:
        return (1 << l) - (1 << self.l0)

    def level_slice(self, l: int) -> slice:
        if not self.l0 <= l <= self.L:
            raise ArgumentError(f"level {l} outside {self.l0}..{self.L}")
        start = self.offset(l)
        return slice(start, start + (1 << l))

    def position(self, l: int, k: int) -> int:
        if not 1 <= k <= (1 << l):
            raise ArgumentError(f"shift {k} outside 1..{1 << l}")
        return self.level_slice(l).start + k - 1

    def level_of_entries(self) -> np.ndarray:
        return np.repeat(np.arange(self.l0, self.L + 1), [1 << l for l in self.levels])

    def enumerate(self) -> Iterator[tuple[str, int, int]]:
        """Fixed order: approximation block, then levels ascending, shifts ascending."""
        for r in range(1, self.n_approx + 1):
            yield ("approx", self.l0, r)
        for l in self.levels:
            for k in range(1, (1 << l) + 1):
                yield ("detail", l, k)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MultiresCoefficients:
    """Coefficient vector over ``V_L`` tied to the basis that defines it."""

    basis: WaveletBasis
    index_set: MultiresIndexSet
    approx: np.ndarray
    detail: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "approx", _frozen(self.approx))
        object.__setattr__(self, "detail", _frozen(self.detail))
        if self.approx.shape != (self.index_set.n_approx,):
            raise ArgumentError("approximation block has the wrong length")
        if self.detail.shape != (self.index_set.s_L,):
            raise ArgumentError(f"detail length {self.detail.shape} != s_L={self.index_set.s_L}")
        if not (np.all(np.isfinite(self.approx)) and np.all(np.isfinite(self.detail))):
            raise ArgumentError("coefficients must be finite")
        if self.basis.l0 != self.index_set.l0:
            raise ArgumentError("basis and index set disagree on l0")

    def level(self, l: int) -> np.ndarray:
        return self.detail[self.index_set.level_slice(l)]

    def value(self, l: int, k: int) -> float:
        return float(self.detail[self.index_set.position(l, k)])

    def replace(self, approx=None, detail=None) -> "MultiresCoefficients":
        return MultiresCoefficients(
            self.basis,
            self.index_set,
            self.approx if approx is None else approx,
            self.detail if detail is None else detail,
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.approx, self.detail])

    def sq_norm(self) -> float:
        return float(self.approx @ self.approx + self.detail @ self.detail)

    def rows(self) -> Iterator[tuple[int, int, float]]:
        """``(level, shift, value)`` rows; approximation rows use level -1."""
        for r, v in enumerate(self.approx, start=1):
            yield (-1, r, float(v))
        for (kind, l, k), v in zip(
            (e for e in self.index_set.enumerate() if e[0] == "detail"), self.detail
        ):
            yield (l, k, float(v))

    def restrict(self, L: int) -> "MultiresCoefficients":
        """Same coefficients on the smaller index set ``V_L`` (``L`` <= current)."""
        iset = MultiresIndexSet(self.index_set.l0, L)
        return MultiresCoefficients(self.basis, iset, self.approx, self.detail[: iset.s_L])

    def extend(self, L: int) -> "MultiresCoefficients":
        """Zero-pad up to level ``L``."""
        iset = MultiresIndexSet(self.index_set.l0, L)
        det = np.zeros(iset.s_L)
        n = min(iset.s_L, self.index_set.s_L)
        det[:n] = self.detail[:n]
        return MultiresCoefficients(self.basis, iset, self.approx, det)


def zero_coefficients(basis: WaveletBasis, index_set: MultiresIndexSet) -> MultiresCoefficients:
    return MultiresCoefficients(basis, index_set, np.zeros(index_set.n_approx), np.zeros(index_set.s_L))


def _weighted_coefficients(basis, index_set, x, w) -> MultiresCoefficients:
    S, res, ex = basis.support_len, basis.res, basis.exact
    approx = kernels.scatter_level(x, w, basis.phi_table, res, S, index_set.l0, ex)
    approx *= 2.0 ** (index_set.l0 / 2.0)
    parts = []
    for l in index_set.levels:
        v = kernels.scatter_level(x, w, basis.psi_table, res, S, l, ex)
        parts.append(v * 2.0 ** (l / 2.0))
    return MultiresCoefficients(basis, index_set, approx, np.concatenate(parts))


def empirical_coefficients(basis: WaveletBasis, data, index_set: MultiresIndexSet) -> MultiresCoefficients:
    """Sample averages of every basis function over ``data``."""
    x = np.asarray(data, dtype=np.float64).ravel()
    if x.size == 0:
        raise ArgumentError("data must be nonempty")
    _check_unit(x)
    w = np.full(x.shape[0], 1.0 / x.shape[0])
    return _weighted_coefficients(basis, index_set, x, w)


def midpoints(M: int) -> np.ndarray:
    return (np.arange(M) + 0.5) / M


def exact_coefficients(
    basis: WaveletBasis,
    density: Callable[[np.ndarray], np.ndarray],
    index_set: MultiresIndexSet,
    quadrature_points: int | None = None,
) -> MultiresCoefficients:
    """Composite midpoint quadrature of ``<f, psi_lk>``.

    Defaults to ``max(2^{L+4}, 2^{J+2})`` points, so that the nodes fall on
    the cascade grid at every level.
    """
    Q = quadrature_points or max(1 << (index_set.L + 4), basis.res << 2)
    if Q < (1 << (index_set.L + 2)):
        raise ResolutionError(f"need at least 2^(L+2)={1 << (index_set.L + 2)} quadrature points")
    t = midpoints(Q)
    fv = np.asarray(density(t), dtype=np.float64)
    if np.any(fv < 0):
        raise ArgumentError("density must be nonnegative on the quadrature grid")
    return _weighted_coefficients(basis, index_set, t, fv / Q)


def reconstruct_grid_at(coeffs: MultiresCoefficients, t: np.ndarray) -> np.ndarray:
    basis, iset = coeffs.basis, coeffs.index_set
    S, res, ex = basis.support_len, basis.res, basis.exact
    t = np.asarray(t, dtype=np.float64)
    out = kernels.gather_level(t, basis.phi_table, res, S, iset.l0, ex, coeffs.approx)
    out *= 2.0 ** (iset.l0 / 2.0)
    for l in iset.levels:
        c = coeffs.level(l)
        if np.any(c):
            out += kernels.gather_level(t, basis.psi_table, res, S, l, ex, c) * 2.0 ** (l / 2.0)
    return out


def reconstruct_point(coeffs: MultiresCoefficients, t) -> float:
    arr = _check_unit(t)
    out = reconstruct_grid_at(coeffs, np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out


def reconstruct_grid(coeffs: MultiresCoefficients, M: int) -> np.ndarray:
    """Values at the midpoints of ``M`` equal cells."""
    if M < 2:
        raise ArgumentError("grid size must be >= 2")
    return reconstruct_grid_at(coeffs, midpoints(M))
