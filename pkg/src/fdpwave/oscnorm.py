"""The multiscale-oscillation norm on ``V_L`` and uniform sampling of its ball.

For a detail vector ``u`` the norm is ``sup { <u, g> : osc(sum_lk g_lk psi_lk) <= 1 }``
with the oscillation taken over a grid of points.  Writing ``Psi`` for the
grid design matrix, LP duality gives the equivalent problem

    min 1/2 ||w||_1   subject to   Psi^T w = u,  1^T w = 0,

which has ``s_L + 1`` equality rows.  The optimal duals recover the
maximizing ``g`` (and an offset), so every solve also produces a
certificate.  Identical grid rows are merged before solving.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .errors import ArgumentError, ConfigurationError, InternalError, SolverError
from .wavelets import (
    MultiresCoefficients,
    MultiresIndexSet,
    WaveletBasis,
    empirical_coefficients,
    midpoints,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID = 4096


def design_matrix(basis: WaveletBasis, index_set: MultiresIndexSet, t: np.ndarray) -> np.ndarray:
    """Rows are points, columns follow the detail enumeration of ``V_L``."""
    return np.hstack([basis.design(l, t) for l in index_set.levels])


def _solve_lp(A: np.ndarray, b: np.ndarray, c: np.ndarray, what: str) -> tuple[np.ndarray, float, np.ndarray]:
    """``min c.x, A x = b, x >= 0`` with the built-in simplex.

    Badly conditioned instances on which the simplex gives up are handed to
    HiGHS; infeasible or unbounded programs are errors either way.
    """
    status, x, obj, y, _ = kernels.simplex_solve(A, b, c)
    if status == kernels.OPTIMAL:
        return x, obj, y
    if status in (kernels.INFEASIBLE, kernels.UNBOUNDED):
        raise SolverError(f"{what} LP ended with status {status}")
    logger.debug("%s LP: simplex status %d, retrying with HiGHS", what, status)
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"{what} LP failed: {res.message}")
    return res.x, float(res.fun), np.asarray(res.eqlin.marginals)


@dataclass(frozen=True, eq=False)
class NormOracle:
    basis: WaveletBasis
    index_set: MultiresIndexSet
    grid_size: int = DEFAULT_GRID
    points: np.ndarray = field(default=None, repr=False)
    Psi: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.grid_size < 2:
            raise ConfigurationError("grid size must be >= 2")
        if self.basis.l0 != self.index_set.l0:
            raise ConfigurationError("basis and index set disagree on l0")
        pts = midpoints(self.grid_size) if self.points is None else np.asarray(self.points, float)
        rows = design_matrix(self.basis, self.index_set, pts)
        rows = np.unique(rows, axis=0)
        aug = np.hstack([rows, np.ones((rows.shape[0], 1))])
        if np.linalg.matrix_rank(aug) < aug.shape[1]:
            raise ConfigurationError(
                f"grid of {pts.shape[0]} points cannot resolve V_L with s_L={self.index_set.s_L}; "
                "increase grid_size"
            )
        rows.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "Psi", rows)
        H = np.vstack([rows.T, np.ones((1, rows.shape[0]))])
        object.__setattr__(self, "_H", H)

    @property
    def dim(self) -> int:
        return self.index_set.s_L

    @property
    def n_rows(self) -> int:
        return self.Psi.shape[0]

    def with_points(self, extra) -> "NormOracle":
        """Oracle whose constraint set also contains ``extra`` points.

        Grid points closer than a thousandth of the spacing to an extra
        point are dropped; near-duplicate constraints make the LP bases
        ill-conditioned and change the value only negligibly.
        """
        extra = np.asarray(extra, dtype=np.float64).ravel()
        near = np.sort(extra)
        grid = self.points
        pos = np.clip(np.searchsorted(near, grid), 1, max(1, near.size - 1))
        gap = np.minimum(np.abs(grid - near[pos - 1]), np.abs(grid - near[np.minimum(pos, near.size - 1)]))
        keep = gap > 1e-3 / self.grid_size
        pts = np.concatenate([grid[keep], extra])
        return NormOracle(self.basis, self.index_set, self.grid_size, pts)

    def _vector(self, u) -> np.ndarray:
        if isinstance(u, MultiresCoefficients):
            u = u.detail
        v = np.asarray(u, dtype=np.float64).ravel()
        if v.shape != (self.dim,):
            raise ArgumentError(f"expected a vector of length {self.dim}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ArgumentError("vector must be finite")
        return v

    def solve(self, u) -> tuple[float, np.ndarray, np.ndarray]:
        """Return ``(norm, g, w)``: the value, a maximizing ``g`` and the dual weights."""
        v = self._vector(u)
        if not np.any(v):
            return 0.0, np.zeros(self.dim), np.zeros(self.n_rows)
        H = self._H
        M = H.shape[1]
        A = np.hstack([H, -H])
        b = np.concatenate([v, [0.0]])
        c = np.full(2 * M, 0.5)
        x, obj, y = _solve_lp(A, b, c, "norm")
        w = x[:M] - x[M:]
        return max(obj, 0.0), y[:-1], w

    def norm(self, u) -> float:
        return self.solve(u)[0]

    def ray(self, u: np.ndarray, d: np.ndarray) -> float:
        """Largest ``t`` with ``||u + t d|| <= 1`` (``u`` inside the ball)."""
        H = self._H
        M = H.shape[1]
        s = self.dim
        dcol = np.concatenate([d, [0.0]])
        top = np.hstack([H, -H, -dcol[:, None], dcol[:, None], np.zeros((s + 1, 1))])
        bottom = np.concatenate([np.ones(2 * M), [0.0, 0.0, 1.0]])[None, :]
        A = np.vstack([top, bottom])
        b = np.concatenate([u, [0.0], [2.0]])
        c = np.zeros(2 * M + 3)
        c[2 * M] = -1.0
        c[2 * M + 1] = 1.0
        x, obj, _ = _solve_lp(A, b, c, "chord")
        return x[2 * M] - x[2 * M + 1]

    def chord(self, u: np.ndarray, d: np.ndarray, method: str = "lp", tol: float = 1e-10) -> tuple[float, float]:
        """Endpoints ``(lo, hi)`` of ``{t : ||u + t d|| <= 1}``."""
        if method == "lp":
            return -self.ray(u, -d), self.ray(u, d)
        if method == "bisection":
            return -self._bisect(u, -d, tol), self._bisect(u, d, tol)
        raise ArgumentError(f"unknown chord method {method!r}")

    def _bisect(self, u, d, tol) -> float:
        lo, hi = 0.0, 1.0
        for _ in range(200):
            if self.norm(u + hi * d) > 1.0:
                break
            lo, hi = hi, 2.0 * hi
        else:  # pragma: no cover - a norm ball is bounded
            raise InternalError("bisection failed to bracket the chord end")
        if self.norm(u + lo * d) > 1.0 + 1e-9:
            raise InternalError("chord start lies outside the ball")
        while hi - lo > tol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if self.norm(u + mid * d) <= 1.0:
                lo = mid
            else:
                hi = mid
        return lo


def osc_norm(oracle: NormOracle, u) -> float:
    return oracle.norm(u)


def oscillation(oracle: NormOracle, g: np.ndarray) -> float:
    """``max - min`` of ``sum g_lk psi_lk`` over the oracle's points."""
    vals = oracle.Psi @ np.asarray(g, dtype=np.float64)
    return float(vals.max() - vals.min())


def _differing(x, xp) -> int:
    x = np.asarray(x, dtype=np.float64).ravel()
    xp = np.asarray(xp, dtype=np.float64).ravel()
    if x.shape != xp.shape:
        raise ArgumentError("neighboring datasets must have the same size")
    diff = np.nonzero(x != xp)[0]
    if diff.size > 1:
        raise ArgumentError(f"datasets differ in {diff.size} entries, expected at most one")
    return int(diff[0]) if diff.size else -1


def sensitivity_delta(basis: WaveletBasis, index_set: MultiresIndexSet, x, xp) -> MultiresCoefficients:
    """Difference of empirical coefficients for datasets differing in one entry.

    Identical datasets are accepted and give the zero vector.
    """
    _differing(x, xp)
    a = empirical_coefficients(basis, x, index_set)
    b = empirical_coefficients(basis, xp, index_set)
    return a.replace(approx=a.approx - b.approx, detail=a.detail - b.detail)


def sensitivity_norm(oracle: NormOracle, x, xp) -> float:
    """Norm of the sensitivity vector, with the two changed points added to
    the constraint grid so the discretized value respects the exact bound."""
    i = _differing(x, xp)
    delta = sensitivity_delta(oracle.basis, oracle.index_set, x, xp)
    if i < 0:
        return 0.0
    extra = [np.ravel(x)[i], np.ravel(xp)[i]]
    return oracle.with_points(extra).norm(delta)


@dataclass(frozen=True)
class MCMCSettings:
    burn_in: int = 5000
    thinning: int = 20
    chord_method: str = "lp"

    def __post_init__(self):
        if self.burn_in < 1000:
            raise ConfigurationError("burn_in must be >= 1000")
        if self.thinning < 10:
            raise ConfigurationError("thinning must be >= 10")
        if self.chord_method not in ("lp", "bisection"):
            raise ConfigurationError("chord_method must be 'lp' or 'bisection'")


class HitAndRun:
    """Hit-and-run chain over the unit ball of the oscillation norm.

    The chain starts at the origin, is burned in once, and then emits one
    state every ``thinning`` steps.
    """

    _shrink = 1.0 - 1e-10

    def __init__(self, oracle: NormOracle, rng: np.random.Generator, mcmc: MCMCSettings = MCMCSettings()):
        self.oracle = oracle
        self.rng = rng
        self.mcmc = mcmc
        self.state = np.zeros(oracle.dim)
        self.steps = 0
        self._burned = False

    def step(self) -> None:
        d = self.rng.standard_normal(self.oracle.dim)
        d /= np.linalg.norm(d)
        lo, hi = self.oracle.chord(self.state, d, self.mcmc.chord_method)
        if not lo <= 0.0 <= hi:
            raise InternalError(f"chord [{lo}, {hi}] does not contain the current state")
        t = self.rng.uniform(lo * self._shrink, hi * self._shrink)
        self.state = self.state + t * d
        self.steps += 1

    def draw(self) -> np.ndarray:
        if not self._burned:
            for _ in range(self.mcmc.burn_in):
                self.step()
            self._burned = True
        for _ in range(self.mcmc.thinning):
            self.step()
        return self.state.copy()

    def draws(self, size: int) -> np.ndarray:
        out = np.empty((size, self.oracle.dim))
        for i in range(size):
            out[i] = self.draw()
        return out


def sample_direction_exact(
    oracle: NormOracle, rng: np.random.Generator, mcmc: MCMCSettings = MCMCSettings()
) -> np.ndarray:
    """One approximately uniform draw from the unit ball (fresh chain)."""
    return HitAndRun(oracle, rng, mcmc).draw()
