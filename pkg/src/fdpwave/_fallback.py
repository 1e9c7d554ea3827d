"""Pure numpy implementations of the hot kernels.

These mirror ``fdpwave._kernels`` one for one and are used whenever the
compiled extension is unavailable (or ``FDPWAVE_PURE_PYTHON=1``).
"""
from __future__ import annotations

import numpy as np

# Simplex status codes, shared with the compiled backend.
OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITERATION_LIMIT = 3
NUMERICAL = 4


def _lookup(table: np.ndarray, res: int, arg: np.ndarray, exact: bool) -> np.ndarray:
    pos = arg * res
    if exact:
        idx = np.floor(pos).astype(np.int64)
        np.clip(idx, 0, table.shape[0] - 1, out=idx)
        return table[idx]
    i0 = np.floor(pos).astype(np.int64)
    np.clip(i0, 0, table.shape[0] - 2, out=i0)
    frac = pos - i0
    return table[i0] * (1.0 - frac) + table[i0 + 1] * frac


def _shift_terms(x, level, S):
    z = x * float(1 << level)
    fl = np.floor(z)
    frac = z - fl
    fl = fl.astype(np.int64)
    nk = 1 << level
    for s in range(S):
        yield s, np.mod(fl - s, nk), frac + s


def scatter_level(x, w, table, res, S, level, exact):
    """Weighted sum over points of the unscaled generator at ``level``.

    Returns a vector of length ``2**level`` whose entry ``k`` is
    ``sum_i w_i g(2^l x_i - k mod 2^l)`` for the periodized generator ``g``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    out = np.zeros(1 << level)
    for _, kk, arg in _shift_terms(x, level, S):
        vals = w * _lookup(table, res, arg, exact)
        out += np.bincount(kk, weights=vals, minlength=out.shape[0])
    return out


def gather_level(x, table, res, S, level, exact, coef):
    """Evaluate ``sum_k coef[k] g(2^l x - k mod 2^l)`` at each point."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    out = np.zeros(x.shape[0])
    for _, kk, arg in _shift_terms(x, level, S):
        out += coef[kk] * _lookup(table, res, arg, exact)
    return out


def design_level(x, table, res, S, level, exact):
    """Dense matrix ``D[i, k] = g(2^l x_i - k mod 2^l)`` (unscaled)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.zeros((x.shape[0], 1 << level))
    rows = np.arange(x.shape[0])
    for _, kk, arg in _shift_terms(x, level, S):
        np.add.at(out, (rows, kk), _lookup(table, res, arg, exact))
    return out


# Perturbation sizes tried in turn (the last one is plain pivoting), and the
# tolerances that go with them
# (all relative to max |b|).
PERTURB_LADDER = (1e-9, 1e-11, 0.0)
INFEASIBLE_TOL = 1e-7
PIVOT_TOL = 1e-7
UNPERTURB_TOL = 1e-7


def perturbation(m: int, scale: float, size: float) -> np.ndarray:
    """Fixed positive right-hand-side perturbation in ``[1, 2) * size * scale``."""
    return size * scale * (1.0 + np.modf(np.arange(1, m + 1) * 0.6180339887498949)[0])


def simplex_solve(A, b, c, tol=1e-9, max_iter=50000, refactor=50):
    """Two-phase revised simplex for ``min c.x  s.t.  A x = b, x >= 0``.

    Dense, with an explicit basis inverse.  Dantzig pricing, switching to
    Bland's rule for the rest of a phase after a run of degenerate pivots.  The right-hand side is
    perturbed by a tiny fixed positive vector while pivoting (degenerate
    vertices otherwise stall), and the final basis is evaluated at the true
    right-hand side.  A smaller perturbation is tried if that basis is
    infeasible beyond rounding.

    Returns ``(status, x, objective, duals, iterations)``; duals ``y`` solve
    ``max b.y  s.t.  A^T y <= c`` at optimality.
    """
    total = 0
    for size in PERTURB_LADDER:
        try:
            status, x, obj, y, iters = _attempt(A, b, c, tol, max_iter, refactor, size)
        except np.linalg.LinAlgError:
            status, x, obj, y, iters = NUMERICAL, np.zeros(A.shape[1]), np.nan, np.zeros(A.shape[0]), 0
        total += iters
        if status != NUMERICAL:
            break
    return status, x, obj, y, total


def _attempt(A, b, c, tol, max_iter, refactor, size):
    A = np.array(A, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    scale_b = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    b_true = b
    b = b_true + perturbation(m, scale_b, size)

    basis = np.arange(n, n + m)
    binv = np.eye(m)
    xb = b.copy()
    is_basic = np.zeros(n + m, dtype=bool)
    is_basic[n:] = True
    iters = 0
    feas_tol = 1e-3 * size * scale_b

    def column(j):
        if j < n:
            return A[:, j]
        e = np.zeros(m)
        e[j - n] = 1.0
        return e

    def refactorize():
        B = np.empty((m, m))
        for i in range(m):
            B[:, i] = column(basis[i])
        inv = np.linalg.inv(B)
        xnew = inv @ b
        xnew[np.abs(xnew) < 1e-13 * scale_b] = 0.0
        return inv, xnew

    def run(cost, phase):
        nonlocal binv, xb, iters
        degenerate = 0
        since = 0
        best, stalled = np.inf, 0
        cost_tol = tol * max(1.0, float(np.max(np.abs(cost[:n]))) if n else 1.0)
        while True:
            if iters >= max_iter:
                return ITERATION_LIMIT
            if stalled > 5 * m + 500:
                return NUMERICAL  # rounding has the pivots going in circles
            if since >= refactor:
                binv, xb = refactorize()
                since = 0
            y = cost[basis] @ binv
            d = cost[:n] - y @ A
            d[is_basic[:n]] = 0.0
            if degenerate > 50:
                cand = np.nonzero(d < -cost_tol)[0]
                if cand.size == 0:
                    return OPTIMAL
                q = int(cand[0])
            else:
                q = int(np.argmin(d))
                if d[q] >= -cost_tol:
                    return OPTIMAL
            u = binv @ A[:, q]
            mask = u > PIVOT_TOL * max(1.0, float(np.max(np.abs(u))))
            if not mask.any():
                return UNBOUNDED
            xpos = np.maximum(xb, 0.0)
            # Harris two-pass test: allow a small primal slack, then take the
            # largest pivot among the rows that stay within it.
            # Under Bland's rule only exact minimum-ratio ties qualify.
            slack = 0.0 if degenerate > 50 else feas_tol
            relaxed = np.full(m, np.inf)
            relaxed[mask] = (xpos[mask] + slack) / u[mask]
            bound = relaxed.min()
            bound += 1e-12 * max(1.0, bound) if slack == 0.0 else 0.0
            ratios = np.full(m, np.inf)
            ratios[mask] = xpos[mask] / u[mask]
            ties = np.nonzero(ratios <= bound)[0]
            if degenerate > 50:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(u[ties])])
            theta = max(xb[r], 0.0) / u[r]
            if degenerate <= 50:  # once Bland's rule is on it stays on for the phase
                degenerate = degenerate + 1 if theta <= 1e-12 * scale_b else 0
            xb -= theta * u
            xb[r] = theta
            piv = binv[r] / u[r]
            binv -= np.outer(u, piv)
            binv[r] = piv
            is_basic[basis[r]] = False
            basis[r] = q
            is_basic[q] = True
            iters += 1
            since += 1
            obj = float(cost[basis] @ xb)
            if obj < best - 1e-12 * (1.0 + abs(best)):
                best, stalled = obj, 0
            else:
                stalled += 1

    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    status = run(cost1, 1)
    if status != OPTIMAL:
        return status, np.zeros(n), np.nan, np.zeros(m), iters
    binv, xb = refactorize()
    infeas = float(np.sum(xb[basis >= n]))
    if infeas > INFEASIBLE_TOL * scale_b:
        return INFEASIBLE, np.zeros(n), np.nan, np.zeros(m), iters
    # Drive zero-valued artificials out of the basis where possible.
    for r in range(m):
        if basis[r] < n:
            continue
        row = binv[r] @ A
        row[is_basic[:n]] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > 1e-7:
            u = binv @ A[:, j]
            piv = binv[r] / u[r]
            binv -= np.outer(u, piv)
            binv[r] = piv
            is_basic[basis[r]] = False
            basis[r] = j
            is_basic[j] = True
    binv, xb = refactorize()

    cost2 = np.concatenate([c, np.zeros(m)])
    status = run(cost2, 2)
    b = b_true
    binv, xb = refactorize()
    if status == OPTIMAL and float(xb.min(initial=0.0)) < -UNPERTURB_TOL * scale_b:
        status = NUMERICAL
    x = np.zeros(n)
    sel = basis < n
    x[basis[sel]] = np.maximum(xb[sel], 0.0)
    y = (cost2[basis] @ binv) * sign
    return status, x, float(c @ x), y, iters
