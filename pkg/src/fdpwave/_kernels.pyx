# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: periodized wavelet scatter/gather and a dense
revised simplex.  Semantics match ``fdpwave._fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, INFINITY

cnp.import_array()

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITERATION_LIMIT = 3
NUMERICAL = 4

PERTURB_LADDER = (1e-9, 1e-11, 0.0)
INFEASIBLE_TOL = 1e-7
PIVOT_TOL = 1e-7
cdef double _PIVOT_TOL = PIVOT_TOL
UNPERTURB_TOL = 1e-7


cdef inline double _lookup(const double[::1] table, double res, double arg, bint exact) noexcept nogil:
    cdef double pos = arg * res
    cdef Py_ssize_t nt = table.shape[0]
    cdef Py_ssize_t i0 = <Py_ssize_t>floor(pos)
    cdef double frac
    if exact:
        if i0 < 0:
            i0 = 0
        elif i0 > nt - 1:
            i0 = nt - 1
        return table[i0]
    if i0 < 0:
        i0 = 0
    elif i0 > nt - 2:
        i0 = nt - 2
    frac = pos - i0
    return table[i0] * (1.0 - frac) + table[i0 + 1] * frac


def scatter_level(x, w, table, long res, long S, long level, bint exact):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(table, dtype=np.float64)
    cdef long nk = 1 << level
    out = np.zeros(nk)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, s
    cdef double z, fl, frac
    cdef long kk, ifl
    cdef double scale = <double>nk
    cdef double dres = <double>res
    with nogil:
        for i in range(xv.shape[0]):
            z = xv[i] * scale
            fl = floor(z)
            frac = z - fl
            ifl = <long>fl
            for s in range(S):
                kk = (ifl - s) % nk
                if kk < 0:
                    kk += nk
                ov[kk] += wv[i] * _lookup(tv, dres, frac + s, exact)
    return out


def gather_level(x, table, long res, long S, long level, bint exact, coef):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(table, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(coef, dtype=np.float64)
    cdef long nk = 1 << level
    out = np.zeros(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i, s
    cdef double z, fl, frac, acc
    cdef long kk, ifl
    cdef double scale = <double>nk
    cdef double dres = <double>res
    with nogil:
        for i in range(xv.shape[0]):
            z = xv[i] * scale
            fl = floor(z)
            frac = z - fl
            ifl = <long>fl
            acc = 0.0
            for s in range(S):
                kk = (ifl - s) % nk
                if kk < 0:
                    kk += nk
                acc = acc + cv[kk] * _lookup(tv, dres, frac + s, exact)
            ov[i] = acc
    return out


def design_level(x, table, long res, long S, long level, bint exact):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(table, dtype=np.float64)
    cdef long nk = 1 << level
    out = np.zeros((xv.shape[0], nk))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, s
    cdef double z, fl, frac
    cdef long kk, ifl
    cdef double scale = <double>nk
    cdef double dres = <double>res
    with nogil:
        for i in range(xv.shape[0]):
            z = xv[i] * scale
            fl = floor(z)
            frac = z - fl
            ifl = <long>fl
            for s in range(S):
                kk = (ifl - s) % nk
                if kk < 0:
                    kk += nk
                ov[i, kk] += _lookup(tv, dres, frac + s, exact)
    return out


cdef class _Simplex:
    cdef double[:, ::1] A
    cdef double[::1] b
    cdef double[:, ::1] binv
    cdef double[::1] xb
    cdef double[::1] y
    cdef double[::1] d
    cdef double[::1] u
    cdef long[::1] basis
    cdef char[::1] is_basic
    cdef Py_ssize_t m, n
    cdef public long iters
    cdef double tol, scale_b, feas_tol
    cdef long max_iter, refactor

    def __init__(self, A, b, double tol, long max_iter, long refactor, double size):
        self.A = A
        self.b = b
        self.m = A.shape[0]
        self.n = A.shape[1]
        self.tol = tol
        self.max_iter = max_iter
        self.refactor = refactor
        self.binv = np.eye(self.m)
        self.xb = np.array(b, dtype=np.float64)
        self.y = np.zeros(self.m)
        self.d = np.zeros(self.n)
        self.u = np.zeros(self.m)
        self.basis = np.arange(self.n, self.n + self.m, dtype=np.int_)
        isb = np.zeros(self.n + self.m, dtype=np.int8)
        isb[self.n:] = 1
        self.is_basic = isb
        self.iters = 0
        self.scale_b = max(1.0, float(np.max(np.abs(b)))) if self.m else 1.0
        self.feas_tol = 1e-3 * size * self.scale_b

    def set_rhs(self, b):
        self.b = b

    def state(self):
        """Copies of the basis indices and basic values (for inspection)."""
        return np.asarray(self.basis).copy(), np.asarray(self.xb).copy()

    def refactorize(self):
        cdef Py_ssize_t i, j
        m, n = self.m, self.n
        B = np.zeros((m, m))
        A = np.asarray(self.A)
        for i in range(m):
            j = self.basis[i]
            if j < n:
                B[:, i] = A[:, j]
            else:
                B[j - n, i] = 1.0
        inv = np.linalg.inv(B)
        xnew = inv @ np.asarray(self.b)
        xnew[np.abs(xnew) < 1e-13 * self.scale_b] = 0.0
        self.binv = np.ascontiguousarray(inv)
        self.xb = np.ascontiguousarray(xnew)

    cdef void _pivot(self, Py_ssize_t r, long q) noexcept nogil:
        cdef Py_ssize_t i, k
        cdef Py_ssize_t m = self.m
        cdef double ur = self.u[r]
        cdef double f
        for k in range(m):
            self.binv[r, k] = self.binv[r, k] / ur
        for i in range(m):
            if i == r:
                continue
            f = self.u[i]
            if f != 0.0:
                for k in range(m):
                    self.binv[i, k] -= f * self.binv[r, k]
        self.is_basic[self.basis[r]] = 0
        self.basis[r] = q
        self.is_basic[q] = 1

    cdef void _column_solve(self, long q) noexcept nogil:
        # u = binv @ A[:, q]
        cdef Py_ssize_t i, k
        cdef double acc
        for i in range(self.m):
            acc = 0.0
            for k in range(self.m):
                acc = acc + self.binv[i, k] * self.A[k, q]
            self.u[i] = acc

    def run(self, cost_in):
        cdef const double[::1] cost = np.ascontiguousarray(cost_in, dtype=np.float64)
        cdef Py_ssize_t m = self.m, n = self.n
        cdef Py_ssize_t i, j, r
        cdef long q
        cdef long degenerate = 0, since = 0, stalled = 0
        cdef double obj, best_obj = INFINITY
        cdef double acc, best, theta, ratio, bestu, ptol, slack, cmax = 1.0, cost_tol
        cdef double tol = self.tol
        cdef bint bland
        for j in range(n):
            if fabs(cost[j]) > cmax:
                cmax = fabs(cost[j])
        cost_tol = tol * cmax
        while True:
            if self.iters >= self.max_iter:
                return ITERATION_LIMIT
            if stalled > 5 * m + 500:
                return NUMERICAL
            if since >= self.refactor:
                self.refactorize()
                since = 0
            with nogil:
                # y = c_B @ binv
                for j in range(m):
                    self.y[j] = 0.0
                for i in range(m):
                    acc = cost[self.basis[i]]
                    if acc != 0.0:
                        for j in range(m):
                            self.y[j] += acc * self.binv[i, j]
                for j in range(n):
                    self.d[j] = cost[j]
                for i in range(m):
                    acc = self.y[i]
                    if acc != 0.0:
                        for j in range(n):
                            self.d[j] -= acc * self.A[i, j]
                bland = degenerate > 50
                q = -1
                best = -cost_tol
                for j in range(n):
                    if self.is_basic[j]:
                        continue
                    if self.d[j] < best:
                        q = j
                        if bland:
                            break
                        best = self.d[j]
            if q < 0:
                return OPTIMAL
            with nogil:
                self._column_solve(q)
                # Harris two-pass ratio test with a relative pivot tolerance.
                ptol = 1.0
                for i in range(m):
                    if fabs(self.u[i]) > ptol:
                        ptol = fabs(self.u[i])
                ptol = ptol * _PIVOT_TOL
                # Under Bland's rule only exact minimum-ratio ties qualify.
                slack = 0.0 if bland else self.feas_tol
                theta = INFINITY
                for i in range(m):
                    if self.u[i] > ptol:
                        ratio = self.xb[i]
                        if ratio < 0.0:
                            ratio = 0.0
                        ratio = (ratio + slack) / self.u[i]
                        if ratio < theta:
                            theta = ratio
                if bland and theta < INFINITY:
                    theta = theta + 1e-12 * (theta if theta > 1.0 else 1.0)
                r = -1
                if theta < INFINITY:
                    bestu = -1.0
                    for i in range(m):
                        if self.u[i] > ptol:
                            ratio = self.xb[i]
                            if ratio < 0.0:
                                ratio = 0.0
                            ratio = ratio / self.u[i]
                            if ratio <= theta:
                                if bland:
                                    if r < 0 or self.basis[i] < self.basis[r]:
                                        r = i
                                elif self.u[i] > bestu:
                                    bestu = self.u[i]
                                    r = i
            if r < 0:
                return UNBOUNDED
            with nogil:
                theta = self.xb[r]
                if theta < 0.0:
                    theta = 0.0
                theta = theta / self.u[r]
                if degenerate <= 50:
                    if theta <= 1e-12 * self.scale_b:
                        degenerate += 1
                    else:
                        degenerate = 0
                for i in range(m):
                    self.xb[i] -= theta * self.u[i]
                self.xb[r] = theta
                self._pivot(r, q)
                obj = 0.0
                for i in range(m):
                    obj = obj + cost[self.basis[i]] * self.xb[i]
                if obj < best_obj - 1e-12 * (1.0 + fabs(best_obj)):
                    best_obj = obj
                    stalled = 0
                else:
                    stalled += 1
            self.iters += 1
            since += 1

    def drive_out_artificials(self):
        cdef Py_ssize_t m = self.m, n = self.n
        cdef Py_ssize_t r
        A = np.asarray(self.A)
        for r in range(m):
            if self.basis[r] < n:
                continue
            row = np.asarray(self.binv)[r] @ A
            row[np.asarray(self.is_basic)[:n].astype(bool)] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-7:
                self._column_solve(j)
                self._pivot(r, j)


def perturbation(long m, double scale, double size):
    return size * scale * (1.0 + np.modf(np.arange(1, m + 1) * 0.6180339887498949)[0])


def simplex_solve(A, b, c, double tol=1e-9, long max_iter=50000, long refactor=50):
    total = 0
    for size in PERTURB_LADDER:
        try:
            status, x, obj, y, iters = _attempt(A, b, c, tol, max_iter, refactor, size)
        except np.linalg.LinAlgError:
            status, x, obj, y, iters = NUMERICAL, np.zeros(np.shape(A)[1]), np.nan, np.zeros(np.shape(A)[0]), 0
        total += iters
        if status != NUMERICAL:
            break
    return status, x, obj, y, total


def _attempt(A, b, c, double tol, long max_iter, long refactor, double size):
    A = np.array(A, dtype=np.float64, order="C")
    b = np.array(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    scale_b = max(1.0, float(np.max(np.abs(b)))) if m else 1.0
    lp = _Simplex(A, b + perturbation(m, scale_b, size), tol, max_iter, refactor, size)
    status = lp.run(np.concatenate([np.zeros(n), np.ones(m)]))
    if status != OPTIMAL:
        return status, np.zeros(n), np.nan, np.zeros(m), lp.iters
    lp.refactorize()
    basis = np.asarray(lp.basis)
    xb = np.asarray(lp.xb)
    if float(np.sum(xb[basis >= n])) > INFEASIBLE_TOL * scale_b:
        return INFEASIBLE, np.zeros(n), np.nan, np.zeros(m), lp.iters
    lp.drive_out_artificials()
    lp.refactorize()
    cost2 = np.concatenate([c, np.zeros(m)])
    status = lp.run(cost2)
    lp.set_rhs(b)
    lp.refactorize()
    basis = np.asarray(lp.basis)
    xb = np.asarray(lp.xb)
    if status == OPTIMAL and float(xb.min(initial=0.0)) < -UNPERTURB_TOL * scale_b:
        status = NUMERICAL
    x = np.zeros(n)
    sel = basis < n
    x[basis[sel]] = np.maximum(xb[sel], 0.0)
    y = (cost2[basis] @ np.asarray(lp.binv)) * sign
    return status, x, float(c @ x), y, lp.iters
