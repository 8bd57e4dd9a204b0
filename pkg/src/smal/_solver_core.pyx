# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled core for the reweighted sequence solver.

Same iteration as smal._solver_py, with the per-column SPD solves and norm
bookkeeping done through BLAS/LAPACK (dgemv/dposv) without Python overhead.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemv
from scipy.linalg.cython_lapack cimport dposv

from .errors import SolverNumericError

cnp.import_array()


cdef inline double _smoothed(double t, double eps) nogil:
    cdef double s = t if t > eps else eps
    return t * t / (2.0 * s) + s / 2.0


cdef double _objective(double[::1] res, double[::1] row, double[:, ::1] grp,
                       double lam1, double lam2, double eps) nogil:
    cdef double f = 0.0
    cdef Py_ssize_t i, j
    for i in range(res.shape[0]):
        f += _smoothed(res[i], eps)
    for i in range(row.shape[0]):
        f += lam1 * _smoothed(row[i], eps)
    for j in range(grp.shape[0]):
        for i in range(grp.shape[1]):
            f += lam2 * _smoothed(grp[j, i], eps)
    return f


cdef void _norms(double[:, ::1] X, double[:, ::1] Y, double[:, ::1] Wt,
                 int k, int l, double[::1] res, double[::1] row,
                 double[:, ::1] grp, double[::1] work_m) nogil:
    """Residual/row/group norms for Wt holding solution columns as rows."""
    cdef int m = X.shape[0]
    cdef int n = X.shape[1]
    cdef int ncols = Wt.shape[0]
    cdef int one = 1
    cdef double alpha = 1.0, beta = -1.0, acc
    cdef Py_ssize_t i, r, j, t
    cdef char trans = b'T'
    for i in range(ncols):
        # work_m <- X @ w_i - y_i  (row-major X viewed as fortran X^T)
        for r in range(m):
            work_m[r] = Y[r, i]
        dgemv(&trans, &n, &m, &alpha, &X[0, 0], &n, &Wt[i, 0], &one,
              &beta, &work_m[0], &one)
        acc = 0.0
        for r in range(m):
            acc += work_m[r] * work_m[r]
        res[i] = sqrt(acc)
    for r in range(n):
        acc = 0.0
        for i in range(ncols):
            acc += Wt[i, r] * Wt[i, r]
        row[r] = sqrt(acc)
    for j in range(k):
        for i in range(ncols):
            acc = 0.0
            for t in range(l):
                acc += Wt[i, j * l + t] * Wt[i, j * l + t]
            grp[j, i] = sqrt(acc)


def irls_solve(X_in, Y_in, int k, int l, double lam1, double lam2,
               double eps, int max_iter, double rel_tol):
    """Run the reweighted scheme; see smal.solver.solve for the contract.

    Returns (W, p, q, rho, trace, converged, iterations).
    """
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef double[:, ::1] Y = np.ascontiguousarray(Y_in, dtype=np.float64)
    cdef int m = X.shape[0]
    cdef int n = X.shape[1]
    cdef int ncols = Y.shape[1]

    G_arr = np.dot(np.asarray(X).T, np.asarray(X))
    B_arr = np.dot(np.asarray(X).T, np.asarray(Y))
    cdef double[:, ::1] G = np.ascontiguousarray(G_arr)
    cdef double[:, ::1] B = np.ascontiguousarray(B_arr)

    Wt_arr = np.empty((ncols, n), dtype=np.float64)
    cdef double[:, ::1] Wt = Wt_arr
    cdef double[:, ::1] A = np.empty((n, n), dtype=np.float64)
    cdef double[::1] rhs = np.empty(n, dtype=np.float64)
    cdef double[::1] work_m = np.empty(m, dtype=np.float64)
    cdef double[::1] res = np.empty(ncols, dtype=np.float64)
    cdef double[::1] row = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] grp = np.empty((k, ncols), dtype=np.float64)
    cdef double[::1] p = np.empty(ncols, dtype=np.float64)
    cdef double[::1] q = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] rho = np.empty((k, ncols), dtype=np.float64)
    trace_arr = np.empty(max_iter + 1, dtype=np.float64)
    cdef double[::1] trace = trace_arr

    cdef int one = 1, info = 0, nrhs = 1
    cdef char uplo = b'L'
    cdef Py_ssize_t i, r, c, j, t
    cdef double ridge = lam1 + lam2
    cdef double f_prev, f, pi, denom
    cdef bint converged = False
    cdef int iterations = 0
    cdef int it

    # ridge initialization: (G + (lam1+lam2) I) w_i = B[:, i]
    for i in range(ncols):
        memcpy(&A[0, 0], &G[0, 0], n * n * sizeof(double))
        for r in range(n):
            A[r, r] += ridge
            rhs[r] = B[r, i]
        dposv(&uplo, &n, &nrhs, &A[0, 0], &n, &rhs[0], &n, &info)
        if info != 0:
            raise SolverNumericError(0, "dposv info=%d" % info)
        memcpy(&Wt[i, 0], &rhs[0], n * sizeof(double))

    _norms(X, Y, Wt, k, l, res, row, grp, work_m)
    f_prev = _objective(res, row, grp, lam1, lam2, eps)
    trace[0] = f_prev

    for it in range(1, max_iter + 1):
        iterations = it
        for i in range(ncols):
            denom = res[i] if res[i] > eps else eps
            p[i] = 0.5 / denom
        for r in range(n):
            denom = row[r] if row[r] > eps else eps
            q[r] = 0.5 / denom
        for j in range(k):
            for i in range(ncols):
                denom = grp[j, i] if grp[j, i] > eps else eps
                rho[j, i] = 0.5 / denom
        for i in range(ncols):
            pi = p[i]
            for r in range(n):
                for c in range(n):
                    A[r, c] = pi * G[r, c]
                rhs[r] = pi * B[r, i]
            for j in range(k):
                for t in range(l):
                    r = j * l + t
                    A[r, r] += lam1 * q[r] + lam2 * rho[j, i]
            dposv(&uplo, &n, &nrhs, &A[0, 0], &n, &rhs[0], &n, &info)
            if info != 0:
                raise SolverNumericError(it, "dposv info=%d" % info)
            memcpy(&Wt[i, 0], &rhs[0], n * sizeof(double))
        _norms(X, Y, Wt, k, l, res, row, grp, work_m)
        f = _objective(res, row, grp, lam1, lam2, eps)
        trace[it] = f
        if fabs(f - f_prev) / (f_prev if f_prev > 1e-12 else 1e-12) < rel_tol:
            converged = True
            break
        f_prev = f

    W = np.ascontiguousarray(Wt_arr.T)
    return (
        W,
        np.asarray(p).copy(),
        np.asarray(q).copy(),
        np.asarray(rho).copy(),
        list(trace_arr[: iterations + 1]),
        bool(converged),
        iterations,
    )
