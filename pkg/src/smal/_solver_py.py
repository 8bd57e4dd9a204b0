"""Pure numpy backend for the reweighted sequence solver.

Implements exactly the same iteration as the compiled core
(``smal._solver_core``); kept in sync so either backend can serve as the
reference for the other. See :mod:`smal.solver` for the public API and the
meaning of the returned tuple.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SolverNumericError


def _norms(X, Y, W, k, l):
    """Column residual norms, row norms, and per-column group norms of W."""
    resid = X @ W - Y
    res = np.linalg.norm(resid, axis=0)
    row = np.linalg.norm(W, axis=1)
    grp = np.linalg.norm(W.reshape(k, l, W.shape[1]), axis=1)
    return res, row, grp


def _smoothed(t, eps):
    # equals t for t >= eps, quadratic below; the surrogate the
    # reweighted updates provably decrease
    s = np.maximum(t, eps)
    return t * t / (2.0 * s) + s / 2.0


def _objective(res, row, grp, lam1, lam2, eps):
    return (
        _smoothed(res, eps).sum()
        + lam1 * _smoothed(row, eps).sum()
        + lam2 * _smoothed(grp, eps).sum()
    )


def irls_solve(X, Y, k, l, lam1, lam2, eps, max_iter, rel_tol):
    """Run the reweighted scheme; see smal.solver.solve for the contract.

    Returns (W, p, q, rho, trace, converged, iterations).
    """
    n = X.shape[1]
    G = X.T @ X
    B = X.T @ Y

    # ridge initialization, one shared factorization for all columns
    A0 = G + (lam1 + lam2) * np.eye(n)
    try:
        W = cho_solve(cho_factor(A0, lower=True), B)
    except np.linalg.LinAlgError as exc:
        raise SolverNumericError(0, str(exc)) from exc

    res, row, grp = _norms(X, Y, W, k, l)
    f_prev = _objective(res, row, grp, lam1, lam2, eps)
    trace = [f_prev]
    converged = False
    iterations = 0
    p = 0.5 / np.maximum(res, eps)
    q = 0.5 / np.maximum(row, eps)
    rho = 0.5 / np.maximum(grp, eps)

    for t in range(1, max_iter + 1):
        iterations = t
        p = 0.5 / np.maximum(res, eps)
        q = 0.5 / np.maximum(row, eps)
        rho = 0.5 / np.maximum(grp, eps)
        W_next = np.empty_like(W)
        for i in range(W.shape[1]):
            diag = lam1 * q + lam2 * np.repeat(rho[:, i], l)
            A = p[i] * G
            A[np.diag_indices(n)] += diag
            try:
                W_next[:, i] = cho_solve(
                    cho_factor(A, lower=True, overwrite_a=True), p[i] * B[:, i]
                )
            except np.linalg.LinAlgError as exc:
                raise SolverNumericError(t, str(exc)) from exc
        W = W_next
        res, row, grp = _norms(X, Y, W, k, l)
        f = _objective(res, row, grp, lam1, lam2, eps)
        trace.append(f)
        if abs(f - f_prev) / max(f_prev, 1e-12) < rel_tol:
            converged = True
            break
        f_prev = f

    return W, p, q, rho, trace, converged, iterations
