"""Structured-sparse sequence solver.

Given a template matrix X whose n columns form k contiguous sequences of
length l, and a query sequence Y of l feature columns, finds the weight
matrix W minimizing

    sum_i ||X w_i - y_i||_2  +  lambda1 * ||W||_{2,1}  +  lambda2 * ||W||_{S1}

where ||W||_{2,1} sums the L2 norms of W's rows and the S1 norm sums, per
column, the L2 norms of each sequence group's slice (L1 across groups). The
loss term is the L2,1 norm of (XW - Y) transposed, i.e. the sum of column
residual norms, so whole query frames can be outliers without dominating.

The minimizer is computed by iteratively reweighted least squares: each
non-smooth norm contributes a diagonal weight rebuilt from the previous
iterate (1 / (2 max(norm, epsilon))), and each column then solves a small
symmetric positive-definite system. Per iteration the scheme provably
decreases the epsilon-smoothed objective (see ``smoothed_objective``), which
is what ``SolverState.objective_trace`` records.

Two interchangeable backends implement the iteration: a compiled extension
(``smal._solver_core``) and a pure numpy fallback (``smal._solver_py``).
The compiled one is used when importable unless ``SMAL_PURE_PYTHON`` is set
to a non-empty value other than ``0``.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverNumericError

__all__ = [
    "TemplateMatrix",
    "QuerySequence",
    "WeightMatrix",
    "SolverConfig",
    "SolverState",
    "SolverNumericError",
    "l21_norm",
    "s1_norm",
    "objective",
    "smoothed_objective",
    "solve",
    "backend_name",
]


def _force_pure() -> bool:
    flag = os.environ.get("SMAL_PURE_PYTHON", "").strip()
    return flag not in ("", "0")


from . import _solver_py as _py_backend  # noqa: E402

try:
    from . import _solver_core as _compiled_backend
except ImportError:  # extension not built on this install
    _compiled_backend = None

if _compiled_backend is not None and not _force_pure():
    _backend = _compiled_backend
    _BACKEND_NAME = "compiled"
else:
    _backend = _py_backend
    _BACKEND_NAME = "python"


def backend_name() -> str:
    """Name of the active solver backend: 'compiled' or 'python'."""
    return _BACKEND_NAME


@dataclass(frozen=True)
class TemplateMatrix:
    """m x n matrix of k contiguous template sequences, each l columns wide."""

    data: np.ndarray
    seq_len: int

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("template data must be a matrix")
        if self.seq_len < 1:
            raise ValueError("sequence length must be positive")
        if data.shape[1] % self.seq_len != 0:
            raise ValueError("column count must be a multiple of seq_len")
        if not np.isfinite(data).all():
            raise ValueError("template entries must be finite")
        object.__setattr__(self, "data", data)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def num_seqs(self) -> int:
        return self.n // self.seq_len

    def seq_of_column(self, c: int) -> int:
        if not 0 <= c < self.n:
            raise IndexError("column index out of range")
        return c // self.seq_len

    def sequence(self, j: int) -> np.ndarray:
        if not 0 <= j < self.num_seqs:
            raise IndexError("sequence index out of range")
        return self.data[:, j * self.seq_len:(j + 1) * self.seq_len]

    def append_sequence(self, block: np.ndarray) -> "TemplateMatrix":
        """New TemplateMatrix with one more sequence appended."""
        block = np.asarray(block, dtype=np.float64)
        if block.shape != (self.m, self.seq_len) and self.n > 0:
            raise ValueError("appended sequence has wrong shape")
        return TemplateMatrix(
            data=np.hstack([self.data, block]), seq_len=self.seq_len
        )


@dataclass(frozen=True)
class QuerySequence:
    """m x l matrix of l consecutive query feature vectors."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("query data must be a matrix")
        if not np.isfinite(data).all():
            raise ValueError("query entries must be finite")
        object.__setattr__(self, "data", data)

    @property
    def seq_len(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class WeightMatrix:
    """n x l solver output; rows grouped into sequences of seq_len rows."""

    data: np.ndarray
    seq_len: int

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("weight data must be a matrix")
        if data.shape[0] % self.seq_len != 0:
            raise ValueError("row count must be a multiple of seq_len")
        object.__setattr__(self, "data", data)

    @property
    def num_groups(self) -> int:
        return self.data.shape[0] // self.seq_len

    def group(self, j: int) -> np.ndarray:
        return self.data[j * self.seq_len:(j + 1) * self.seq_len, :]


@dataclass(frozen=True)
class SolverConfig:
    """Regularization strengths plus iteration controls.

    epsilon smooths every reweighting denominator: each L2 norm is replaced
    by max(norm, epsilon), keeping the weights finite at exact zeros.
    """

    lambda1: float = 0.1
    lambda2: float = 0.1
    epsilon: float = 1e-8
    max_iter: int = 100
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularization strengths must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")


@dataclass
class SolverState:
    """Final reweighting diagonals and the per-iteration objective trace.

    P holds the l residual weights p_ii, Q the n row weights, Rblocks the
    (k, l) per-column group weights, all as used by the last executed
    iteration. objective_trace[t] is the smoothed objective after t
    iterations (entry 0 is the initialization's value).
    """

    P: np.ndarray
    Q: np.ndarray
    Rblocks: np.ndarray
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def l21_norm(M) -> float:
    """Sum of L2 norms of the rows of M."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("l21_norm expects a matrix")
    return float(np.linalg.norm(M, axis=1).sum())


def s1_norm(M, group_size: int) -> float:
    """Sum over columns of the L2 norms of each row-group's slice.

    Rows are partitioned into contiguous groups of group_size; the norm is
    L2 within a group's column slice and L1 across groups and columns.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("s1_norm expects a matrix")
    if group_size < 1 or M.shape[0] % group_size != 0:
        raise ValueError("rows must split into equal groups")
    k = M.shape[0] // group_size
    grouped = M.reshape(k, group_size, M.shape[1])
    return float(np.sqrt((grouped ** 2).sum(axis=1)).sum())


def _check_problem(X: TemplateMatrix, Y: QuerySequence, cfg: SolverConfig):
    if X.n < 1:
        raise ValueError("template matrix must have at least one column")
    if Y.data.shape[0] != X.m:
        raise ValueError("feature dimensions of X and Y differ")
    if Y.seq_len != X.seq_len:
        raise ValueError("query length must equal template seq_len")
    if cfg.lambda1 == 0 and cfg.lambda2 == 0:
        raise ValueError("at least one regularization strength must be positive")


def objective(X: TemplateMatrix, Y: QuerySequence, W: WeightMatrix,
              cfg: SolverConfig) -> float:
    """Exact (unsmoothed) objective value at W."""
    if W.data.shape != (X.n, Y.seq_len):
        raise ValueError("weight matrix shape does not match X and Y")
    if Y.data.shape[0] != X.m or Y.seq_len != X.seq_len:
        raise ValueError("feature dimensions of X and Y differ")
    loss = l21_norm((X.data @ W.data - Y.data).T)
    return (
        loss
        + cfg.lambda1 * l21_norm(W.data)
        + cfg.lambda2 * s1_norm(W.data, X.seq_len)
    )


def _smoothed_terms(t: np.ndarray, eps: float) -> np.ndarray:
    s = np.maximum(t, eps)
    return t * t / (2.0 * s) + s / 2.0


def smoothed_objective(X: TemplateMatrix, Y: QuerySequence, W,
                       cfg: SolverConfig) -> float:
    """Epsilon-smoothed objective: each L2 norm t becomes
    t^2/(2 max(t, eps)) + max(t, eps)/2 (equal to t for t >= eps).

    This is the function the reweighted iteration decreases monotonically
    and the one recorded in SolverState.objective_trace.
    """
    Wd = W.data if isinstance(W, WeightMatrix) else np.asarray(W, dtype=np.float64)
    l = X.seq_len
    k = X.num_seqs
    res = np.linalg.norm(X.data @ Wd - Y.data, axis=0)
    row = np.linalg.norm(Wd, axis=1)
    grp = np.linalg.norm(Wd.reshape(k, l, Wd.shape[1]), axis=1)
    eps = cfg.epsilon
    return float(
        _smoothed_terms(res, eps).sum()
        + cfg.lambda1 * _smoothed_terms(row, eps).sum()
        + cfg.lambda2 * _smoothed_terms(grp, eps).sum()
    )


def solve(X: TemplateMatrix, Y: QuerySequence, cfg: SolverConfig = SolverConfig(),
          backend: str | None = None):
    """Minimize the structured-sparse objective for query Y.

    Per iteration, every column w_i solves
        (p_ii X'X + lambda1 Q + lambda2 R^i) w_i = p_ii X' y_i
    with p_ii = 1/(2 max(||y_i - X w_i||, eps)), Q's diagonal
    1/(2 max(||w^r||, eps)) from W's rows, and R^i block-constant
    1/(2 max(||w_i^j||, eps)) per sequence group, all taken from the
    previous iterate. W starts at the per-column ridge solution
    (X'X + (lambda1+lambda2) I)^{-1} X'y_i. Iteration stops when the
    relative change of the smoothed objective drops below rel_tol or
    after max_iter iterations.

    Returns (WeightMatrix, SolverState). Deterministic: fixed inputs and
    config produce bit-identical results on a fixed backend.
    """
    _check_problem(X, Y, cfg)
    impl = _pick_backend(backend)
    W, p, q, rho, trace, converged, iterations = impl.irls_solve(
        X.data, Y.data, X.num_seqs, X.seq_len,
        cfg.lambda1, cfg.lambda2, cfg.epsilon, cfg.max_iter, cfg.rel_tol,
    )
    state = SolverState(
        P=np.asarray(p), Q=np.asarray(q), Rblocks=np.asarray(rho),
        objective_trace=[float(v) for v in trace],
        converged=converged, iterations=iterations,
    )
    return WeightMatrix(data=W, seq_len=X.seq_len), state


def _pick_backend(name: str | None):
    if name is None:
        return _backend
    if name == "python":
        return _py_backend
    if name == "compiled":
        if _compiled_backend is None:
            raise ValueError("compiled solver backend is not available")
        return _compiled_backend
    raise ValueError(f"unknown solver backend {name!r}")
