"""Entropy-regularized optimal transport by Sinkhorn-Knopp matrix scaling.

For a cost ``C`` and marginals ``p``, ``q`` the regularized plan has the form
``diag(a) K diag(b)`` with ``K = exp(-C / lam)``; the scaling vectors are
found by alternating ``a = p / (K b)`` and ``b = q / (K^T a)``.

Two kernels are provided. The plain one follows the multiplicative updates
literally and reports underflow of ``K`` as :class:`NumericalUnderflowError`
(the GW solver uses that signal to retry with a larger regularization). The
log-domain one carries ``log a``, ``log b`` and uses log-sum-exp reductions,
which survives much smaller ``lam``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalUnderflowError, ShapeError
from .ingestion import check_weights

__all__ = [
    "SinkhornConfig",
    "SinkhornInfo",
    "Coupling",
    "sinkhorn_solve",
    "transport_cost",
    "entropy",
]


@dataclass(frozen=True)
class SinkhornConfig:
    lam: float = 1e-2
    max_inner_iters: int = 1000
    marginal_tol: float = 1e-6
    log_domain: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.marginal_tol > 0:
            raise ValueError("marginal_tol must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")


@dataclass(frozen=True, eq=False)
class SinkhornInfo:
    """Telemetry of one Sinkhorn run.

    ``log_a`` and ``log_b`` are the logs of the final scaling vectors, so
    that ``values == exp(log_a[:, None] - cost / lam + log_b[None, :])``.
    """

    n_iter: int
    marginal_violation: float
    converged: bool
    lam: float
    log_a: np.ndarray
    log_b: np.ndarray

    @property
    def a(self) -> np.ndarray:
        return np.exp(self.log_a)

    @property
    def b(self) -> np.ndarray:
        return np.exp(self.log_b)


@dataclass(frozen=True, eq=False)
class Coupling:
    """A transport plan with its prescribed marginals."""

    values: np.ndarray
    row_weights: np.ndarray
    col_weights: np.ndarray
    info: SinkhornInfo | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError("coupling must be a 2-D matrix")
        n, m = values.shape
        row_w = np.asarray(self.row_weights, dtype=np.float64)
        col_w = np.asarray(self.col_weights, dtype=np.float64)
        if row_w.shape != (n,) or col_w.shape != (m,):
            raise ShapeError(
                f"marginals {row_w.shape}/{col_w.shape} do not match coupling {values.shape}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_weights", row_w)
        object.__setattr__(self, "col_weights", col_w)

    @classmethod
    def product(cls, p, q) -> "Coupling":
        """The independence coupling ``p q^T``."""
        p = np.asarray(p, dtype=np.float64)
        q = np.asarray(q, dtype=np.float64)
        return cls(np.outer(p, q), p, q)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def converged(self) -> bool:
        return True if self.info is None else self.info.converged

    def marginal_violation(self) -> float:
        """Largest absolute deviation of the row or column sums from the marginals."""
        rows = np.abs(self.values.sum(axis=1) - self.row_weights).max()
        cols = np.abs(self.values.sum(axis=0) - self.col_weights).max()
        return float(max(rows, cols))


def _validate(cost, p, q):
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ShapeError("cost must be a 2-D matrix")
    n, m = cost.shape
    p = check_weights(p, n)
    q = check_weights(q, m)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has non-finite entries")
    return cost, p, q


def _underflow(lam, what):
    return NumericalUnderflowError(lam, what)


def _solve_plain(cost, p, q, cfg):
    lam = cfg.lam
    K = np.exp(-cost / lam)
    # rows/columns that must carry mass but have no positive kernel entry
    if np.any((K.max(axis=1) == 0) & (p > 0)):
        raise _underflow(lam, "a row of exp(-C/lambda) is entirely zero")
    if np.any((K.max(axis=0) == 0) & (q > 0)):
        raise _underflow(lam, "a column of exp(-C/lambda) is entirely zero")

    b = np.ones(cost.shape[1])
    Kb = K @ b
    violation = np.inf
    it = 0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for it in range(1, cfg.max_inner_iters + 1):
            a = np.where(p > 0, p / Kb, 0.0)
            b = np.where(q > 0, q / (K.T @ a), 0.0)
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise _underflow(lam, f"scaling vectors left the floating point range at iteration {it}")
            Kb = K @ b
            violation = float(np.abs(a * Kb - p).max())
            if violation <= cfg.marginal_tol:
                break
        with np.errstate(divide="ignore"):
            log_a, log_b = np.log(a), np.log(b)
    values = a[:, None] * K * b[None, :]
    return values, it, violation, log_a, log_b


def _logsumexp(M, axis):
    top = M.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    out = np.log(np.exp(M - top).sum(axis=axis, keepdims=True)) + top
    return np.squeeze(out, axis=axis)


def _solve_log(cost, p, q, cfg):
    lam = cfg.lam
    n, m = cost.shape
    with np.errstate(divide="ignore"):
        log_p, log_q = np.log(p), np.log(q)
    M = -cost / lam
    log_b = np.zeros(m)
    violation = np.inf
    it = 0
    log_Kb = _logsumexp(M, axis=1)
    with np.errstate(divide="ignore"):
        for it in range(1, cfg.max_inner_iters + 1):
            log_a = log_p - log_Kb
            log_b = log_q - _logsumexp(M + log_a[:, None], axis=0)
            log_Kb = _logsumexp(M + log_b[None, :], axis=1)
            violation = float(np.abs(np.exp(log_a + log_Kb) - p).max())
            if violation <= cfg.marginal_tol:
                break
    values = np.exp(log_a[:, None] + M + log_b[None, :])
    return values, it, violation, log_a, log_b


def sinkhorn_solve(cost, p, q, cfg: SinkhornConfig | None = None) -> Coupling:
    """Solve ``min <G, C> - lam * H(G)`` over couplings with marginals ``p``, ``q``.

    Parameters
    ----------
    cost : array-like, shape (n, m)
    p : array-like, shape (n,)
        Row marginal, a probability vector.
    q : array-like, shape (m,)
        Column marginal.
    cfg : SinkhornConfig, optional

    Returns
    -------
    Coupling
        ``info`` carries the iteration count, the final row-marginal
        violation (column sums are exact after the last half-step), the
        convergence flag and the scaling vectors. Hitting
        ``max_inner_iters`` is not an error; ``info.converged`` is False.

    Raises
    ------
    NumericalUnderflowError
        If the plain kernel underflows (a row or column of ``K`` is zero, or
        the scaling vectors overflow).
    """
    cfg = cfg or SinkhornConfig()
    cost, p, q = _validate(cost, p, q)
    solver = _solve_log if cfg.log_domain else _solve_plain
    values, it, violation, log_a, log_b = solver(cost, p, q, cfg)
    if not np.all(np.isfinite(values)):
        raise _underflow(cfg.lam, "transport plan has non-finite entries")
    info = SinkhornInfo(
        n_iter=it,
        marginal_violation=violation,
        converged=violation <= cfg.marginal_tol,
        lam=cfg.lam,
        log_a=log_a,
        log_b=log_b,
    )
    return Coupling(values, p, q, info)


def transport_cost(coupling: Coupling, cost) -> float:
    """``<G, C> = sum_ij G_ij C_ij``."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.shape != coupling.shape:
        raise ShapeError(f"cost {cost.shape} vs coupling {coupling.shape}")
    return float(np.sum(coupling.values * cost))


def entropy(coupling: Coupling) -> float:
    """``H(G) = -sum G (log G - 1)`` with ``0 log 0 = 0``."""
    G = coupling.values
    pos = G > 0
    g = G[pos]
    return float(-np.sum(g * (np.log(g) - 1.0)))
