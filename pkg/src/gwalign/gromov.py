"""Entropic Gromov-Wasserstein alignment between two similarity matrices.

With the square loss ``L(a, b) = (a - b)^2 / 2`` the GW energy of a coupling
``G`` is

    E(G) = sum_{ijkl} L(Cs[i,k], Ct[j,l]) G[i,j] G[k,l]

and its gradient is the pseudo-cost

    Chat(G) = (Cs*Cs) p 1^T + 1 q^T (Ct*Ct)^T - 2 Cs G Ct^T,

so neither needs the ``n^2 m^2`` loss tensor. The solver alternates between
building ``Chat`` at the current coupling and projecting it back onto the
transport polytope with Sinkhorn.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NumericalUnderflowError, ShapeError
from .similarity import SimilarityMatrix
from .sinkhorn import Coupling, SinkhornConfig, entropy, sinkhorn_solve

logger = logging.getLogger(__name__)

__all__ = [
    "GwConfig",
    "IterationRecord",
    "GwResult",
    "gw_objective",
    "gw_objective_naive",
    "gw_constant_term",
    "gw_pseudo_cost",
    "gw_solve",
    "gw_distance",
    "write_trace_csv",
]


@dataclass(frozen=True)
class GwConfig:
    lambda_primary: float = 5e-5
    lambda_fallback: float = 1e-4
    max_outer_iters: int = 300
    outer_tol: float = 1e-7
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if not (self.lambda_primary > 0 and self.lambda_fallback > 0):
            raise ValueError("regularization values must be positive")
        if self.lambda_primary > self.lambda_fallback:
            raise ValueError(
                f"lambda_primary ({self.lambda_primary:g}) must not exceed "
                f"lambda_fallback ({self.lambda_fallback:g})"
            )
        if self.max_outer_iters < 1 or not self.outer_tol > 0:
            raise ValueError("max_outer_iters must be >= 1 and outer_tol > 0")

    @classmethod
    def with_lambda(cls, lam: float, fallback: float | None = None, **kwargs) -> "GwConfig":
        """Config whose fallback defaults to twice the requested ``lam``."""
        return cls(lambda_primary=lam, lambda_fallback=2 * lam if fallback is None else fallback, **kwargs)


@dataclass(frozen=True)
class IterationRecord:
    """One outer iteration.

    ``objective`` is the regularized value ``energy - lam * H(G)`` that each
    step provably does not increase (for PSD similarity matrices and exact
    inner solves); ``energy`` is the plain GW value.
    """

    objective: float
    energy: float
    sinkhorn_iters: int
    marginal_violation: float
    sinkhorn_converged: bool
    change: float


@dataclass(frozen=True, eq=False)
class GwResult:
    coupling: Coupling
    history: tuple[IterationRecord, ...]
    gw_value: float
    lambda_used: float
    converged: bool
    lambdas_tried: tuple[float, ...] = ()

    @property
    def objective_trace(self) -> list[float]:
        return [rec.objective for rec in self.history]

    @property
    def energy_trace(self) -> list[float]:
        return [rec.energy for rec in self.history]

    @property
    def n_iter(self) -> int:
        return len(self.history)

    @property
    def inner_converged(self) -> bool:
        return all(rec.sinkhorn_converged for rec in self.history)


def _check_shapes(Cs: SimilarityMatrix, Ct: SimilarityMatrix, G=None):
    n, m = Cs.size, Ct.size
    if G is not None and G.shape != (n, m):
        raise ShapeError(f"coupling {G.shape} does not match similarity sizes ({n}, {m})")


def gw_objective(Cs: SimilarityMatrix, Ct: SimilarityMatrix, coupling: Coupling) -> float:
    """GW energy of ``coupling`` in ``O(n^2 m + n m^2)``.

    Uses the coupling's actual row and column sums, so the value is exact
    even for plans that only approximately satisfy their marginals.
    """
    G = coupling.values
    _check_shapes(Cs, Ct, G)
    A, B = Cs.values, Ct.values
    r, c = G.sum(axis=1), G.sum(axis=0)
    cross = np.sum((A @ G @ B.T) * G)
    value = 0.5 * (r @ (A * A) @ r + c @ (B * B) @ c) - cross
    # a sum of nonnegative terms; only cancellation can push it below zero
    return max(float(value), 0.0)


def gw_objective_naive(Cs, Ct, G) -> float:
    """Reference energy built from the full ``n x m x n x m`` loss tensor."""
    A = np.asarray(getattr(Cs, "values", Cs), dtype=np.float64)
    B = np.asarray(getattr(Ct, "values", Ct), dtype=np.float64)
    G = np.asarray(getattr(G, "values", G), dtype=np.float64)
    # L[i, j, k, l] = (A[i, k] - B[j, l])^2 / 2
    L = 0.5 * (A[:, None, :, None] - B[None, :, None, :]) ** 2
    return float(np.einsum("ijkl,ij,kl->", L, G, G))


def gw_constant_term(Cs: SimilarityMatrix, Ct: SimilarityMatrix) -> np.ndarray:
    """``(Cs*Cs) p 1^T + 1 q^T (Ct*Ct)^T``; fixed for every coupling in the polytope."""
    A, B = Cs.values, Ct.values
    row = (A * A) @ Cs.weights
    col = (B * B) @ Ct.weights
    return row[:, None] + col[None, :]


def gw_pseudo_cost(
    Cs: SimilarityMatrix, Ct: SimilarityMatrix, coupling: Coupling, const: np.ndarray | None = None
) -> np.ndarray:
    """Gradient of the GW energy at ``coupling`` (Sinkhorn's cost for the next step).

    ``const`` may carry a precomputed :func:`gw_constant_term`.
    """
    G = coupling.values
    _check_shapes(Cs, Ct, G)
    if const is None:
        const = gw_constant_term(Cs, Ct)
    elif const.shape != G.shape:
        raise ShapeError(f"constant term {const.shape} does not match coupling {G.shape}")
    return const - 2.0 * (Cs.values @ G @ Ct.values.T)


def _run(Cs, Ct, cfg: GwConfig, lam: float):
    p, q = Cs.weights, Ct.weights
    inner = replace(cfg.sinkhorn, lam=lam)
    const = gw_constant_term(Cs, Ct)
    coupling = Coupling.product(p, q)
    history = []
    converged = False
    for t in range(cfg.max_outer_iters):
        cost = gw_pseudo_cost(Cs, Ct, coupling, const)
        new = sinkhorn_solve(cost, p, q, inner)
        change = float(np.abs(new.values - coupling.values).max())
        coupling = new
        energy = gw_objective(Cs, Ct, coupling)
        history.append(
            IterationRecord(
                objective=energy - lam * entropy(coupling),
                energy=energy,
                sinkhorn_iters=new.info.n_iter,
                marginal_violation=new.info.marginal_violation,
                sinkhorn_converged=new.info.converged,
                change=change,
            )
        )
        if change <= cfg.outer_tol:
            converged = True
            break
    return coupling, history, converged


def gw_solve(Cs: SimilarityMatrix, Ct: SimilarityMatrix, cfg: GwConfig | None = None) -> GwResult:
    """Entropic GW coupling between ``Cs`` (source) and ``Ct`` (target).

    Starts from ``p q^T`` and iterates pseudo-cost / Sinkhorn projection until
    the coupling changes by at most ``outer_tol`` (max-norm) or
    ``max_outer_iters`` is reached. If Sinkhorn underflows at
    ``lambda_primary`` the whole solve is restarted once with
    ``lambda_fallback``.

    Raises
    ------
    NumericalUnderflowError
        If the fallback regularization underflows too; ``attempted`` lists
        both values.
    """
    cfg = cfg or GwConfig()
    _check_shapes(Cs, Ct)
    if Cs.metric_tag != Ct.metric_tag:
        raise ValueError(
            f"metric mismatch: {Cs.metric_tag.value} vs {Ct.metric_tag.value}"
        )
    lambdas = [cfg.lambda_primary]
    if cfg.lambda_fallback != cfg.lambda_primary:
        lambdas.append(cfg.lambda_fallback)
    tried = []
    for lam in lambdas:
        tried.append(lam)
        try:
            coupling, history, converged = _run(Cs, Ct, cfg, lam)
        except NumericalUnderflowError as exc:
            logger.info("GW solve underflowed at lambda=%g: %s", lam, exc)
            last = exc
            continue
        if not converged:
            logger.warning("GW solve hit max_outer_iters=%d at lambda=%g", cfg.max_outer_iters, lam)
        return GwResult(
            coupling=coupling,
            history=tuple(history),
            gw_value=history[-1].energy,
            lambda_used=lam,
            converged=converged,
            lambdas_tried=tuple(tried),
        )
    raise NumericalUnderflowError(last.lam, "no regularization value succeeded", attempted=tried)


def gw_distance(Cs: SimilarityMatrix, Ct: SimilarityMatrix, cfg: GwConfig | None = None) -> float:
    """Entropic estimate of ``GW(Cs, Ct, p, q)`` (take the square root for a metric)."""
    return gw_solve(Cs, Ct, cfg).gw_value


def write_trace_csv(result: GwResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "objective", "energy", "sinkhorn_iters", "marginal_violation"])
        for t, rec in enumerate(result.history, start=1):
            writer.writerow(
                [t, repr(rec.objective), repr(rec.energy), rec.sinkhorn_iters, repr(rec.marginal_violation)]
            )
