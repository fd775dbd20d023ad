"""Intra-space similarity matrices and their scale normalization."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DegenerateMatrixError, DegenerateVectorError, ShapeError
from .ingestion import EmbeddingMatrix, check_weights, uniform_weights

__all__ = [
    "Metric",
    "Normalization",
    "SimilarityMatrix",
    "cosine_similarity_matrix",
    "normalize",
    "similarity_histogram",
    "write_histogram_csv",
]


class Metric(str, Enum):
    COSINE_SIMILARITY = "cosine_similarity"
    COSINE_DISTANCE = "cosine_distance"


class Normalization(str, Enum):
    NONE = "none"
    MEAN = "mean"
    MEDIAN = "median"
    MAX = "max"


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """A square similarity matrix ``C`` paired with point weights ``p``."""

    values: np.ndarray
    weights: np.ndarray
    metric_tag: Metric = Metric.COSINE_SIMILARITY
    normalization_tag: Normalization = Normalization.NONE

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ShapeError(f"similarity matrix must be square, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("similarity matrix has non-finite entries")
        if np.max(np.abs(values - values.T), initial=0.0) > 1e-10:
            raise ValueError("similarity matrix is not symmetric")
        weights = check_weights(self.weights, values.shape[0]).copy()
        values.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "metric_tag", Metric(self.metric_tag))
        object.__setattr__(self, "normalization_tag", Normalization(self.normalization_tag))

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_array(cls, values, weights=None, **tags) -> "SimilarityMatrix":
        """Wrap a raw matrix, defaulting to uniform weights."""
        values = np.asarray(values, dtype=np.float64)
        if weights is None:
            weights = uniform_weights(values.shape[0])
        return cls(values, weights, **tags)

    def permuted(self, perm) -> "SimilarityMatrix":
        """Relabel points: entry ``(i, j)`` becomes ``C[perm[i], perm[j]]``."""
        perm = np.asarray(perm)
        return replace(self, values=self.values[np.ix_(perm, perm)], weights=self.weights[perm])


def cosine_similarity_matrix(
    emb: EmbeddingMatrix, weights=None, metric: Metric | str = Metric.COSINE_SIMILARITY
) -> SimilarityMatrix:
    """Pairwise cosine similarities between the columns of ``emb``.

    With ``metric="cosine_distance"`` the entries are ``1 - cos`` instead.
    """
    X = emb.vectors
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateVectorError(emb.vocab[zero[0]])
    Xn = X / norms
    C = Xn.T @ Xn
    # symmetrize away BLAS rounding; pin the diagonal
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    metric = Metric(metric)
    if metric is Metric.COSINE_DISTANCE:
        C = 1.0 - C
    if weights is None:
        weights = uniform_weights(emb.size)
    return SimilarityMatrix(C, weights, metric_tag=metric)


def _statistic(values: np.ndarray, scheme: Normalization) -> float:
    a = np.abs(values)
    if scheme is Normalization.MEAN:
        return float(a.mean())
    if scheme is Normalization.MEDIAN:
        return float(np.median(a))
    if scheme is Normalization.MAX:
        return float(a.max())
    raise ValueError(f"unknown normalization scheme {scheme!r}")


def normalize(sim: SimilarityMatrix, scheme: Normalization | str = Normalization.MEAN) -> SimilarityMatrix:
    """Divide every entry by the mean, median or max of the absolute entries.

    Two spaces whose similarities live on different scales end up on a
    common one, and the result does not depend on any positive rescaling of
    the input.
    """
    scheme = Normalization(scheme)
    if scheme is Normalization.NONE:
        return sim
    values = sim.values
    peak = np.abs(values).max(initial=0.0)
    if peak > 0:
        # exact power-of-two prescale keeps tiny matrices away from subnormal statistics
        values = np.ldexp(values, -np.frexp(peak)[1])
    stat = _statistic(values, scheme)
    if not stat > 0:
        raise DegenerateMatrixError(f"{scheme.value} of |C| is zero; cannot normalize")
    with np.errstate(over="ignore"):
        out = values / stat
    if not np.all(np.isfinite(out)):
        raise DegenerateMatrixError(f"{scheme.value} of |C| is too small relative to its largest entry")
    return replace(sim, values=out, normalization_tag=scheme)


def similarity_histogram(sim: SimilarityMatrix, bins: int = 100, off_diagonal: bool = True):
    """Histogram of pairwise similarities over their observed range.

    Returns ``(edges, counts)`` as from :func:`numpy.histogram`.
    """
    C = sim.values
    vals = C[~np.eye(sim.size, dtype=bool)] if off_diagonal and sim.size > 1 else C.ravel()
    counts, edges = np.histogram(vals, bins=bins, range=(vals.min(), vals.max()))
    return edges, counts


def write_histogram_csv(sim: SimilarityMatrix, path: str | Path, bins: int = 100) -> None:
    edges, counts = similarity_histogram(sim, bins)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for left, right, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(left)), repr(float(right)), int(c)])
