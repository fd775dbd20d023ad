"""Orthogonal maps between embedding spaces.

Both solvers return ``P = U V^T`` from an SVD: of ``X Y^T`` for paired
columns (plain Procrustes), or of ``X G Y^T`` when the pairing is a soft
coupling ``G`` (barycentric Procrustes). ``P`` maps target vectors into the
source space, ``x ~ P y``.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .ingestion import EmbeddingMatrix
from .sinkhorn import Coupling

logger = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_GW_VOCAB",
    "OrthogonalMap",
    "procrustes",
    "barycentric_procrustes",
    "apply_map",
    "save_map",
    "load_map",
    "save_map_text",
    "load_map_text",
]

DEFAULT_GW_VOCAB = 20_000

_DEGENERATE_RATIO = 1e-10


@dataclass(frozen=True, eq=False)
class OrthogonalMap:
    matrix: np.ndarray
    direction: str = "target-to-source"
    degenerate: bool = False

    def __post_init__(self):
        P = np.asarray(self.matrix, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ShapeError(f"map must be square, got {P.shape}")
        object.__setattr__(self, "matrix", P)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def orthogonality_error(self) -> float:
        P = self.matrix
        return float(np.abs(P.T @ P - np.eye(self.dim)).max())


def _polar(M: np.ndarray) -> OrthogonalMap:
    U, s, Vt = np.linalg.svd(M)
    degenerate = bool(s.size == 0 or s[-1] < _DEGENERATE_RATIO * s[0])
    if degenerate:
        logger.warning("Procrustes cross-covariance is rank deficient; the optimal map is not unique")
    return OrthogonalMap(U @ Vt, degenerate=degenerate)


def procrustes(X, Y) -> OrthogonalMap:
    """Orthogonal ``P`` minimizing ``||X - P Y||_F`` for column-paired ``X``, ``Y`` (``d x k``)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape != Y.shape:
        raise ShapeError(f"X {X.shape} and Y {Y.shape} must be equal-shape matrices")
    if X.shape[1] < 1:
        raise ShapeError("need at least one column pair")
    return _polar(X @ Y.T)


def barycentric_procrustes(X, Y, coupling: Coupling | np.ndarray) -> OrthogonalMap:
    """Orthogonal ``P`` minimizing ``||X G - P Y||_F`` for a coupling ``G``.

    ``X`` (``d x n``) and ``Y`` (``d x m``) must be the truncated matrices
    the coupling was computed on.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    G = np.asarray(getattr(coupling, "values", coupling), dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X {X.shape} and Y {Y.shape} must share the embedding dimension")
    if G.shape != (X.shape[1], Y.shape[1]):
        raise ShapeError(f"coupling {G.shape} does not match ({X.shape[1]}, {Y.shape[1]})")
    if G.shape[0] == G.shape[1]:
        diag = np.diag(G)
        if np.count_nonzero(G - np.diag(diag)) == 0 and diag[0] > 0 and np.all(diag == diag[0]):
            # c * I: the scalar cannot change the polar factor
            return procrustes(X, Y)
    return _polar(X @ G @ Y.T)


def apply_map(P: OrthogonalMap, emb: EmbeddingMatrix) -> EmbeddingMatrix:
    """Map every column of ``emb``: ``y -> P y``."""
    if P.dim != emb.dim:
        raise ShapeError(f"map dimension {P.dim} != embedding dimension {emb.dim}")
    return EmbeddingMatrix(emb.vocab, P.matrix @ emb.vectors)


def save_map(P: OrthogonalMap, path: str | Path) -> tuple[Path, Path]:
    """Write a JSON header and a raw little-endian float64 sidecar.

    ``path`` is a prefix; files ``<path>.json`` and ``<path>.bin`` are created.
    """
    path = Path(path)
    header_path = path.with_name(path.name + ".json")
    payload_path = path.with_name(path.name + ".bin")
    payload = np.ascontiguousarray(P.matrix, dtype="<f8").tobytes(order="C")
    header = {
        "dim": P.dim,
        "direction": P.direction,
        "dtype": "<f8",
        "order": "row-major",
        "payload": payload_path.name,
        "checksum": "sha256:" + hashlib.sha256(payload).hexdigest(),
    }
    payload_path.write_bytes(payload)
    header_path.write_text(json.dumps(header, indent=2) + "\n")
    return header_path, payload_path


def load_map(header_path: str | Path) -> OrthogonalMap:
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
        dim = int(header["dim"])
        payload_path = header_path.with_name(header["payload"])
        expected = header["checksum"]
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{header_path}: bad map header ({exc})") from None
    payload = payload_path.read_bytes()
    actual = "sha256:" + hashlib.sha256(payload).hexdigest()
    if actual != expected:
        raise FormatError(f"{payload_path}: checksum mismatch")
    if len(payload) != 8 * dim * dim:
        raise FormatError(f"{payload_path}: expected {8 * dim * dim} bytes, got {len(payload)}")
    P = np.frombuffer(payload, dtype="<f8").reshape(dim, dim).astype(np.float64)
    return OrthogonalMap(P, direction=header.get("direction", "target-to-source"))


def save_map_text(P: OrthogonalMap, path: str | Path) -> None:
    np.savetxt(path, P.matrix, fmt="%.17g")


def load_map_text(path: str | Path) -> OrthogonalMap:
    try:
        P = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return OrthogonalMap(P)
