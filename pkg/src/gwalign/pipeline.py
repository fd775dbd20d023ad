"""End-to-end alignment: GW on the frequent words, then an orthogonal map for the rest."""
from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, GWAlignError, StageError
from .gromov import GwConfig, GwResult, gw_distance, gw_solve
from .ingestion import BilingualLexicon, EmbeddingMatrix, uniform_weights
from .mapping import DEFAULT_GW_VOCAB, OrthogonalMap, apply_map, barycentric_procrustes
from .retrieval import (
    Evaluation,
    Method,
    TranslationTable,
    csls_translate,
    evaluate,
    nn_translate,
    translate_from_coupling,
)
from .similarity import Normalization, SimilarityMatrix, cosine_similarity_matrix, normalize as normalize_sim

logger = logging.getLogger(__name__)

__all__ = [
    "PRESETS",
    "DEFAULT_DISTANCE_TOP_N",
    "AlignmentRun",
    "gw_window",
    "align",
    "language_distance_matrix",
    "triangle_violations",
]

DEFAULT_DISTANCE_TOP_N = 2000

# normalization per corpus regime
PRESETS = {
    "comparable": {"normalize": None},
    "hard": {"normalize": "mean"},
}


@dataclass(eq=False)
class AlignmentRun:
    config: dict
    gw: GwResult
    src_window: tuple[str, ...]
    tgt_window: tuple[str, ...]
    map: OrthogonalMap | None = None
    tables: dict[Method, TranslationTable] = field(default_factory=dict)
    metrics: dict[tuple[Method, int], Evaluation] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    similarities: tuple[SimilarityMatrix, SimilarityMatrix] | None = None

    def report(self) -> dict:
        metrics: dict[str, dict] = {}
        for (method, k), ev in sorted(self.metrics.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            metrics.setdefault(method.value, {})[str(k)] = ev.to_dict()
        gw = self.gw
        return {
            "config": self.config,
            "gw": {
                "gw_value": gw.gw_value,
                "lambda_used": gw.lambda_used,
                "lambdas_tried": list(gw.lambdas_tried),
                "converged": gw.converged,
                "inner_converged": gw.inner_converged,
                "outer_iterations": gw.n_iter,
                "final_objective": gw.objective_trace[-1],
                "window": [len(self.src_window), len(self.tgt_window)],
            },
            "map": None
            if self.map is None
            else {
                "dim": self.map.dim,
                "orthogonality_error": self.map.orthogonality_error(),
                "degenerate": self.map.degenerate,
            },
            "metrics": metrics,
            "timings": self.timings,
        }


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except GWAlignError as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def gw_window(src: EmbeddingMatrix, tgt: EmbeddingMatrix, gw_vocab: int):
    """Unit-normalized embeddings and their ``gw_vocab`` most frequent words.

    Returns ``(src_unit, tgt_unit, src_head, tgt_head)``; the heads are the
    matrices the coupling is computed on.
    """
    k_src, k_tgt = min(gw_vocab, src.size), min(gw_vocab, tgt.size)
    if k_src < gw_vocab or k_tgt < gw_vocab:
        logger.warning(
            "gw_vocab=%d exceeds a vocabulary size; using windows of %d and %d words",
            gw_vocab, k_src, k_tgt,
        )
    src_u, tgt_u = src.unit_normalized(), tgt.unit_normalized()
    return src_u, tgt_u, src_u.head(k_src), tgt_u.head(k_tgt)


def align(
    src: EmbeddingMatrix,
    tgt: EmbeddingMatrix,
    gw_vocab: int = DEFAULT_GW_VOCAB,
    normalize: Normalization | str | None = None,
    cfg: GwConfig | None = None,
    fit_map: bool = True,
    lexicon: BilingualLexicon | None = None,
    ks: Sequence[int] = (1,),
    csls_neighborhood: int = 10,
    src_weights=None,
    tgt_weights=None,
    skip_empty: bool = False,
) -> AlignmentRun:
    """Align ``tgt`` to ``src`` without supervision.

    The ``gw_vocab`` most frequent words of each side are matched by entropic
    Gromov-Wasserstein; the resulting coupling gives translations directly.
    With ``fit_map`` an orthogonal map is fitted to the coupling's
    barycentric pairing and used to translate the full vocabularies by
    nearest-neighbour and CSLS retrieval. If ``lexicon`` is given every table
    is scored at each ``k`` in ``ks``.

    Any component error is re-raised as :class:`StageError` naming the stage.
    """
    cfg = cfg or GwConfig()
    if gw_vocab < 1:
        raise ValueError("gw_vocab must be positive")
    norm = Normalization(normalize) if normalize else Normalization.NONE
    max_k = max(ks)
    timings: dict[str, float] = {}

    with _stage("truncate", timings):
        src_u, tgt_u, Xk, Yk = gw_window(src, tgt, gw_vocab)
    with _stage("similarity", timings):
        p = _window_weights(src_weights, Xk.size)
        q = _window_weights(tgt_weights, Yk.size)
        Cs = cosine_similarity_matrix(Xk, p)
        Ct = cosine_similarity_matrix(Yk, q)
    if norm is not Normalization.NONE:
        with _stage("normalize", timings):
            Cs, Ct = normalize_sim(Cs, norm), normalize_sim(Ct, norm)
    with _stage("gw", timings):
        result = gw_solve(Cs, Ct, cfg)

    config = {
        "gw_vocab": gw_vocab,
        "window": [Xk.size, Yk.size],
        "normalize": norm.value,
        "fit_map": fit_map,
        "ks": list(ks),
        "csls_neighborhood": csls_neighborhood,
        "skip_empty": skip_empty,
        "weights": "uniform" if src_weights is None and tgt_weights is None else "custom",
        "gw": _config_dict(cfg),
    }
    run = AlignmentRun(
        config=config,
        gw=result,
        src_window=Xk.vocab,
        tgt_window=Yk.vocab,
        timings=timings,
        similarities=(Cs, Ct),
    )

    with _stage("translate", timings):
        run.tables[Method.COUPLING_ARGMAX] = translate_from_coupling(
            result.coupling, Xk.vocab, Yk.vocab, max_k
        )
    if fit_map:
        with _stage("map", timings):
            run.map = barycentric_procrustes(Xk.vectors, Yk.vectors, result.coupling)
            mapped = apply_map(run.map, tgt_u)
        with _stage("retrieval", timings):
            run.tables[Method.NN] = nn_translate(src_u, mapped, max_k)
            run.tables[Method.CSLS] = csls_translate(src_u, mapped, max_k, csls_neighborhood)
    if lexicon is not None:
        with _stage("evaluate", timings):
            for method, table in run.tables.items():
                for k in ks:
                    run.metrics[(method, k)] = evaluate(table, lexicon, k, skip_empty)
    return run


def _window_weights(weights, k: int) -> np.ndarray:
    """Full-vocabulary weights cut to the first ``k`` words and renormalized."""
    if weights is None:
        return uniform_weights(k)
    w = np.asarray(weights, dtype=np.float64)[:k]
    total = w.sum()
    if not total > 0:
        raise EmptyInputError(f"weights of the {k}-word window sum to zero")
    return w / total


def _config_dict(cfg: GwConfig) -> dict:
    d = asdict(cfg)
    d["sinkhorn"].pop("lam", None)  # overridden per attempt by the GW lambdas
    return d


def _prepare(emb: EmbeddingMatrix, top_n: int, norm: Normalization) -> SimilarityMatrix:
    head = emb.head(min(top_n, emb.size))
    sim = cosine_similarity_matrix(head.unit_normalized())
    if norm is not Normalization.NONE:
        sim = normalize_sim(sim, norm)
    return sim


def language_distance_matrix(
    embs: Sequence[EmbeddingMatrix],
    top_n: int = DEFAULT_DISTANCE_TOP_N,
    cfg: GwConfig | None = None,
    normalize: Normalization | str | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Pairwise entropic GW values between languages on their ``top_n`` words.

    Every ordered pair is solved (both orientations) so asymmetry of the
    estimate stays visible; the diagonal holds the self-distances.
    """
    if len(embs) < 2:
        raise ValueError("need at least two embedding sets")
    cfg = cfg or GwConfig()
    norm = Normalization(normalize) if normalize else Normalization.NONE
    sims = [_prepare(e, top_n, norm) for e in embs]
    n = len(sims)
    pairs = list(itertools.product(range(n), repeat=2))
    D = np.zeros((n, n))

    def solve(ij):
        i, j = ij
        return ij, gw_distance(sims[i], sims[j], cfg)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for (i, j), value in pool.map(solve, pairs):
            D[i, j] = value
    for i, j, k, gap in triangle_violations(D):
        logger.info("triangle inequality violated for (%d, %d, %d) by %.3g", i, j, k, gap)
    return D


def triangle_violations(D: np.ndarray, tol: float = 0.0) -> list[tuple[int, int, int, float]]:
    """Triples where ``sqrt(D)`` breaks ``d(i,k) <= d(i,j) + d(j,k)``.

    The entropic estimate is not guaranteed to be a metric; this is a
    diagnostic only.
    """
    S = np.sqrt(np.maximum(0.5 * (D + D.T), 0.0))
    n = S.shape[0]
    out = []
    for i, j, k in itertools.permutations(range(n), 3):
        gap = S[i, k] - (S[i, j] + S[j, k])
        if gap > tol and not math.isclose(gap, 0.0, abs_tol=1e-15):
            out.append((i, j, k, float(gap)))
    return out
