"""Word translation from couplings or aligned spaces, and P@k scoring.

All rankings are by score descending with ties broken by the lower target
index, so tables are deterministic.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateVectorError, EmptyEvaluationError, FormatError, ShapeError
from .ingestion import BilingualLexicon, EmbeddingMatrix
from .sinkhorn import Coupling

logger = logging.getLogger(__name__)

__all__ = [
    "Method",
    "TranslationTable",
    "Evaluation",
    "translate_from_coupling",
    "nn_translate",
    "csls_translate",
    "precision_at_k",
    "evaluate",
    "write_table_tsv",
    "read_table_tsv",
]

_BATCH = 1024


class Method(str, Enum):
    COUPLING_ARGMAX = "coupling_argmax"
    NN = "nn"
    CSLS = "csls"


@dataclass(frozen=True)
class TranslationTable:
    """Ranked candidate translations per source word.

    ``untranslatable`` holds source words that got no candidates at all
    (e.g. a coupling row without mass).
    """

    entries: tuple[tuple[str, tuple[tuple[str, float], ...]], ...]
    method_tag: Method
    untranslatable: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "method_tag", Method(self.method_tag))
        words = [src for src, _ in self.entries]
        if len(set(words)) != len(words):
            raise ValueError("a source word appears more than once")

    def as_dict(self) -> dict[str, list[str]]:
        return {src: [t for t, _ in cands] for src, cands in self.entries}

    @property
    def depth(self) -> int:
        return max((len(c) for _, c in self.entries), default=0)

    def __len__(self):
        return len(self.entries)


def _topk(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row top-k indices and values with lowest-index tie breaking."""
    n, m = scores.shape
    k = min(k, m)
    if k == m:
        idx = np.argsort(-scores, axis=1, kind="stable")
    else:
        kth = -np.partition(-scores, k - 1, axis=1)[:, k - 1]
        idx = np.empty((n, k), dtype=np.intp)
        for r in range(n):
            cand = np.flatnonzero(scores[r] >= kth[r])
            order = np.argsort(-scores[r, cand], kind="stable")
            idx[r] = cand[order[:k]]
    idx = idx[:, :k]
    return idx, np.take_along_axis(scores, idx, axis=1)


def _table(src_vocab, tgt_vocab, idx, vals, method, skip_rows=()):
    skip = set(skip_rows)
    entries = []
    for r, word in enumerate(src_vocab):
        if r in skip:
            entries.append((word, ()))
        else:
            entries.append((word, tuple((tgt_vocab[j], float(v)) for j, v in zip(idx[r], vals[r]))))
    untranslatable = frozenset(src_vocab[r] for r in skip)
    return TranslationTable(tuple(entries), method, untranslatable)


def translate_from_coupling(
    coupling: Coupling, src_vocab: Sequence[str], tgt_vocab: Sequence[str], k: int = 1
) -> TranslationTable:
    """Rank targets for each source word by the transported mass."""
    G = coupling.values
    if G.shape != (len(src_vocab), len(tgt_vocab)):
        raise ShapeError(
            f"coupling {G.shape} vs vocabularies ({len(src_vocab)}, {len(tgt_vocab)})"
        )
    idx, vals = _topk(G, k)
    empty = np.flatnonzero(G.max(axis=1) <= 0)
    if empty.size:
        logger.warning("%d source words received no mass from the coupling", empty.size)
    return _table(src_vocab, tgt_vocab, idx, vals, Method.COUPLING_ARGMAX, empty)


def _unit_columns(emb: EmbeddingMatrix) -> np.ndarray:
    norms = np.linalg.norm(emb.vectors, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateVectorError(emb.vocab[zero[0]])
    return emb.vectors / norms


def _check_dims(src: EmbeddingMatrix, tgt: EmbeddingMatrix):
    if src.dim != tgt.dim:
        raise ShapeError(f"source dim {src.dim} != target dim {tgt.dim}")


def nn_translate(src: EmbeddingMatrix, tgt: EmbeddingMatrix, k: int = 1) -> TranslationTable:
    """Top-k targets by cosine similarity (spaces must already be aligned)."""
    _check_dims(src, tgt)
    S, T = _unit_columns(src), _unit_columns(tgt)
    idx_parts, val_parts = [], []
    for start in range(0, src.size, _BATCH):
        sims = S[:, start:start + _BATCH].T @ T
        i, v = _topk(sims, k)
        idx_parts.append(i)
        val_parts.append(v)
    return _table(src.vocab, tgt.vocab, np.vstack(idx_parts), np.vstack(val_parts), Method.NN)


def _mean_topk_similarity(Q: np.ndarray, R: np.ndarray, k: int) -> np.ndarray:
    """For each column of ``Q``, mean cosine to its ``k`` nearest columns of ``R``."""
    out = np.empty(Q.shape[1])
    for start in range(0, Q.shape[1], _BATCH):
        sims = Q[:, start:start + _BATCH].T @ R
        top = np.partition(sims, sims.shape[1] - k, axis=1)[:, -k:]
        out[start:start + _BATCH] = top.mean(axis=1)
    return out


def csls_translate(
    src: EmbeddingMatrix, tgt: EmbeddingMatrix, k: int = 1, neighborhood: int = 10
) -> TranslationTable:
    """Top-k targets by the CSLS score.

    ``csls(x, y) = 2 cos(x, y) - r_T(x) - r_S(y)`` where ``r_T(x)`` is the mean
    cosine of ``x`` to its ``neighborhood`` nearest targets and ``r_S(y)`` the
    mean cosine of ``y`` to its nearest sources. Penalizing targets that are
    close to everything (hubs) improves on plain nearest neighbours.
    """
    _check_dims(src, tgt)
    if neighborhood < 1:
        raise ValueError("neighborhood must be >= 1")
    S, T = _unit_columns(src), _unit_columns(tgt)
    k_t, k_s = neighborhood, neighborhood
    if neighborhood > tgt.size:
        logger.warning("CSLS neighborhood %d clamped to target size %d", neighborhood, tgt.size)
        k_t = tgt.size
    if neighborhood > src.size:
        logger.warning("CSLS neighborhood %d clamped to source size %d", neighborhood, src.size)
        k_s = src.size
    r_src = _mean_topk_similarity(T, S, k_s)  # r_S(y), indexed by target
    r_tgt = _mean_topk_similarity(S, T, k_t)  # r_T(x), indexed by source
    idx_parts, val_parts = [], []
    for start in range(0, src.size, _BATCH):
        stop = min(start + _BATCH, src.size)
        scores = 2.0 * (S[:, start:stop].T @ T) - r_tgt[start:stop, None] - r_src[None, :]
        i, v = _topk(scores, k)
        idx_parts.append(i)
        val_parts.append(v)
    return _table(src.vocab, tgt.vocab, np.vstack(idx_parts), np.vstack(val_parts), Method.CSLS)


@dataclass(frozen=True)
class Evaluation:
    k: int
    evaluable: int
    correct: int
    lexicon_size: int
    skipped_empty: int = 0

    @property
    def p_at_k(self) -> float:
        return self.correct / self.evaluable

    @property
    def coverage(self) -> float:
        return self.evaluable / self.lexicon_size

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "evaluable": self.evaluable,
            "correct": self.correct,
            "p_at_k": self.p_at_k,
            "coverage": self.coverage,
        }


def evaluate(
    table: TranslationTable, lexicon: BilingualLexicon, k: int = 1, skip_empty: bool = False
) -> Evaluation:
    """Count lexicon source words whose top-k candidates contain a valid translation.

    Lexicon words missing from the table's source side are not evaluated.
    Words flagged untranslatable count as wrong unless ``skip_empty``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if table.depth and k > table.depth:
        raise ValueError(f"k={k} exceeds the table's candidate depth {table.depth}")
    candidates = table.as_dict()
    evaluable = correct = skipped = 0
    for src, targets in lexicon.pairs.items():
        if src not in candidates:
            continue
        if skip_empty and src in table.untranslatable:
            skipped += 1
            continue
        evaluable += 1
        if not targets.isdisjoint(candidates[src][:k]):
            correct += 1
    if evaluable == 0:
        raise EmptyEvaluationError(len(lexicon), evaluable)
    return Evaluation(k, evaluable, correct, len(lexicon), skipped)


def precision_at_k(
    table: TranslationTable, lexicon: BilingualLexicon, k: int = 1, skip_empty: bool = False
) -> float:
    return evaluate(table, lexicon, k, skip_empty).p_at_k


def write_table_tsv(table: TranslationTable, path: str | Path) -> None:
    """One line per source word: ``src<TAB>tgt1:score1<TAB>tgt2:score2 ...``."""
    with open(path, "w", encoding="utf-8") as fh:
        for src, cands in table.entries:
            fields = [src] + [f"{t}:{s!r}" for t, s in cands]
            fh.write("\t".join(fields) + "\n")


def read_table_tsv(path: str | Path, method: Method | str = Method.NN) -> TranslationTable:
    entries = []
    empty = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            src, *fields = line.split("\t")
            cands = []
            for f in fields:
                tgt, sep, score = f.rpartition(":")
                if not sep or not tgt:
                    raise FormatError(f"candidate {f!r} is not 'word:score'", lineno)
                try:
                    cands.append((tgt, float(score)))
                except ValueError:
                    raise FormatError(f"bad score in {f!r}", lineno) from None
            if not cands:
                empty.append(src)
            entries.append((src, tuple(cands)))
    try:
        return TranslationTable(tuple(entries), method, frozenset(empty))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
