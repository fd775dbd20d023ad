"""Readers and writers for word vectors, bilingual dictionaries and weights.

Embeddings use the fastText ``.vec`` text layout: an optional ``<count> <dim>``
header, then one ``<word> <f1> ... <fd>`` row per word, most frequent first.
Vectors are stored column-wise (``d x n``) to match the matrix notation used
by the solvers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateVectorError, EmptyInputError, FormatError, RowError, ShapeError

logger = logging.getLogger(__name__)

__all__ = [
    "EmbeddingMatrix",
    "BilingualLexicon",
    "LoadStats",
    "load_embeddings",
    "save_embeddings",
    "load_lexicon",
    "save_lexicon",
    "identity_lexicon",
    "uniform_weights",
    "load_weights",
    "check_weights",
]


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """An ordered vocabulary together with its ``d x n`` vector matrix."""

    vocab: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vocab = tuple(self.vocab)
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2:
            raise ShapeError(f"vectors must be 2-D (d x n), got ndim={vectors.ndim}")
        if vectors.shape[1] != len(vocab):
            raise ShapeError(
                f"{len(vocab)} words but {vectors.shape[1]} vector columns"
            )
        if len(set(vocab)) != len(vocab):
            raise ValueError("vocabulary contains duplicate words")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vectors contain NaN or Inf")
        vectors.setflags(write=False)
        object.__setattr__(self, "vocab", vocab)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.size

    def index(self) -> dict[str, int]:
        """Map each word to its column."""
        return {w: i for i, w in enumerate(self.vocab)}

    def head(self, k: int) -> "EmbeddingMatrix":
        """The ``k`` most frequent words (a prefix of the vocabulary)."""
        return EmbeddingMatrix(self.vocab[:k], self.vectors[:, :k])

    def unit_normalized(self) -> "EmbeddingMatrix":
        """Copy with every column scaled to unit Euclidean norm."""
        norms = np.linalg.norm(self.vectors, axis=0)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise DegenerateVectorError(self.vocab[zero[0]])
        return EmbeddingMatrix(self.vocab, self.vectors / norms)


@dataclass
class LoadStats:
    rows_read: int = 0
    duplicates: int = 0
    bad_rows: int = 0
    decode_errors: int = 0

    @property
    def warnings(self) -> int:
        return self.duplicates + self.bad_rows + self.decode_errors


def _parse_header(line: str, lineno: int) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise FormatError(f"expected header '<count> <dim>', got {line.strip()!r}", lineno)
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError(f"non-integer header {line.strip()!r}", lineno) from None
    if count < 0 or dim <= 0:
        raise FormatError(f"invalid header values count={count} dim={dim}", lineno)
    return count, dim


def _parse_row(line: str, dim: int | None, lineno: int) -> tuple[str, list[float]]:
    parts = [p for p in line.rstrip("\r\n").split(" ") if p]
    if len(parts) < 2:
        raise RowError("row has no vector values", lineno)
    word, raw = parts[0], parts[1:]
    if dim is not None and len(raw) != dim:
        raise RowError(f"expected {dim} values for {word!r}, got {len(raw)}", lineno)
    try:
        values = [float(x) for x in raw]
    except ValueError as exc:
        raise RowError(f"unparseable value for {word!r}: {exc}", lineno) from None
    if not all(math.isfinite(v) for v in values):
        raise RowError(f"non-finite value for {word!r}", lineno)
    return word, values


def load_embeddings(
    path: str | Path,
    max_vocab: int | None = None,
    expect_header: bool = True,
    strict: bool = True,
    return_stats: bool = False,
):
    """Load a fastText-style ``.vec`` text file.

    Parameters
    ----------
    path : str or Path
        Text file in UTF-8.
    max_vocab : int, optional
        Keep only the first ``max_vocab`` usable words (file order is taken
        as frequency order).
    expect_header : bool
        Whether the first line is a ``<count> <dim>`` header. Without a
        header the dimension is inferred from the first row.
    strict : bool
        If True, a malformed row raises :class:`RowError` and an undecodable
        line raises :class:`FormatError`. If False such lines are skipped and
        counted in the returned stats.
    return_stats : bool
        Also return a :class:`LoadStats`.

    Returns
    -------
    emb : EmbeddingMatrix
    stats : LoadStats
        Only if ``return_stats`` is True.
    """
    if max_vocab is not None and max_vocab < 1:
        raise ValueError("max_vocab must be positive")
    stats = LoadStats()
    vocab: list[str] = []
    columns: list[list[float]] = []
    seen: set[str] = set()
    dim = None
    count = None

    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                if strict or (lineno == 1 and expect_header):
                    raise FormatError("invalid UTF-8", lineno) from None
                stats.decode_errors += 1
                continue
            if lineno == 1 and expect_header:
                count, dim = _parse_header(line, lineno)
                continue
            if not line.strip():
                continue
            if count is not None and stats.rows_read >= count:
                logger.warning("%s: rows beyond header count %d ignored", path, count)
                break
            try:
                word, values = _parse_row(line, dim, lineno)
            except RowError:
                if strict:
                    raise
                stats.bad_rows += 1
                continue
            stats.rows_read += 1
            if dim is None:
                dim = len(values)
            if word in seen:
                stats.duplicates += 1
                continue
            seen.add(word)
            vocab.append(word)
            columns.append(values)
            if max_vocab is not None and len(vocab) >= max_vocab:
                break

    if not vocab:
        raise EmptyInputError(f"{path}: no usable embedding rows")
    if stats.warnings:
        logger.warning(
            "%s: skipped %d duplicate, %d malformed and %d undecodable rows",
            path, stats.duplicates, stats.bad_rows, stats.decode_errors,
        )
    emb = EmbeddingMatrix(tuple(vocab), np.array(columns, dtype=np.float64).T)
    if return_stats:
        return emb, stats
    return emb


def save_embeddings(emb: EmbeddingMatrix, path: str | Path, header: bool = True) -> None:
    """Write ``emb`` in ``.vec`` format with 17 significant digits (lossless)."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{emb.size} {emb.dim}\n")
        for word, col in zip(emb.vocab, emb.vectors.T):
            fh.write(word + " " + " ".join(format(v, ".17g") for v in col) + "\n")


@dataclass(frozen=True)
class BilingualLexicon:
    """Source word to the set of its admissible translations.

    Iteration follows the order in which source words first appeared.
    """

    pairs: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        for src, tgts in self.pairs.items():
            if not tgts:
                raise ValueError(f"source word {src!r} has no translations")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "BilingualLexicon":
        grouped: dict[str, set[str]] = {}
        for src, tgt in pairs:
            grouped.setdefault(src, set()).add(tgt)
        return cls({s: frozenset(t) for s, t in grouped.items()})

    @property
    def source_order(self) -> list[str]:
        return list(self.pairs)

    @property
    def n_pairs(self) -> int:
        return sum(len(t) for t in self.pairs.values())

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, word):
        return word in self.pairs

    def __getitem__(self, word) -> frozenset[str]:
        return self.pairs[word]

    def __iter__(self):
        return iter(self.pairs)


def load_lexicon(path: str | Path) -> BilingualLexicon:
    """Read a dictionary of whitespace separated ``<src> <tgt>`` pairs."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 2:
                raise FormatError(f"expected 2 tokens, got {len(tokens)}", lineno)
            pairs.append((tokens[0], tokens[1]))
    if not pairs:
        raise EmptyInputError(f"{path}: empty lexicon")
    return BilingualLexicon.from_pairs(pairs)


def save_lexicon(lexicon: BilingualLexicon, path: str | Path) -> None:
    """Write one ``src tgt`` line per pair; sources in order, targets sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for src, tgts in lexicon.pairs.items():
            for tgt in sorted(tgts):
                fh.write(f"{src} {tgt}\n")


def identity_lexicon(words: Iterable[str]) -> BilingualLexicon:
    """Every word translates to itself."""
    return BilingualLexicon.from_pairs((w, w) for w in words)


def uniform_weights(n: int) -> np.ndarray:
    if n < 1:
        raise EmptyInputError("cannot build weights for an empty vocabulary")
    return np.full(n, 1.0 / n)


def check_weights(weights, n: int | None = None) -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ShapeError("weights must be a non-empty 1-D vector")
    if n is not None and w.size != n:
        raise ShapeError(f"expected {n} weights, got {w.size}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights sum to {w.sum()!r}, not 1")
    return w


def load_weights(path: str | Path, vocab: Sequence[str]) -> np.ndarray:
    """Read ``<word> <weight>`` lines and align them to ``vocab``.

    Words missing from the file get weight 0; words not in ``vocab`` are
    ignored. The result is renormalized to sum to one.
    """
    index = {w: i for i, w in enumerate(vocab)}
    w = np.zeros(len(vocab))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 2:
                raise FormatError(f"expected '<word> <weight>', got {line.strip()!r}", lineno)
            try:
                value = float(tokens[1])
            except ValueError:
                raise FormatError(f"bad weight {tokens[1]!r}", lineno) from None
            if not math.isfinite(value) or value < 0:
                raise FormatError(f"weight must be finite and >= 0, got {value}", lineno)
            if tokens[0] in index:
                w[index[tokens[0]]] = value
    total = w.sum()
    if total <= 0:
        raise EmptyInputError(f"{path}: no positive weight for any vocabulary word")
    missing = int(np.count_nonzero(w == 0))
    if missing:
        logger.warning("%s: %d vocabulary words have zero weight", path, missing)
    w /= total
    # exact renormalization can still leave a 1-ulp drift
    w[np.argmax(w)] += 1.0 - w.sum()
    return w
