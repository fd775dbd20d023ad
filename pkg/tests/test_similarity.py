import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gwalign import (
    DegenerateMatrixError,
    DegenerateVectorError,
    EmbeddingMatrix,
    SimilarityMatrix,
    cosine_similarity_matrix,
    normalize,
)
from gwalign.similarity import Metric, Normalization, similarity_histogram, write_histogram_csv


def emb_of(cols):
    cols = np.asarray(cols, dtype=float).T
    return EmbeddingMatrix(tuple(f"x{i}" for i in range(cols.shape[1])), cols)


def test_orthogonal_unit_vectors():
    C = cosine_similarity_matrix(emb_of([[1, 0], [0, 1]]))
    np.testing.assert_array_equal(C.values, np.eye(2))
    assert C.metric_tag is Metric.COSINE_SIMILARITY
    assert C.normalization_tag is Normalization.NONE


def test_45_degrees():
    C = cosine_similarity_matrix(emb_of([[1, 0], [1 / math.sqrt(2), 1 / math.sqrt(2)]]))
    assert abs(C.values[0, 1] - 0.70710678) < 1e-8


def test_matches_double_loop(rng):
    X = rng.standard_normal((5, 5))
    C = cosine_similarity_matrix(EmbeddingMatrix(tuple("abcde"), X)).values
    for i in range(5):
        for j in range(5):
            dot = sum(X[t, i] * X[t, j] for t in range(5))
            ni = math.sqrt(sum(X[t, i] ** 2 for t in range(5)))
            nj = math.sqrt(sum(X[t, j] ** 2 for t in range(5)))
            assert abs(C[i, j] - dot / (ni * nj)) <= 1e-12


def test_zero_vector_names_word():
    with pytest.raises(DegenerateVectorError) as info:
        cosine_similarity_matrix(EmbeddingMatrix(("ok", "zero"), np.array([[1.0, 0.0], [0.0, 0.0]])))
    assert info.value.word == "zero"


def test_distance_tag():
    C = cosine_similarity_matrix(emb_of([[1, 0], [0, 1]]), metric="cosine_distance")
    np.testing.assert_array_equal(C.values, [[0, 1], [1, 0]])
    assert C.metric_tag is Metric.COSINE_DISTANCE


def test_range_and_diagonal(toy):
    C = cosine_similarity_matrix(toy).values
    assert C.min() >= -1 - 1e-9 and C.max() <= 1 + 1e-9
    assert np.abs(np.diag(C) - 1).max() <= 1e-9
    assert np.abs(C - C.T).max() <= 1e-10


def test_rejects_asymmetric_and_nonsquare():
    with pytest.raises(ValueError):
        SimilarityMatrix.from_array([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(ValueError):
        SimilarityMatrix.from_array(np.ones((2, 3)))
    with pytest.raises(ValueError):
        SimilarityMatrix.from_array([[np.inf]])


def test_normalize_mean_example():
    C = SimilarityMatrix.from_array([[2.0, 4.0], [4.0, 2.0]])
    N = normalize(C, "mean")
    np.testing.assert_allclose(N.values, [[2 / 3, 4 / 3], [4 / 3, 2 / 3]], rtol=0, atol=1e-15)
    assert N.normalization_tag is Normalization.MEAN
    np.testing.assert_array_equal(N.weights, C.weights)


@pytest.mark.parametrize("scheme", ["mean", "median", "max"])
def test_normalize_fixed_point(scheme):
    C = SimilarityMatrix.from_array(np.ones((2, 2)))
    np.testing.assert_array_equal(normalize(C, scheme).values, C.values)


def test_normalize_default_is_mean():
    C = SimilarityMatrix.from_array([[2.0, 4.0], [4.0, 2.0]])
    assert normalize(C).normalization_tag is Normalization.MEAN


def test_median_matches_sort_oracle(rng):
    A = rng.standard_normal((6, 6))
    A = A + A.T
    entries = sorted(abs(v) for v in A.ravel())
    med = (entries[17] + entries[18]) / 2
    N = normalize(SimilarityMatrix.from_array(A), "median")
    np.testing.assert_allclose(N.values, A / med, rtol=0, atol=1e-12)


def test_normalize_all_zero():
    with pytest.raises(DegenerateMatrixError):
        normalize(SimilarityMatrix.from_array(np.zeros((3, 3))), "mean")


def test_normalize_none_is_identity():
    C = SimilarityMatrix.from_array(np.eye(2))
    assert normalize(C, "none") is C


sym = arrays(np.float64, (5, 5), elements=st.floats(-10, 10, allow_nan=False)).map(lambda a: a + a.T)


@settings(max_examples=60, deadline=None)
@given(sym, st.sampled_from(["mean", "median", "max"]), st.floats(1e-3, 1e3))
def test_normalize_scale_invariant_and_symmetric(A, scheme, alpha):
    # subnormal entries lose bits when scaled, so alpha * A would not be alpha times C
    tiny = np.finfo(np.float64).tiny
    assume(not any(np.any((M != 0) & (np.abs(M) < tiny)) for M in (A, alpha * A)))
    C = SimilarityMatrix.from_array(A)
    try:
        base = normalize(C, scheme).values
    except DegenerateMatrixError:
        return
    scaled = normalize(SimilarityMatrix.from_array(alpha * A), scheme).values
    # 1e-12 absolute for O(1) outputs; beyond ~4e3 a float64 ulp alone exceeds that
    assert np.all(np.abs(scaled - base) <= 1e-12 * np.maximum(1.0, np.abs(base)))
    assert np.abs(base - base.T).max() <= 1e-15



def test_normalize_tiny_magnitudes():
    # a matrix living entirely at subnormal scale still normalizes exactly
    tiny = SimilarityMatrix.from_array(np.array([[8.0, 2.0], [2.0, 4.0]]) * np.nextafter(0.0, 1.0))
    np.testing.assert_array_equal(normalize(tiny, "max").values, [[1.0, 0.25], [0.25, 0.5]])
    # a median far below the peak has no finite normalized form
    A = np.full((5, 5), 1e-323)
    A[0, 0] = 2.0
    with pytest.raises(DegenerateMatrixError):
        normalize(SimilarityMatrix.from_array(A), "median")

@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (4, 6), elements=st.floats(-5, 5, allow_nan=False)),
    arrays(np.float64, 6, elements=st.floats(1e-3, 1e3)),
)
def test_cosine_invariant_to_column_rescaling(X, s):
    if np.any(np.linalg.norm(X, axis=0) < 1e-3):
        return
    vocab = tuple(f"v{i}" for i in range(6))
    a = cosine_similarity_matrix(EmbeddingMatrix(vocab, X)).values
    b = cosine_similarity_matrix(EmbeddingMatrix(vocab, X * s)).values
    assert np.abs(a - b).max() <= 1e-10


def test_permuted(rng):
    X = rng.standard_normal((3, 4))
    C = cosine_similarity_matrix(EmbeddingMatrix(tuple("abcd"), X))
    perm = [2, 0, 3, 1]
    Cp = cosine_similarity_matrix(EmbeddingMatrix(tuple("cadb"), X[:, perm]))
    np.testing.assert_allclose(C.permuted(perm).values, Cp.values, atol=1e-15)


def test_histogram(tmp_path, toy):
    C = cosine_similarity_matrix(toy)
    edges, counts = similarity_histogram(C)
    assert len(edges) == 101 and counts.sum() == toy.size * (toy.size - 1)
    path = tmp_path / "h.csv"
    write_histogram_csv(C, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "bin_left,bin_right,count" and len(lines) == 101
