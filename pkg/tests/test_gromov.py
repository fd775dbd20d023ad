import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gwalign import (
    Coupling,
    GwConfig,
    NumericalUnderflowError,
    ShapeError,
    SimilarityMatrix,
    cosine_similarity_matrix,
    gw_distance,
    gw_objective,
    gw_pseudo_cost,
    gw_solve,
)
from gwalign.gromov import gw_constant_term, gw_objective_naive, write_trace_csv

import toydata

# a plain-kernel setting that does not underflow on small random problems
SMALL = GwConfig.with_lambda(1e-3)


def loop_objective(A, B, G):
    n, m = G.shape
    total = 0.0
    for i in range(n):
        for j in range(m):
            for k in range(n):
                for l in range(m):
                    total += 0.5 * (A[i, k] - B[j, l]) ** 2 * G[i, j] * G[k, l]
    return total


def loop_pseudo_cost(A, B, G, p, q):
    n, m = G.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s1 = sum(A[i, k] ** 2 * p[k] for k in range(n))
            s2 = sum(B[j, l] ** 2 * q[l] for l in range(m))
            s3 = sum(A[i, k] * G[k, l] * B[j, l] for k in range(n) for l in range(m))
            out[i, j] = s1 + s2 - 2 * s3
    return out


def random_instance(rng, n, m):
    A = rng.standard_normal((n, n)); A = A + A.T
    B = rng.standard_normal((m, m)); B = B + B.T
    p = rng.random(n) + 0.05; p /= p.sum()
    q = rng.random(m) + 0.05; q /= q.sum()
    G = np.outer(p, q) * rng.random((n, m)) * 2
    return SimilarityMatrix(A, p), SimilarityMatrix(B, q), Coupling(G, p, q)


def test_perfect_match_is_zero(rng):
    Cs = toydata.random_cosine_problem(6, 6, 4, seed=1)[0]
    G = Coupling.product(Cs.weights, Cs.weights)
    diag = Coupling(np.eye(6) / 6, Cs.weights, Cs.weights)
    assert gw_objective(Cs, Cs, diag) <= 1e-15
    assert gw_objective(Cs, Cs, G) > 0


def test_hand_enumerated_example():
    Cs = SimilarityMatrix.from_array(np.eye(2))
    Ct = SimilarityMatrix.from_array(np.ones((2, 2)))
    G = Coupling(np.full((2, 2), 0.25), [0.5, 0.5], [0.5, 0.5])
    # only (i, k) in {(0, 1), (1, 0)} has Cs[i, k] = 0; each pairs with 4 (j, l)
    expected = 2 * 4 * 0.5 * (1 / 16)
    assert expected == loop_objective(Cs.values, Ct.values, G.values) == 0.25
    assert abs(gw_objective(Cs, Ct, G) - expected) <= 1e-15


def test_matches_loop_oracle_5x5(rng):
    Cs, Ct, G = random_instance(rng, 5, 5)
    assert abs(gw_objective(Cs, Ct, G) - loop_objective(Cs.values, Ct.values, G.values)) <= 1e-10


@settings(max_examples=120, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
def test_factored_equals_tensor(n, m, seed):
    Cs, Ct, G = random_instance(np.random.default_rng(seed), n, m)
    assert abs(gw_objective(Cs, Ct, G) - gw_objective_naive(Cs, Ct, G)) <= 1e-10


def test_pseudo_cost_one_point():
    one = SimilarityMatrix.from_array([[1.0]])
    zero = SimilarityMatrix.from_array([[0.0]])
    G = Coupling([[1.0]], [1.0], [1.0])
    np.testing.assert_array_equal(gw_pseudo_cost(one, one, G), [[0.0]])
    np.testing.assert_array_equal(gw_pseudo_cost(one, zero, G), [[1.0]])


def test_pseudo_cost_triple_loop(rng):
    Cs, Ct, G = random_instance(rng, 4, 3)
    oracle = loop_pseudo_cost(Cs.values, Ct.values, G.values, Cs.weights, Ct.weights)
    assert np.abs(gw_pseudo_cost(Cs, Ct, G) - oracle).max() <= 1e-10


def test_pseudo_cost_is_gradient_direction(rng):
    """<Chat(G), G> = 2 E(G) for couplings with exact marginals."""
    Cs, Ct, _ = random_instance(rng, 5, 4)
    G = Coupling.product(Cs.weights, Ct.weights)
    lhs = np.sum(gw_pseudo_cost(Cs, Ct, G) * G.values)
    assert abs(lhs - 2 * gw_objective(Cs, Ct, G)) <= 1e-12


def test_shape_errors(rng):
    Cs, Ct, _ = random_instance(rng, 3, 4)
    bad = Coupling(np.full((4, 3), 1 / 12), np.full(4, 0.25), np.full(3, 1 / 3))
    with pytest.raises(ShapeError):
        gw_objective(Cs, Ct, bad)
    with pytest.raises(ShapeError):
        gw_pseudo_cost(Cs, Ct, bad)
    good = Coupling.product(Cs.weights, Ct.weights)
    with pytest.raises(ShapeError):
        gw_pseudo_cost(Cs, Ct, good, const=np.zeros((2, 2)))


def test_constant_term_cached_value(rng):
    Cs, Ct, G = random_instance(rng, 4, 5)
    const = gw_constant_term(Cs, Ct)
    np.testing.assert_array_equal(gw_pseudo_cost(Cs, Ct, G, const), gw_pseudo_cost(Cs, Ct, G))


def unit_vectors(n, d, seed):
    X = np.random.default_rng(seed).standard_normal((d, n))
    return X / np.linalg.norm(X, axis=0)


def is_identity(result):
    n = result.coupling.shape[0]
    return bool(np.all(np.argmax(result.coupling.values, axis=1) == np.arange(n)))


def test_self_alignment_ten_points():
    from gwalign import EmbeddingMatrix

    X = unit_vectors(10, 10, seed=3)
    Cs = cosine_similarity_matrix(EmbeddingMatrix(toydata.words(10), X))
    r = gw_solve(Cs, Cs, SMALL)
    assert is_identity(r) and r.gw_value <= 1e-6
    Q = toydata.random_orthogonal(10, 4)
    Ct = cosine_similarity_matrix(EmbeddingMatrix(toydata.words(10), Q @ X))
    assert np.abs(Ct.values - Cs.values).max() <= 1e-12
    r2 = gw_solve(Cs, Ct, SMALL)
    assert is_identity(r2) and r2.gw_value <= 1e-6


def test_two_point_swap():
    # the self-similarities differ, so only the swap is an isometry
    A = np.array([[1.0, 0.2], [0.2, 0.5]])
    Cs = SimilarityMatrix.from_array(A)
    Ct = SimilarityMatrix.from_array(A[::-1, ::-1])
    w = np.full(2, 0.5)
    swap = Coupling(np.fliplr(np.eye(2)) / 2, w, w)
    ident = Coupling(np.eye(2) / 2, w, w)
    assert gw_objective(Cs, Ct, swap) < gw_objective(Cs, Ct, ident)
    r = gw_solve(Cs, Ct, GwConfig.with_lambda(1e-2))
    assert list(np.argmax(r.coupling.values, axis=1)) == [1, 0]


def test_symmetric_two_point_space_is_ambiguous():
    """With equal self-similarities both matchings cost zero; p q^T is stationary."""
    A = np.array([[1.0, 0.2], [0.2, 1.0]])
    Cs = SimilarityMatrix.from_array(A)
    w = np.full(2, 0.5)
    for G in (np.eye(2) / 2, np.fliplr(np.eye(2)) / 2):
        assert gw_objective(Cs, Cs, Coupling(G, w, w)) == 0.0
    r = gw_solve(Cs, Cs, GwConfig.with_lambda(1e-2))
    np.testing.assert_allclose(r.coupling.values, 0.25, atol=1e-12)


SELF_CASES = [(n, d, seed) for seed, (n, d) in enumerate([(3, 5), (5, 5), (8, 12), (12, 6), (20, 10), (30, 8), (40, 20), (50, 10), (50, 50)])]


@pytest.mark.parametrize("n,d,seed", SELF_CASES)
def test_identity_recovery_and_self_distance(n, d, seed):
    Cs, _ = toydata.random_cosine_problem(n, n, d, seed)
    r = gw_solve(Cs, Cs, SMALL)
    assert is_identity(r)
    assert gw_distance(Cs, Cs, SMALL) <= 1e-6


def test_self_distance_with_default_lambda_at_scale(toy):
    Cs = cosine_similarity_matrix(toy)
    r = gw_solve(Cs, Cs)
    assert r.lambda_used in (5e-5, 1e-4)
    assert is_identity(r) and r.gw_value <= 1e-6


def test_permutation_equivariance():
    Cs, Ct = toydata.random_cosine_problem(15, 15, 8, seed=11)
    perm = np.random.default_rng(5).permutation(15)
    base = gw_solve(Cs, Ct, SMALL).coupling.values
    moved = gw_solve(Cs.permuted(perm), Ct, SMALL).coupling.values
    assert np.abs(moved - base[perm]).max() <= 1e-8


def test_trace_and_marginals():
    Cs, Ct = toydata.random_cosine_problem(30, 30, 10, seed=2)
    r = gw_solve(Cs, Ct, GwConfig.with_lambda(5e-2))
    assert r.n_iter == len(r.objective_trace) == len(r.energy_trace) >= 1
    assert r.gw_value == r.energy_trace[-1] >= 0
    for rec in r.history:
        if rec.sinkhorn_converged:
            assert rec.marginal_violation <= 1e-6
    assert r.coupling.marginal_violation() <= 1e-6


def test_fallback_restart():
    Cs, Ct = toydata.random_cosine_problem(10, 10, 5, seed=0)
    r = gw_solve(Cs, Ct, GwConfig(lambda_primary=1e-9, lambda_fallback=1e-2))
    assert r.lambda_used == 1e-2
    assert r.lambdas_tried == (1e-9, 1e-2)
    clean = gw_solve(Cs, Ct, GwConfig(lambda_primary=1e-2, lambda_fallback=1e-2))
    assert r.objective_trace == clean.objective_trace
    assert clean.lambdas_tried == (1e-2,)


def test_double_underflow_names_both_values():
    Cs, Ct = toydata.random_cosine_problem(10, 10, 5, seed=0)
    with pytest.raises(NumericalUnderflowError) as info:
        gw_solve(Cs, Ct, GwConfig.with_lambda(1e-12))
    assert info.value.attempted == (1e-12, 2e-12)
    assert "1e-12" in str(info.value) and "2e-12" in str(info.value)


def test_config_validation():
    with pytest.raises(ValueError):
        GwConfig(lambda_primary=1e-3, lambda_fallback=1e-4)
    with pytest.raises(ValueError):
        GwConfig(lambda_primary=0)
    with pytest.raises(ValueError):
        GwConfig(max_outer_iters=0)
    assert GwConfig().lambda_primary == 5e-5 and GwConfig().lambda_fallback == 1e-4
    assert GwConfig.with_lambda(3e-4).lambda_fallback == 6e-4


def test_metric_mismatch_rejected():
    Cs, _ = toydata.random_cosine_problem(4, 4, 3, seed=0)
    other = SimilarityMatrix(1 - Cs.values, Cs.weights, metric_tag="cosine_distance")
    with pytest.raises(ValueError):
        gw_solve(Cs, other)


def test_outer_budget_reported():
    Cs, Ct = toydata.random_cosine_problem(20, 20, 10, seed=4)
    r = gw_solve(Cs, Ct, GwConfig.with_lambda(5e-2, max_outer_iters=1, outer_tol=1e-300))
    assert r.n_iter == 1 and not r.converged


def test_trace_csv(tmp_path):
    Cs, Ct = toydata.random_cosine_problem(10, 10, 5, seed=0)
    r = gw_solve(Cs, Ct, GwConfig.with_lambda(5e-2))
    path = tmp_path / "trace.csv"
    write_trace_csv(r, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "objective", "energy", "sinkhorn_iters", "marginal_violation"]
    assert len(rows) == r.n_iter + 1
    assert float(rows[-1][1]) == r.objective_trace[-1]
