import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from fedacs.attention import (
    attention_aggregate,
    attention_matrix,
    cosine_similarity,
    quantile_threshold,
    regularizer,
    regularizer_grad,
    regularizer_grad_exact,
    relaxed_intermediates,
    similarity_matrix,
)
from fedacs.errors import ContractViolation, DegenerateModelError

R2 = 1.0 / math.sqrt(2.0)


def _models(rng, n, d=5):
    return rng.normal(size=(n, d))


class TestCosine:
    @pytest.mark.parametrize("a, b, expected", [
        ([3.0, -1.0], [3.0, -1.0], 1.0),
        ([1.0, 0.0], [0.0, 1.0], 0.0),
        ([1.0, 1.0], [1.0, 0.0], R2),
    ])
    def test_values(self, a, b, expected):
        assert cosine_similarity(a, b) == pytest.approx(expected, abs=1e-15)

    def test_zero_norm(self):
        with pytest.raises(DegenerateModelError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            cosine_similarity([1.0], [1.0, 0.0])


class TestSimilarityMatrix:
    def test_hand_vectors(self):
        S = similarity_matrix([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        expected = [[1, 0, R2], [0, 1, R2], [R2, R2, 1]]
        np.testing.assert_allclose(S, expected, atol=1e-15)

    def test_identical_models(self):
        np.testing.assert_allclose(similarity_matrix(np.tile([0.3, -2.0, 1.0], (4, 1))), 1.0, atol=1e-15)

    def test_single_model(self):
        np.testing.assert_array_equal(similarity_matrix([[2.0, 1.0]]), [[1.0]])

    def test_matches_loop_oracle_and_invariants(self, rng):
        W = _models(rng, 7)
        S = similarity_matrix(W)
        for i in range(7):
            for j in range(7):
                assert S[i, j] == pytest.approx(oracles.cosine(W[i], W[j]), abs=1e-14)
        np.testing.assert_array_equal(S, S.T)
        np.testing.assert_array_equal(np.diag(S), 1.0)
        assert np.abs(S).max() <= 1.0

    def test_scale_invariance(self, rng):
        W = _models(rng, 5)
        scaled = W * rng.uniform(0.01, 100.0, size=(5, 1))
        np.testing.assert_allclose(similarity_matrix(scaled), similarity_matrix(W), atol=1e-12)

    def test_degenerate_reports_client_id(self):
        with pytest.raises(DegenerateModelError) as info:
            similarity_matrix([[1.0, 0.0], [0.0, 0.0]], client_ids=[4, 9])
        assert info.value.client_id == 9


class TestQuantile:
    def test_endpoints(self, rng):
        S = similarity_matrix(_models(rng, 4))
        assert quantile_threshold(S, 0.0) == S.min()
        assert quantile_threshold(S, 1.0) == 1.0

    def test_two_client_example(self):
        S = np.array([[1.0, 0.5], [0.5, 1.0]])
        assert quantile_threshold(S, 0.5) == 0.5

    def test_matches_sort_oracle(self, rng):
        for n in (1, 2, 3, 5, 10):
            S = similarity_matrix(_models(rng, n))
            for p in np.linspace(0, 1, 23):
                assert quantile_threshold(S, p) == oracles.sorted_index_quantile(S.tolist(), p)

    def test_float_slack(self):
        # 0.07 * 100 = 7.000000000000001 must still select the 7th entry
        S = np.arange(100, dtype=float).reshape(10, 10)
        assert quantile_threshold(S, 0.07) == 6.0

    @pytest.mark.parametrize("p", [-0.1, 1.1])
    def test_out_of_range(self, p):
        with pytest.raises(ContractViolation):
            quantile_threshold(np.eye(2), p)

    def test_monotone_in_p(self, rng):
        S = similarity_matrix(_models(rng, 6))
        deltas = [quantile_threshold(S, p) for p in np.linspace(0, 1, 41)]
        assert all(b >= a for a, b in zip(deltas, deltas[1:]))


class TestAggregate:
    def test_identical_models(self):
        W = np.tile([1.0, 2.0, -1.0], (3, 1))
        U, _ = attention_aggregate(W, similarity_matrix(W), 0.0)
        np.testing.assert_allclose(U, W, atol=1e-15)

    def test_orthogonal_pair_stays_local(self):
        W = np.array([[1.0, 0.0], [0.0, 1.0]])
        U, att = attention_aggregate(W, similarity_matrix(W), 0.0)
        np.testing.assert_array_equal(U, W)
        np.testing.assert_array_equal(att.weights, np.eye(2))

    def test_three_client_hand_example(self):
        W = np.array([[1.0, 0.0], [2.0, 2.0], [0.0, 1.0]])
        U, att = attention_aggregate(W, similarity_matrix(W), 0.5)
        # frozen from (w1 + w2 / sqrt 2) / (1 + 1 / sqrt 2)
        np.testing.assert_allclose(U[0], [math.sqrt(2.0), 2.0 * math.sqrt(2.0) - 2.0], atol=1e-15)
        ref = oracles.thresholded_average(W.tolist(), similarity_matrix(W).tolist(), 0.5)
        np.testing.assert_allclose(U, ref, atol=1e-15)
        assert att.weights[0, 2] == 0.0 and att.weights[2, 0] == 0.0

    def test_matches_oracle_random(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 8))
            W = _models(rng, n)
            S = similarity_matrix(W)
            delta = float(rng.uniform(-1, 1))
            U, _ = attention_aggregate(W, S, delta)
            np.testing.assert_allclose(U, oracles.thresholded_average(W.tolist(), S.tolist(), delta),
                                       atol=1e-12)

    def test_low_delta_is_full_weighted_average(self, rng):
        W = np.abs(_models(rng, 5))  # all similarities positive
        S = similarity_matrix(W)
        delta = S[~np.eye(5, dtype=bool)].min() - 1e-9
        U, _ = attention_aggregate(W, S, delta)
        full = (S @ W) / S.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(U, full, atol=1e-12)

    @pytest.mark.parametrize("delta", [1.0, 1.5, np.inf])
    def test_delta_at_least_one_is_self_only(self, rng, delta):
        W = np.tile(_models(rng, 1), (4, 1))  # identical models: s_ij = 1 everywhere
        U, att = attention_aggregate(W, similarity_matrix(W), delta)
        np.testing.assert_array_equal(U, W)
        np.testing.assert_array_equal(att.weights, np.eye(4))

    def test_negative_similarity_never_contributes(self):
        W = np.array([[1.0, 0.0], [-1.0, 0.1]])
        weights = attention_matrix(similarity_matrix(W), -np.inf).weights
        np.testing.assert_array_equal(weights, np.eye(2))

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            attention_aggregate(np.ones((2, 3)), np.eye(3), 0.0)


@settings(max_examples=200, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(2, 6)),
           elements=st.floats(-10, 10, allow_nan=False)),
    st.floats(0.0, 1.0),
)
def test_attention_rows_are_convex_weights(W, p):
    if np.any(np.linalg.norm(W, axis=1) < 1e-6):
        W = W + 1.0  # keep norms away from zero
        if np.any(np.linalg.norm(W, axis=1) < 1e-6):
            return
    S = similarity_matrix(W)
    delta = quantile_threshold(S, p)
    A = attention_matrix(S, delta, p).weights
    assert np.all(A >= 0.0)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diag(A) > 0.0)
    off = ~np.eye(len(W), dtype=bool)
    excluded = off & ((S <= delta) | (S <= 0.0))
    assert np.all(A[excluded] == 0.0)


class TestRegularizer:
    def test_identical_models(self):
        W = np.tile([1.0, -3.0], (3, 1))
        assert regularizer(W, similarity_matrix(W)) == 0.0

    def test_two_model_example(self):
        W = np.array([[1.0, 0.0], [1.0, 1.0]])
        assert regularizer(W, similarity_matrix(W)) == pytest.approx(math.sqrt(2.0), abs=1e-14)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        W = _models(rng, 4)
        S = similarity_matrix(W)
        assert regularizer(W, S) == pytest.approx(oracles.regularizer_loops(W.tolist(), S.tolist()), abs=1e-10)

    def test_grad_matrix_identity(self):
        rng = np.random.default_rng(5)
        W = _models(rng, 3)
        S = similarity_matrix(W)
        cols = W.T  # one model per column
        expected = (cols @ (np.eye(3) - S.T)).T
        np.testing.assert_allclose(regularizer_grad(W, S), expected, atol=1e-12)

    def test_grad_zero_for_identical_normalized(self):
        W = np.tile([0.5, 2.0], (3, 1))
        np.testing.assert_allclose(regularizer_grad(W, similarity_matrix(W), normalize_rows=True), 0.0,
                                   atol=1e-15)

    def test_grad_single_client(self):
        W = np.array([[1.0, 2.0]])
        np.testing.assert_array_equal(regularizer_grad(W, similarity_matrix(W)), [[0.0, 0.0]])

    def test_exact_gradient_is_true_derivative(self, rng):
        from fedacs.diagnostics import finite_difference_grad
        W = _models(rng, 4, 3)
        S = similarity_matrix(W)
        fd = finite_difference_grad(lambda M: regularizer(M, S), W)
        np.testing.assert_allclose(regularizer_grad_exact(W, S), fd, rtol=1e-6, atol=1e-7)

    def test_stated_is_quarter_of_exact_for_doubly_stochastic(self):
        # symmetric S with unit row sums: exact = 4 (W - S W)
        S = np.array([[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]])
        W = np.random.default_rng(0).normal(size=(3, 4))
        np.testing.assert_allclose(regularizer_grad_exact(W, S), 4.0 * regularizer_grad(W, S), atol=1e-12)


class TestRelaxedIntermediates:
    def test_alpha_one_equals_aggregate(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 9))
            W = _models(rng, n)
            S = similarity_matrix(W)
            delta = quantile_threshold(S, float(rng.uniform()))
            U, att = attention_aggregate(W, S, delta)
            step = W - 1.0 * regularizer_grad(W, att.weights, normalize_rows=True)
            np.testing.assert_allclose(step, U, atol=1e-12)
            np.testing.assert_array_equal(relaxed_intermediates(W, att, 1.0), U)

    def test_alpha_zero_keeps_models(self, rng):
        W = _models(rng, 4)
        S = similarity_matrix(W)
        att = attention_matrix(S, 0.0)
        np.testing.assert_array_equal(relaxed_intermediates(W, att, 0.0), W)
