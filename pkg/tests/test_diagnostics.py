import math

import numpy as np
import pytest

import oracles
from helpers import quadratic_problem
from fedacs.algorithms import AlgoConfig, initial_state
from fedacs.attention import similarity_matrix
from fedacs.diagnostics import (
    StationarityTrace,
    assumption_probe,
    attention_snapshot,
    finite_difference_grad,
    loglog_fit,
    objective_grad_norm,
    objective_gradient,
    personalized_objective,
    rate_fit,
    run_stationarity,
)
from fedacs.errors import ContractViolation, OracleError
from fedacs.models import ModelSpec, forward_loss, gradient
from fedacs.schedules import Schedule, make_schedule
from fedacs.testbeds import make_quadratic_testbed


class TestFiniteDifference:
    def test_half_square_norm(self, rng):
        w = rng.normal(size=6)
        np.testing.assert_allclose(finite_difference_grad(lambda v: 0.5 * v @ v, w), w, atol=1e-9)

    def test_constant(self):
        np.testing.assert_array_equal(finite_difference_grad(lambda v: 3.0, np.ones(4)), np.zeros(4))

    def test_does_not_mutate_input(self):
        w = np.array([1.0, 2.0])
        finite_difference_grad(lambda v: v.sum(), w)
        np.testing.assert_array_equal(w, [1.0, 2.0])

    def test_non_finite(self):
        with pytest.raises(OracleError):
            finite_difference_grad(lambda v: math.inf, np.zeros(2))

    def test_bad_step(self):
        with pytest.raises(ContractViolation):
            finite_difference_grad(lambda v: 0.0, np.zeros(2), h=0.0)


class TestObjective:
    def test_lambda_zero_is_sum_of_losses(self, small_shards, rng):
        spec = ModelSpec("linear", 6, 4)
        W = rng.normal(size=(6, spec.param_dim))
        expected = sum(forward_loss(spec, W[i], s.train) for i, s in enumerate(small_shards))
        value = personalized_objective(W, small_shards, spec, 0.0, similarity_matrix(W))
        assert value == pytest.approx(expected, rel=1e-14)

    def test_identical_models_have_no_penalty(self, small_shards):
        spec = ModelSpec("linear", 6, 4)
        W = np.tile(np.linspace(-1, 1, spec.param_dim), (6, 1))
        F = sum(forward_loss(spec, W[i], s.train) for i, s in enumerate(small_shards))
        assert personalized_objective(W, small_shards, spec, 5.0, similarity_matrix(W)) == pytest.approx(F)

    def test_quadratic_hand_value(self):
        c = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        spec, shards = quadratic_problem(c)
        W = np.array([[2.0, 0.0], [0.0, 3.0], [1.0, 2.0]])
        S = similarity_matrix(W)
        F = 0.5 * (1.0 + 4.0 + 1.0)
        R = oracles.regularizer_loops(W.tolist(), S.tolist())
        assert personalized_objective(W, shards, spec, 0.7, S) == pytest.approx(F + 0.7 * R, rel=1e-14)


class TestGradNorm:
    def test_separable_minimizer(self):
        c = np.array([[1.0, 2.0], [-1.0, 0.5]])
        spec, shards = quadratic_problem(c)
        assert objective_grad_norm(c, shards, spec, 0.0, similarity_matrix(c)) < 1e-8

    def test_single_client(self):
        spec, shards = quadratic_problem([[1.0, -1.0, 2.0]])
        w = np.array([[0.0, 2.0, 2.0]])
        norm = objective_grad_norm(w, shards, spec, 3.7, similarity_matrix(w))
        assert norm == pytest.approx(np.linalg.norm(w[0] - [1.0, -1.0, 2.0]), rel=1e-14)

    @pytest.mark.parametrize("kind", ["linear", "mlp", "quadratic"])
    def test_exact_mode_matches_finite_differences(self, kind, small_shards, rng):
        spec = {
            "linear": ModelSpec("linear", 6, 4),
            "mlp": ModelSpec("mlp", 6, 4, hidden_dim=3, activation="tanh"),
            "quadratic": ModelSpec("quadratic", 6),
        }[kind]
        for _ in range(5):
            W = rng.normal(size=(6, spec.param_dim))
            S = similarity_matrix(W)  # frozen in both paths
            lam = float(rng.uniform(0.1, 2.0))
            G = objective_gradient(W, small_shards, spec, lam, S, mode="exact")
            fd = finite_difference_grad(lambda M: personalized_objective(M, small_shards, spec, lam, S), W)
            assert np.linalg.norm(G - fd) / np.linalg.norm(fd) < 1e-4

    def test_stated_mode_is_the_closed_form(self, small_shards, rng):
        spec = ModelSpec("linear", 6, 4)
        W = rng.normal(size=(6, spec.param_dim))
        A = attention_snapshot(W, 0.5)
        G = objective_gradient(W, small_shards, spec, 2.0, A)
        for i, s in enumerate(small_shards):
            expected = gradient(spec, W[i], s.train) + 2.0 * (W[i] - A[i] @ W)
            np.testing.assert_allclose(G[i], expected, atol=1e-13)

    def test_unknown_mode(self, small_shards):
        with pytest.raises(ContractViolation):
            objective_gradient(np.ones((6, 20)), small_shards, ModelSpec("linear", 6, 4), 1.0, np.eye(6), mode="x")


class TestRateFit:
    def test_exact_power_law(self):
        ks = [100, 400, 1600, 6400]
        fit = loglog_fit(ks, [3.0 / math.sqrt(k) for k in ks])
        assert fit.slope == pytest.approx(-0.5, abs=1e-10)
        assert fit.residual < 1e-10

    def test_constant_trace(self):
        trace = StationarityTrace()
        for k in range(11):
            trace.record(k, 1.0, 2.0)
        assert rate_fit(trace, [2, 5, 10]).slope == pytest.approx(0.0, abs=1e-12)

    def test_needs_two_checkpoints(self):
        trace = StationarityTrace()
        trace.record(0, 1.0, 1.0)
        with pytest.raises(ContractViolation):
            rate_fit(trace, [0])

    def test_trace_too_short(self):
        trace = StationarityTrace()
        for k in range(3):
            trace.record(k, 1.0, 1.0)
        with pytest.raises(ContractViolation):
            rate_fit(trace, [1, 5])

    def test_running_min_non_increasing(self):
        trace = StationarityTrace()
        for k, g in enumerate([5.0, 3.0, 4.0, 1.0, 2.0]):
            trace.record(k, 0.0, g)
        assert trace.running_min == [5.0, 3.0, 3.0, 1.0, 1.0]

    def test_non_finite_record(self):
        with pytest.raises(OracleError):
            StationarityTrace().record(0, float("nan"), 1.0)


class TestSchedules:
    def test_constant_theorem(self):
        a, b = make_schedule("constant_theorem", 100, 1.0)
        np.testing.assert_allclose(a, 0.1)
        np.testing.assert_allclose(b, 0.1)

    def test_single_round(self):
        a, b = make_schedule("constant_theorem", 1, 2.5)
        assert a[0] == 2.5 and b[0] == 1.0

    def test_diminishing(self):
        a, b = make_schedule("diminishing", 1000, 2.0, a=1.0, b=0.0)
        np.testing.assert_allclose(a, 1.0 / np.arange(1, 1001))
        np.testing.assert_allclose(b, a / 2.0)
        # partial sums of 1/k keep growing while those of 1/k^2 stay below pi^2/6
        assert a.sum() > 7.0 and (a ** 2).sum() < math.pi ** 2 / 6

    def test_fixed(self):
        a, b = make_schedule("fixed", 3, 1.0, alpha=0.5, beta=0.2)
        assert a.tolist() == [0.5] * 3 and b.tolist() == [0.2] * 3

    @pytest.mark.parametrize("kw", [dict(kind="constant_theorem", K=0, lam=1.0),
                                    dict(kind="constant_theorem", K=5, lam=0.0),
                                    dict(kind="diminishing", K=5, lam=1.0, a=0.0),
                                    dict(kind="diminishing", K=5, lam=1.0, b=-1.0),
                                    dict(kind="fixed", K=5, lam=1.0, alpha=0.1),
                                    dict(kind="nope", K=5, lam=1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ContractViolation):
            make_schedule(**kw)


class TestAssumptionProbe:
    def test_stationary_trajectory(self):
        tb = make_quadratic_testbed(n_clients=4, dim=3, seed=1)
        W = np.tile(tb.w0, (4, 1))
        probe = assumption_probe([W, W, W], tb.shards, tb.spec, 1.0)
        assert probe.lipschitz_loss == () and probe.lipschitz_reg == ()
        g0 = np.linalg.norm(W - tb.centers)
        assert probe.max_loss_grad_norm == pytest.approx(g0)

    def test_quadratic_lipschitz_is_one(self):
        tb = make_quadratic_testbed(n_clients=5, dim=4, seed=2)
        cfg = AlgoConfig(rounds=6, alpha=Schedule("fixed", 0.5), beta=Schedule("fixed", 0.2), batch_size=1)
        _, _, hist = run_stationarity(tb.spec, tb.shards, cfg, tb.w0, keep_models=True)
        probe = assumption_probe(hist, tb.shards, tb.spec, 1.0)
        assert len(probe.lipschitz_loss) == 6
        np.testing.assert_allclose(probe.lipschitz_loss, 1.0, atol=1e-9)
        d = probe.as_dict()
        assert all(np.isfinite(v) and v >= 0 for v in d.values())

    def test_needs_two_rounds(self):
        tb = make_quadratic_testbed(n_clients=2, dim=2)
        with pytest.raises(ContractViolation):
            assumption_probe([np.ones((2, 2))], tb.shards, tb.spec, 1.0)


class TestQuadraticTestbed:
    def test_structure(self):
        tb = make_quadratic_testbed(n_clients=10, dim=20, n_clusters=2, seed=0)
        assert tb.centers.shape == (10, 20) and tb.w0.shape == (20,)
        assert list(tb.groups) == [0, 1] * 5
        for shard, c in zip(tb.shards, tb.centers):
            np.testing.assert_array_equal(shard.train.features[0], c)

    def test_stationarity_trace_from_round_zero(self):
        tb = make_quadratic_testbed(n_clients=4, dim=3)
        cfg = AlgoConfig(rounds=5, alpha=Schedule("constant_theorem"), beta=Schedule("constant_theorem"),
                         batch_size=1)
        trace, state, hist = run_stationarity(tb.spec, tb.shards, cfg, tb.w0)
        assert trace.rounds == list(range(6)) and state.round == 5 and hist is None
        W0 = initial_state(4, tb.w0).models
        assert trace.grad_norm_sq[0] == pytest.approx(np.sum((W0 - tb.centers) ** 2))
