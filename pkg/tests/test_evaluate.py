import math
from types import SimpleNamespace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssur.data import Dataset
from ssur.evaluate import (EvaluationError, coefficient_errors, edge_matrix, elpd, evaluate,
                           graph_edge_probability, graph_metrics, mpm_coefficients, mse_mspe,
                           prediction_error, selection_metrics, summarize)
from ssur.graph import DecomposableGraph


def elpd_oracle(ll):
    """Pointwise sums at 50 digits."""
    mpmath.mp.dps = 50
    N = ll.shape[0]
    loo = lppd = pw = mpmath.mpf(0)
    for idx in np.ndindex(ll.shape[1:]):
        col = [mpmath.mpf(float(v)) for v in ll[(slice(None),) + idx]]
        loo += mpmath.log(N) - mpmath.log(mpmath.fsum(mpmath.exp(-v) for v in col))
        lppd += mpmath.log(mpmath.fsum(mpmath.exp(v) for v in col)) - mpmath.log(N)
        mean = mpmath.fsum(col) / N
        pw += mpmath.fsum((v - mean) ** 2 for v in col) / (N - 1)
    return float(loo), float(lppd), float(pw)


class TestMpm:
    def test_included_mean(self):
        g = np.array([1, 1, 0, 1], dtype=float).reshape(4, 1, 1)
        b = np.array([2, 4, 0, 6], dtype=float).reshape(4, 1, 1)
        assert mpm_coefficients(g, b)[0, 0] == 4.0

    def test_below_threshold_is_zero(self):
        g = np.array([1, 1, 0, 0, 0], dtype=float).reshape(5, 1, 1)
        b = np.array([3, 3, 0, 0, 0], dtype=float).reshape(5, 1, 1)
        assert mpm_coefficients(g, b)[0, 0] == 0.0

    def test_exactly_half_excluded(self):
        g = np.array([1, 0], dtype=float).reshape(2, 1, 1)
        assert mpm_coefficients(g, g)[0, 0] == 0.0

    def test_errors(self):
        with pytest.raises(EvaluationError, match="empty"):
            mpm_coefficients(np.zeros((0, 2, 2)), np.zeros((0, 2, 2)))
        with pytest.raises(EvaluationError, match="shape"):
            mpm_coefficients(np.zeros((3, 2, 2)), np.zeros((3, 2, 1)))


class TestPredictionError:
    def test_exact_fit(self, rng):
        X = rng.standard_normal((20, 3))
        B = rng.standard_normal((3, 2))
        d = Dataset(Y=X @ B, X=X)
        assert prediction_error(B, None, d) == pytest.approx(0.0, abs=1e-25)

    def test_zero_coefficients(self, rng):
        Y = rng.standard_normal((20, 2))
        d = Dataset(Y=Y, X=rng.standard_normal((20, 3)))
        assert prediction_error(np.zeros((3, 2)), None, d) == pytest.approx(np.mean(Y ** 2), rel=1e-14)

    def test_random_effects(self, rng):
        X = rng.standard_normal((12, 2))
        Z = np.repeat(np.eye(3), 4, axis=0)
        B, B0 = rng.standard_normal((2, 2)), rng.standard_normal((3, 2))
        d = Dataset(Y=X @ B + Z @ B0, X=X, Z=Z)
        assert prediction_error(B, B0, d) == pytest.approx(0.0, abs=1e-25)
        with pytest.raises(EvaluationError, match="random effects"):
            prediction_error(B, B0[:2], d)

    def test_mse_mspe(self, rng):
        d = Dataset(Y=rng.standard_normal((10, 2)), X=rng.standard_normal((10, 3)))
        mse, mspe = mse_mspe(np.zeros((3, 2)), None, d)
        assert mspe is None and mse > 0
        with pytest.raises(EvaluationError, match="coefficient"):
            prediction_error(np.zeros((2, 2)), None, d)


class TestElpd:
    def test_oracle(self, rng):
        ll = rng.normal(-1.5, 0.7, size=(50, 3, 2))
        e = elpd(ll)
        loo, lppd, pw = elpd_oracle(ll)
        assert e.elpd_loo == pytest.approx(loo, abs=1e-10)
        assert e.lppd == pytest.approx(lppd, abs=1e-10)
        assert e.p_waic == pytest.approx(pw, abs=1e-10)
        assert e.waic_loo == pytest.approx(loo - pw, abs=1e-10)
        assert e.waic_std == pytest.approx(lppd - pw, abs=1e-10)

    def test_single_draw(self):
        e = elpd(np.full((1, 4, 2), -2.0))
        assert e.p_waic == 0.0
        assert e.elpd_loo == pytest.approx(-16.0) and e.lppd == pytest.approx(-16.0)

    def test_constant(self):
        e = elpd(np.full((30, 5, 2), -0.25))
        for v in (e.elpd_loo, e.lppd, e.waic_loo, e.waic_std):
            assert v == pytest.approx(-2.5, abs=1e-12)
        assert e.p_waic == 0.0

    def test_large_magnitudes_are_stable(self):
        e = elpd(np.array([[-1000.0], [-1001.0]]).reshape(2, 1, 1))
        assert math.isfinite(e.elpd_loo) and math.isfinite(e.lppd)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4), st.integers(1, 3)),
                  elements=st.floats(-50, 5)))
    def test_loo_below_lppd(self, ll):
        e = elpd(ll)
        # harmonic mean of likelihoods never exceeds the arithmetic mean
        assert e.elpd_loo <= e.lppd + 1e-9 * (1 + abs(e.lppd))

    def test_empty(self):
        with pytest.raises(EvaluationError):
            elpd(np.zeros((0, 2, 2)))


class TestSelection:
    def test_counts(self):
        est = np.array([[0.9, 0.2], [0.6, 0.5]])
        truth = np.array([[1, 1], [0, 0]])
        acc, sens, spec = selection_metrics(est, truth)
        assert (acc, sens, spec) == (0.5, 0.5, 0.5)

    def test_all_zero_estimate(self):
        truth = np.array([[1, 0, 0, 0]])
        assert selection_metrics(np.zeros((1, 4)), truth) == (0.75, 0.0, 1.0)

    def test_no_positives(self):
        acc, sens, spec = selection_metrics(np.zeros((2, 2)), np.zeros((2, 2)))
        assert acc == 1.0 and math.isnan(sens) and spec == 1.0

    def test_errors(self):
        with pytest.raises(EvaluationError, match="shape"):
            selection_metrics(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(EvaluationError, match="binary"):
            selection_metrics(np.zeros((2, 2)), np.full((2, 2), 2))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    def test_permutation_equivariant(self, p, m, data):
        est = data.draw(arrays(np.float64, (p, m), elements=st.floats(0, 1)))
        truth = data.draw(arrays(np.int8, (p, m), elements=st.integers(0, 1)))
        perm_r = data.draw(st.permutations(range(p)))
        perm_c = data.draw(st.permutations(range(m)))
        a = selection_metrics(est, truth)
        b = selection_metrics(est[np.ix_(perm_r, perm_c)], truth[np.ix_(perm_r, perm_c)])
        np.testing.assert_array_equal(a, b)


class TestGraphMetrics:
    def test_edge_probability(self):
        edges = np.array([[1, 0, 1], [1, 1, 0], [0, 0, 1], [1, 0, 0]])
        P = graph_edge_probability(edges, 3)
        np.testing.assert_array_equal(P, [[0, 0.75, 0.25], [0.75, 0, 0.5], [0.25, 0.5, 0]])

    def test_metrics(self):
        P = edge_matrix([0.75, 0.25, 0.5], 3)
        acc, sens, spec = graph_metrics(P, DecomposableGraph(3, [(0, 1), (1, 2)]))
        assert (acc, sens, spec) == (2 / 3, 0.5, 1.0)

    def test_errors(self):
        with pytest.raises(EvaluationError):
            edge_matrix([0.1, 0.2], 3)
        with pytest.raises(EvaluationError):
            graph_metrics(np.zeros((3, 3)), DecomposableGraph.empty(4))


class TestCoefficientErrors:
    def test_scaled_norm(self):
        B = np.zeros((20, 4))
        re, coef = coefficient_errors(np.ones((20, 4)), None, B)
        assert re is None and coef == pytest.approx(1.0, rel=1e-15)

    def test_random_effects(self):
        re, coef = coefficient_errors(np.zeros((2, 2)), np.full((3, 2), 2.0), np.zeros((2, 2)), np.zeros((3, 2)))
        assert coef == 0.0 and re == pytest.approx(2.0)

    def test_missing_truth(self):
        with pytest.raises(EvaluationError, match="missing"):
            coefficient_errors(np.zeros((2, 2)), None, None)


class TestSummarize:
    def test_pipeline(self, rng):
        N, p, m = 8, 3, 3
        g = (rng.random((N, p, m)) < 0.6).astype(np.int8)
        trace = SimpleNamespace(gamma=g, beta=g * rng.standard_normal((N, p, m)), b0=np.zeros((N, 0, m)),
                                edges=(rng.random((N, 3)) < 0.5).astype(np.int8))
        s = summarize(trace)
        np.testing.assert_allclose(s.gamma_mean, g.mean(axis=0))
        np.testing.assert_allclose(s.beta_mpm, mpm_coefficients(g, trace.beta))
        d = Dataset(Y=rng.standard_normal((10, m)), X=rng.standard_normal((10, p)))
        out = evaluate(s, d, d, loglik=rng.normal(-1, 0.1, (N, 10, m)), gamma_true=g[0],
                       graph_true=DecomposableGraph.empty(m), B_true=np.zeros((p, m)))
        assert list(out) == ["mse", "mspe", "elpd_loo", "elpd_waic_loo", "elpd_waic_std", "lppd",
                             "p_waic", "accuracy", "sensitivity", "specificity", "graph_accuracy",
                             "graph_sensitivity", "graph_specificity", "coef_error"]
        assert out["mse"] == out["mspe"]
        assert s.metrics == out
