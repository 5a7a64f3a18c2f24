import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy import stats

from ssur import _kernels as K
from ssur import mcmc
from ssur.config import RunConfig
from ssur.data import Dataset, MrfPrior
from ssur.graph import DecomposableGraph
from ssur.mcmc import (SamplerError, adapt_ladder, adapt_temperatures, build_context, check_state,
                       exchange_log_ratio, exchange_move, log_posterior, make_chains, run, update_coefficients,
                       update_graph, update_tau, update_w, update_w0, w_conditional)
from ssur.model import parents_by_vertex
from ssur.priors import sample_sigma_rho_prior


def small_data(rng, n=30, p=6, m=3, T=0):
    X = rng.standard_normal((n, p))
    B = np.zeros((p, m))
    B[0, :] = 1.0
    B[min(2, p - 1), 0] = -0.8
    Y = X @ B + 0.5 * rng.standard_normal((n, m))
    Z = np.eye(T)[rng.integers(0, T, n)] if T else None
    if T:
        Y = Y + Z @ rng.normal(0, 2, (T, m))
    return Dataset(Y, X, Z)


def chain_for(cfg, data, seed=0, prior=None):
    ctx = build_context(cfg.validate(allow_empty=True), data, prior)
    _, chains = make_chains(ctx, seed)
    return ctx, chains


def exact_inclusion(X, y, d, w=1.0, s2=1.0, G=None, e=0.0):
    """Posterior over all subsets for one response with known variances."""
    n, p = X.shape
    out = {}
    for model in itertools.product([0, 1], repeat=p):
        a = np.array(model, bool)
        C = s2 * np.eye(n) + w * X[:, a] @ X[:, a].T
        lp = stats.multivariate_normal(np.zeros(n), C).logpdf(y) + d * a.sum()
        if G is not None:
            g = a.astype(float)
            lp += e * g @ G @ g
        out[model] = lp
    z = np.logaddexp.reduce(list(out.values()))
    return {k: math.exp(v - z) for k, v in out.items()}


def empirical_models(gamma):
    g = gamma[:, :, 0]
    keys, counts = np.unique(g, axis=0, return_counts=True)
    return {tuple(int(v) for v in k): c / g.shape[0] for k, c in zip(keys, counts)}


def tv(a, b):
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def batch_se(x, n_batches=50):
    x = np.asarray(x, dtype=float)
    b = x[: x.size // n_batches * n_batches].reshape(n_batches, -1).mean(axis=1)
    return b.std(ddof=1) / math.sqrt(n_batches)


TOY_FIXED = dict(covariance="indep", fixed=("w", "sigma_rho", "tau"), init_w=1.0, init_sigma2=1.0,
                 store_loglik=False, check_every=0, nchains=1)


class TestIndicatorMoves:
    def test_add_ratio_is_bayes_factor(self, rng):
        # orthonormal design: single-variable Bayes factor in closed form
        n = 12
        Q, _ = np.linalg.qr(rng.standard_normal((n, 3)))
        y = rng.standard_normal(n)
        s2, w = 0.9, 1.7
        Qw, zw = np.empty((3, 3)), np.empty(3)
        for k in range(3):
            act = np.array([k], dtype=np.int64)
            got = K.column_log_ml(Q.T @ Q, Q.T @ y, act, 1, s2, w, Qw, zw)
            xy = Q[:, k] @ y
            want = -0.5 * math.log(1 + w / s2) + 0.5 * xy ** 2 * w / (s2 * (s2 + w))
            assert got == pytest.approx(want, rel=1e-10)

    def test_three_predictor_enumeration(self):
        r = np.random.default_rng(11)
        X = r.standard_normal((20, 3))
        y = X @ [0.5, 0.0, 0.3] + r.standard_normal(20)
        cfg = RunConfig(niter=1_000_000, burnin=1_000, thin=5, seed=4, **TOY_FIXED)
        tr = run(cfg, Dataset(y[:, None], X))
        assert tv(empirical_models(tr.gamma), exact_inclusion(X, y, -2.0)) < 0.02

    def test_mrf_enumeration(self):
        r = np.random.default_rng(12)
        X = r.standard_normal((20, 3))
        y = X @ [0.4, 0.0, 0.0] + r.standard_normal(20)
        G = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], float)
        prior = MrfPrior(sp.csr_matrix(G), -1.5, 0.6)
        cfg = RunConfig(niter=300_000, burnin=1_000, thin=5, seed=5, **TOY_FIXED)
        tr = run(cfg, Dataset(y[:, None], X), prior)
        assert tv(empirical_models(tr.gamma), exact_inclusion(X, y, -1.5, G=G, e=0.6)) < 0.03

    def test_support_coupling_every_sweep(self, rng):
        data = small_data(rng)
        cfg = RunConfig(niter=200, burnin=100, thin=10, nchains=2, seed=1, check_every=0)

        def progress(it, chains):
            for c in chains:
                g = c.state.gamma(data.p, data.m)
                assert np.array_equal(c.state.B != 0, g != 0)

        run(cfg, data, progress=progress)

    def test_propensities_frozen_after_burnin(self, rng):
        data = small_data(rng)
        cfg = RunConfig(niter=60, burnin=30, thin=10, nchains=1, seed=2)
        seen = {}

        def progress(it, chains):
            seen[it] = chains[0].n_in.sum() + chains[0].n_out.sum()

        run(cfg, data, progress=progress)
        assert seen[30] > seen[1]
        assert seen[60] == seen[30]


class TestScalarUpdates:
    def test_w_conditional_no_coefficients(self):
        assert w_conditional(np.zeros(6), np.zeros((3, 2)), 2.0, 5.0) == (2.0, 5.0)

    def test_w_conditional_one_coefficient(self):
        g = np.zeros(4)
        g[1] = 1
        B = np.zeros((2, 2))
        B[1, 0] = 2.0
        assert w_conditional(g, B, 3.0, 1.0) == (3.5, 3.0)

    def test_w_draw_mean(self, rng):
        data = small_data(rng)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=1, a_w=3, b_w=1), data)
        st = chains[0].state
        st.gvec[[0, 7]] = 1
        st.B[0, 0], st.B[1, 1] = 1.5, -0.5
        draws = np.empty(100_000)
        for t in range(draws.size):
            update_w(chains[0], ctx)
            draws[t] = st.w
        a, b = w_conditional(st.gvec, st.B, 3.0, 1.0)
        assert abs(draws.mean() - b / (a - 1)) < 3 * draws.std() / math.sqrt(draws.size)

    def test_w0_uses_all_random_effects(self, rng):
        data = small_data(rng, T=4)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=1, a_w0=2, b_w0=3), data)
        st = chains[0].state
        st.B0[:] = 1.0
        draws = np.empty(50_000)
        for t in range(draws.size):
            update_w0(chains[0], ctx)
            draws[t] = st.w0
        a, b = 2 + 0.5 * 12, 3 + 0.5 * 12
        assert abs(draws.mean() - b / (a - 1)) < 3 * draws.std() / math.sqrt(draws.size)

    def test_tau_zero_step(self, rng):
        data = small_data(rng)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=1, tau_step=0.0), data)
        for _ in range(20):
            update_tau(chains[0], ctx, adapting=False)
        assert chains[0].state.tau == 1.0
        assert chains[0].counts["tau"] == [20, 20]

    def test_tau_prior_only(self, rng):
        data = small_data(rng, n=5, p=2, m=2)
        cfg = RunConfig(niter=400_000, burnin=20_000, thin=1, nchains=1, seed=9, prior_only=True,
                        fixed=("gamma", "beta", "w"), store_loglik=False, check_every=0, covariance="indep")
        tr = run(cfg, data)
        want = 0.1 / 10
        assert abs(tr.tau.mean() - want) < 3 * batch_se(tr.tau)


class TestGraphUpdate:
    def test_single_response(self, rng):
        data = small_data(rng, m=1)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=1), data)
        before = chains[0].state.graph
        update_graph(chains[0], ctx)
        assert chains[0].state.graph is before
        assert chains[0].counts["graph"] == [0, 0]

    def test_rejected_move_keeps_graph(self, rng):
        data = small_data(rng)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=1, graph_moves=200, a_eta=1e-6), data)
        st = chains[0].state
        for _ in range(20):
            g, pars = st.graph, st.parents
            accepted = chains[0].counts["graph"][1]
            update_graph(chains[0], ctx)
            if chains[0].counts["graph"][1] == accepted:
                assert st.graph is g and st.parents is pars


class TestCoefficientUpdate:
    def test_empty_model(self, rng):
        data = small_data(rng)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=1), data)
        update_coefficients(chains[0].state, ctx, 1.0, chains[0].rng)
        assert not chains[0].state.B.any()
        np.testing.assert_array_equal(chains[0].state.U, data.Y)

    def test_random_states_factorise(self, rng):
        data = small_data(rng, T=3)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=1), data)
        st = chains[0].state
        for _ in range(1000):
            st.gvec[:] = rng.random(st.gvec.size) < 0.5
            g = DecomposableGraph.complete(3) if rng.random() < 0.5 else DecomposableGraph.empty(3)
            st.parents = parents_by_vertex(g)
            st.graph = g
            st.sigma2, st.rho = sample_sigma_rho_prior(5.0, 1.0, st.parents, rng)
            st.w, st.w0 = rng.uniform(0.1, 5), rng.uniform(0.1, 5)
            update_coefficients(st, ctx, float(rng.uniform(1, 4)), rng)
            assert np.array_equal(st.B != 0, st.gamma(data.p, data.m) != 0)
            np.testing.assert_allclose(st.U, data.Y - data.X @ st.B - data.Z @ st.B0, atol=1e-10)

    def test_failure_names_iteration(self, rng, monkeypatch):
        data = small_data(rng)
        monkeypatch.setattr(K, "coefficient_sweep", lambda *a: False)
        with pytest.raises(SamplerError, match="iteration 1:"):
            run(RunConfig(niter=5, burnin=2, thin=1, nchains=1, seed=0), data)


class TestGlobalMoves:
    def test_equal_temperatures(self):
        assert exchange_log_ratio(2.0, 2.0, -10.0, -3.0) == 0.0

    def test_identical_states(self, rng):
        data = small_data(rng)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=3), data)
        for c in chains[1:]:
            c.state = chains[0].state.copy()
        master = np.random.default_rng(0)
        assert all(exchange_move(chains, ctx, master) for _ in range(50))

    def test_ladder_fixed_at_target(self):
        assert adapt_ladder(1.5, 0.25) == 1.5

    def test_ladder_contracts(self):
        assert adapt_ladder(1.5, 0.0) < 1.5
        assert adapt_ladder(1.5, 0.6) > 1.5

    def test_adaptation_toward_target(self):
        # synthetic acceptance falling with the ratio drives the ratio to the balance point
        ratio = 3.0
        for _ in range(500):
            ratio = adapt_ladder(ratio, math.exp(-(ratio - 1.0)))
        assert math.exp(-(ratio - 1.0)) == pytest.approx(0.25, abs=1e-3)

    def test_frozen_after_burnin(self, rng):
        data = small_data(rng)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=3), data)
        temps = [c.temperature for c in chains]
        assert adapt_temperatures(chains, 1.5, 0.0, 0.25, adapting=False) == 1.5
        assert [c.temperature for c in chains] == temps
        adapt_temperatures(chains, 1.5, 0.0, 0.25, adapting=True)
        assert chains[0].temperature == 1.0 and chains[1].temperature < temps[1]


class TestRun:
    def test_empty_trace(self, rng):
        tr = run(RunConfig(niter=10, burnin=10, nchains=2, seed=1), small_data(rng))
        assert tr.n_samples == 0 and "niter = 10" in tr.config_text

    def test_sample_counts(self, rng):
        data = small_data(rng, T=2)
        tr = run(RunConfig(niter=100, burnin=40, thin=20, nchains=2, seed=3), data)
        assert tr.n_samples == 3
        assert tr.loglik.shape == (3, data.n, data.m)
        assert tr.b0.shape == (3, 2, data.m)
        assert list(tr.iterations) == [60, 80, 100]

    def test_deterministic(self, rng):
        data = small_data(rng)
        cfg = RunConfig(niter=300, burnin=100, thin=10, nchains=3, seed=42, check_every=100)
        a, b = run(cfg, data), run(cfg, data)
        for name in ("gamma", "beta", "edges", "w", "tau", "loglik", "log_post"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_threads_deterministic(self, rng):
        data = small_data(rng)
        cfg = RunConfig(niter=100, burnin=50, thin=10, nchains=3, seed=42)
        a = run(cfg, data)
        b = run(cfg.replace(threads=3), data)
        np.testing.assert_array_equal(a.beta, b.beta)

    def test_dual_route_check(self, rng):
        data = small_data(rng, T=2)
        for prior, cov in (("mrf", "hiw"), ("hotspot", "hiw"), ("mrf", "iw")):
            cfg = RunConfig(niter=600, burnin=300, thin=50, nchains=2, seed=7, check_every=50,
                            prior=prior, covariance=cov, init_gamma="bernoulli:0.3")
            run(cfg, data)

    def test_routes_agree_on_random_states(self, rng):
        data = small_data(rng, T=2)
        ctx, chains = chain_for(RunConfig(niter=1, burnin=0, nchains=1, covariance="hiw"), data)
        st = chains[0].state
        for _ in range(50):
            g = DecomposableGraph.complete(3) if rng.random() < 0.5 else DecomposableGraph(3, [(0, 1)])
            st.graph, st.parents = g, parents_by_vertex(g)
            st.sigma2, st.rho = sample_sigma_rho_prior(5.0, 1.0, st.parents, rng)
            st.gvec[:] = rng.random(st.gvec.size) < 0.4
            update_coefficients(st, ctx, 1.0, rng)
            check_state(st, ctx, 0)
            a, b = log_posterior(st, ctx), log_posterior(st, ctx, route="dense")
            assert a == pytest.approx(b, rel=1e-10)

    def test_prior_only_tempered(self):
        # likelihood off: every rung of the ladder must sample the priors
        r = np.random.default_rng(3)
        data = Dataset(r.standard_normal((5, 2)), r.standard_normal((5, 4)))
        cfg = RunConfig(niter=60_000, burnin=5_000, thin=1, nchains=3, temp_ratio=3.0, seed=8,
                        prior_only=True, d=-1.0, e=0.0, a_w=5.0, b_w=4.0, store_loglik=False,
                        check_every=0, covariance="indep", fixed=("tau", "sigma_rho"))
        tr = run(cfg, data)
        incl = tr.gamma.reshape(tr.n_samples, -1).mean(axis=1)
        assert abs(incl.mean() - 1 / (1 + math.e)) < 3 * batch_se(incl)
        assert abs(tr.w.mean() - 1.0) < 3 * batch_se(tr.w)
        assert tr.temperatures[0] == 1.0

    def test_hotspot_runs(self, rng):
        data = small_data(rng)
        tr = run(RunConfig(niter=300, burnin=100, thin=10, nchains=2, seed=3, prior="hotspot"), data)
        assert tr.acceptance["hotspot_o"][0] > 0
