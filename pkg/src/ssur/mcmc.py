"""Parallel-tempered evolutionary stochastic search for the structured SUR model.

One sweep of a chain runs, in order: (i) indicator moves per response with
the coefficients integrated out, (ii) the covariance scale ``tau`` and, for
the hotspot baseline, the propensities, (iii) the slab and random-effect
variances, (iv) the response graph, (v) the conditional variances and
regression weights of the residual covariance, (vi) coefficients and
random effects.  Between sweeps one global move (exchange or crossover)
couples neighbouring temperatures.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from . import _kernels as K
from .config import RunConfig
from .data import Dataset, MrfPrior
from .graph import (DecomposableGraph, is_decomposable, log_edge_set_prior,
                    propose_edge_move)
from .model import cell_loglik, draw_sigma_given_rho, loglik_dense, parents_by_vertex
from .priors import (CovarianceHyper, HotspotHyper, covariance_from_reparam,
                     log_hotspot_hyperprior, log_hotspot_prior, log_mrf_prior,
                     log_sigma_rho_prior, precision_from_reparam, sigma_shape)

THETA_CLIP = 1e-6
KAPPA = 1.0
MAX_TEMP_RATIO = 50.0


class SamplerError(RuntimeError):
    """Numerical failure inside the sampler; the message carries the iteration."""


@dataclass
class Context:
    """Read-only quantities shared by all chains."""

    cfg: RunConfig
    Y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    XtX: np.ndarray
    XtZ: np.ndarray
    ZtZ: np.ndarray
    n: int
    n_eff: int
    p: int
    m: int
    T: int
    cov: CovarianceHyper
    hot: HotspotHyper | None
    mrf: MrfPrior | None
    g_indptr: np.ndarray
    g_indices: np.ndarray
    g_data: np.ndarray
    e: float
    mrf_logodds: np.ndarray
    local_moves: int
    fixed: frozenset
    warmup: int

    @property
    def has_re(self) -> bool:
        return self.T > 0


@dataclass
class ChainState:
    gvec: np.ndarray
    B: np.ndarray
    B0: np.ndarray
    w: float
    w0: float
    tau: float
    sigma2: np.ndarray
    rho: list
    graph: DecomposableGraph
    parents: tuple
    U: np.ndarray
    o: np.ndarray | None = None
    pi: np.ndarray | None = None
    loglik: float = 0.0

    def gamma(self, p: int, m: int) -> np.ndarray:
        return self.gvec.reshape((p, m), order="F")

    def copy(self) -> "ChainState":
        return ChainState(
            self.gvec.copy(), self.B.copy(), self.B0.copy(), self.w, self.w0, self.tau,
            self.sigma2.copy(), [r.copy() for r in self.rho], self.graph, self.parents,
            self.U.copy(), None if self.o is None else self.o.copy(),
            None if self.pi is None else self.pi.copy(), self.loglik,
        )


MOVES = ("gamma_add", "gamma_delete", "gamma_swap", "tau", "graph", "hotspot_o",
         "hotspot_pi", "exchange", "crossover")


@dataclass
class Chain:
    state: ChainState
    temperature: float
    rng: np.random.Generator
    tau_step: float
    n_in: np.ndarray
    n_out: np.ndarray
    gamma_stats: np.ndarray = field(default_factory=lambda: np.zeros((3, 2), dtype=np.int64))
    counts: dict = field(default_factory=lambda: {k: [0, 0] for k in MOVES[3:]})
    sweeps: int = 0


@dataclass
class Trace:
    """Thinned cold-chain samples."""

    gamma: np.ndarray
    beta: np.ndarray
    b0: np.ndarray
    edges: np.ndarray
    w: np.ndarray
    w0: np.ndarray
    tau: np.ndarray
    loglik: np.ndarray | None
    log_post: np.ndarray
    acceptance: dict
    temperatures: np.ndarray
    config_text: str
    iterations: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.gamma.shape[0]


# ---------------------------------------------------------------- setup


def build_context(cfg: RunConfig, data: Dataset, prior: MrfPrior | None = None) -> Context:
    n, p, m = data.n, data.p, data.m
    T = data.T
    Y, X = data.Y, data.X
    Z = data.Z if T else np.zeros((n, 0))
    likelihood = not cfg.prior_only
    if not likelihood:
        Y = np.zeros_like(Y)
        X = np.zeros_like(X)
        Z = np.zeros_like(Z)
    cov = CovarianceHyper(cfg.nu, cfg.a_tau, cfg.b_tau, cfg.a_eta, cfg.b_eta).resolved(m)
    hot = None
    if cfg.prior == "hotspot":
        hot = HotspotHyper(cfg.a_o, cfg.b_o, cfg.a_pi, cfg.b_pi).resolved(p)
        mrf = None
        G = sp.csr_matrix((m * p, m * p))
        e = 0.0
        d = 0.0
    else:
        mrf = prior if prior is not None else MrfPrior(sp.csr_matrix((m * p, m * p)), cfg.d, cfg.e)
        if mrf.size != m * p:
            raise ValueError(f"MRF structure has size {mrf.size}, data need {m * p}")
        G, e, d = mrf.G, mrf.e, mrf.d
    local = cfg.local_moves if cfg.local_moves is not None else max(5, p // 10)
    return Context(
        cfg, Y, X, Z, X.T @ X, X.T @ Z, Z.T @ Z, n, n if likelihood else 0, p, m, T, cov, hot,
        mrf, G.indptr.astype(np.int64), G.indices.astype(np.int64), G.data.astype(np.float64),
        float(e), np.full((m, p), float(d)), local, frozenset(cfg.fixed),
        cfg.burnin // 10 if cfg.warmup is None else cfg.warmup,
    )


def initial_graph(ctx: Context) -> DecomposableGraph:
    if ctx.cfg.covariance == "iw":
        return DecomposableGraph.complete(ctx.m)
    return DecomposableGraph.empty(ctx.m)


def init_state(ctx: Context, rng) -> ChainState:
    cfg = ctx.cfg
    p, m, T = ctx.p, ctx.m, ctx.T
    gvec = np.zeros(p * m, dtype=np.int8)
    if cfg.init_gamma.startswith("bernoulli:"):
        c = float(cfg.init_gamma.split(":", 1)[1])
        gvec[:] = rng.random(p * m) < c
    graph = initial_graph(ctx)
    parents = parents_by_vertex(graph)
    st = ChainState(
        gvec=gvec, B=np.zeros((p, m)), B0=np.zeros((T, m)),
        w=cfg.init_w if cfg.init_w is not None else cfg.b_w / cfg.a_w,
        w0=cfg.init_w0 if cfg.init_w0 is not None else cfg.b_w0 / cfg.a_w0,
        tau=cfg.init_tau, sigma2=np.full(m, cfg.init_sigma2),
        rho=[np.zeros(len(pa)) for pa in parents], graph=graph, parents=parents,
        U=ctx.Y.copy(),
    )
    if ctx.hot is not None:
        st.o = np.full(p, ctx.hot.a_o / (ctx.hot.a_o + ctx.hot.b_o))
        st.pi = np.ones(m)
    if gvec.any() and "beta" not in ctx.fixed:
        update_coefficients(st, ctx, 1.0, rng)
    st.loglik = loglik(st, ctx)
    return st


# ---------------------------------------------------------------- helpers


def _conditional_coefs(st: ChainState, m: int):
    """Conditional variance and regression-on-others coefficients for each response."""
    if not any(st.parents):
        return st.sigma2.copy(), np.zeros((m, m))
    Om = precision_from_reparam(st.sigma2, st.rho, st.parents)
    diag = np.diag(Om).copy()
    C = -Om / diag[:, None]
    np.fill_diagonal(C, 0.0)
    return 1.0 / diag, C


def loglik(st: ChainState, ctx: Context) -> float:
    """Untempered log likelihood through the vertex-wise parametrisation."""
    if ctx.n_eff == 0:
        return 0.0
    return float(cell_loglik(st.U, st.sigma2, st.rho, st.parents).sum())


def hotspot_logodds(o, pi_j):
    omega = o * pi_j
    return np.log(omega) - np.log1p(-omega)


def gamma_log_prior(st: ChainState, ctx: Context) -> float:
    if ctx.hot is not None:
        g = st.gamma(ctx.p, ctx.m)
        return log_hotspot_prior(g, st.o, st.pi) + log_hotspot_hyperprior(st.o, st.pi, ctx.hot)
    return log_mrf_prior(st.gvec.astype(float), ctx.mrf)


def _log_ig(x, a, b):
    return a * math.log(b) - gammaln(a) - (a + 1) * math.log(x) - b / x


def _slab_log_prior(B, gvec, w):
    act = B.ravel(order="F")[gvec != 0]
    return float(-0.5 * act.size * math.log(2 * math.pi * w) - 0.5 * act @ act / w)


def log_posterior(st: ChainState, ctx: Context, route: str = "reparam") -> float:
    """Unnormalised log joint posterior of the untempered model.

    ``route="dense"`` evaluates the likelihood from the dense residual
    covariance instead of the vertex-wise parametrisation.
    """
    cfg = ctx.cfg
    if ctx.n_eff == 0:
        ll = 0.0
    elif route == "dense":
        ll = loglik_dense(st.U, covariance_from_reparam(st.sigma2, st.rho, st.parents))
    else:
        ll = float(cell_loglik(st.U, st.sigma2, st.rho, st.parents).sum())
    lp = ll + _slab_log_prior(st.B, st.gvec, st.w) + gamma_log_prior(st, ctx)
    lp += _log_ig(st.w, cfg.a_w, cfg.b_w)
    if ctx.has_re:
        b0 = st.B0.ravel()
        lp += float(-0.5 * b0.size * math.log(2 * math.pi * st.w0) - 0.5 * b0 @ b0 / st.w0)
        lp += _log_ig(st.w0, cfg.a_w0, cfg.b_w0)
    lp += log_sigma_rho_prior(st.sigma2, st.rho, ctx.cov.nu, st.tau, st.parents)
    a, b = ctx.cov.a_tau, ctx.cov.b_tau
    lp += a * math.log(b) - gammaln(a) + (a - 1) * math.log(st.tau) - b * st.tau
    if cfg.covariance == "hiw":
        lp += log_edge_set_prior(st.graph, ctx.cov.a_eta, ctx.cov.b_eta)
    return float(lp)


# ---------------------------------------------------------------- sweep steps


def update_gamma_local(chain: Chain, ctx: Context, adapting: bool):
    """Step (i): add/delete/swap moves on each response's indicators."""
    st, rng = chain.state, chain.rng
    p, m = ctx.p, ctx.m
    if ctx.local_moves == 0:
        return
    s2, C = _conditional_coefs(st, m)
    ZB0 = ctx.Z @ st.B0
    theta = np.clip(rng.beta(1.0 + chain.n_in.T, 1.0 + chain.n_out.T), THETA_CLIP, 1.0 - THETA_CLIP)
    unif = rng.random((m, ctx.local_moves, 6))
    normals = rng.standard_normal((m, p))
    if ctx.hot is None:
        logodds = ctx.mrf_logodds
    else:
        logodds = hotspot_logodds(st.o[None, :], st.pi[:, None])
    acc = K.gamma_sweep(ctx.Y, ctx.X, ctx.XtX, ZB0, st.U, C, s2, chain.temperature, st.gvec, st.B,
                        st.w, logodds, ctx.e, ctx.g_indptr, ctx.g_indices,
                        ctx.g_data, theta, unif, normals, chain.gamma_stats)
    if acc < 0:
        raise SamplerError("coefficient Cholesky failed in indicator update")
    if adapting:
        g = st.gamma(p, m)
        chain.n_in += g
        chain.n_out += 1 - g


def tau_log_target(tau, sigma2, rho, shapes, a_tau, b_tau) -> float:
    """Log density of tau given the vertex-wise covariance parameters (up to a constant)."""
    if not tau > 0:
        return -np.inf
    val = (a_tau - 1.0) * math.log(tau) - b_tau * tau
    for j in range(len(sigma2)):
        q = len(rho[j])
        ss = float(rho[j] @ rho[j]) if q else 0.0
        val += shapes[j] * math.log(0.5 * tau) + 0.5 * q * math.log(tau) - 0.5 * tau * (1.0 + ss) / sigma2[j]
    return val


def rw_log_step(x: float, log_target, step: float, rng):
    """Random walk on log x; returns (new x, accepted)."""
    z = rng.standard_normal()
    if step == 0.0:
        return x, True
    prop = x * math.exp(step * z)
    logr = log_target(prop) - log_target(x) + math.log(prop) - math.log(x)
    if math.log(rng.random()) < logr:
        return prop, True
    return x, False


def update_tau(chain: Chain, ctx: Context, adapting: bool):
    """Step (ii): random-walk Metropolis on log tau."""
    st = chain.state
    shapes = [sigma_shape(ctx.cov.nu, ctx.m, len(pa)) for pa in st.parents]
    target = lambda t: tau_log_target(t, st.sigma2, st.rho, shapes, ctx.cov.a_tau, ctx.cov.b_tau)  # noqa: E731
    st.tau, ok = rw_log_step(st.tau, target, chain.tau_step, chain.rng)
    c = chain.counts["tau"]
    c[0] += 1
    c[1] += ok
    if adapting:
        chain.tau_step *= math.exp((ok - 0.44) / math.sqrt(chain.sweeps + 1.0))


HOT_STEP = 0.3


def update_hotspot(chain: Chain, ctx: Context):
    """Step (ii), hotspot baseline: elementwise log-scale random walks on the propensities."""
    st, rng, hot = chain.state, chain.rng, ctx.hot
    g = st.gamma(ctx.p, ctx.m).astype(float)

    def ll_rows(o, pi):
        om = np.outer(o, pi)
        return (g * np.log(om) + (1 - g) * np.log1p(-om)).sum(axis=1)

    prop = st.o * np.exp(HOT_STEP * rng.standard_normal(ctx.p))
    ok = (prop < 1) & (prop * st.pi.max() < 1)
    safe = np.where(ok, prop, st.o)
    logr = (ll_rows(safe, st.pi) - ll_rows(st.o, st.pi)
            + hot.a_o * (np.log(safe) - np.log(st.o))
            + (hot.b_o - 1) * (np.log1p(-safe) - np.log1p(-st.o)))
    acc = ok & (np.log(rng.random(ctx.p)) < logr)
    st.o = np.where(acc, safe, st.o)
    c = chain.counts["hotspot_o"]
    c[0] += ctx.p
    c[1] += int(acc.sum())

    prop = st.pi * np.exp(HOT_STEP * rng.standard_normal(ctx.m))
    ok = prop * st.o.max() < 1
    safe = np.where(ok, prop, st.pi)
    om_new = np.outer(st.o, safe)
    om_old = np.outer(st.o, st.pi)
    logr = ((g * np.log(om_new) + (1 - g) * np.log1p(-om_new)).sum(axis=0)
            - (g * np.log(om_old) + (1 - g) * np.log1p(-om_old)).sum(axis=0)
            + hot.a_pi * (np.log(safe) - np.log(st.pi)) - hot.b_pi * (safe - st.pi))
    acc = ok & (np.log(rng.random(ctx.m)) < logr)
    st.pi = np.where(acc, safe, st.pi)
    c = chain.counts["hotspot_pi"]
    c[0] += ctx.m
    c[1] += int(acc.sum())


def w_conditional(gvec, B, a_w: float, b_w: float):
    """Shape and scale of the slab-variance full conditional."""
    return a_w + 0.5 * float(np.count_nonzero(gvec)), b_w + 0.5 * float(np.sum(B * B))


def update_w(chain: Chain, ctx: Context):
    """Step (iii): exact inverse-gamma draw of the slab variance."""
    st = chain.state
    a, b = w_conditional(st.gvec, st.B, ctx.cfg.a_w, ctx.cfg.b_w)
    st.w = b / chain.rng.gamma(a)


def update_w0(chain: Chain, ctx: Context):
    st = chain.state
    a = ctx.cfg.a_w0 + 0.5 * st.B0.size
    b = ctx.cfg.b_w0 + 0.5 * float(np.sum(st.B0 * st.B0))
    st.w0 = b / chain.rng.gamma(a)


def update_graph(chain: Chain, ctx: Context, visits: dict | None = None):
    """Step (iv): single-edge Metropolis-Hastings on the decomposable response graph.

    The conditional variances and regression weights are integrated out,
    so the acceptance ratio uses the tempered marginal likelihood of the
    residuals; step (v) then redraws them under the current graph.
    ``visits``, when given, counts the graph held after every move.
    """
    if ctx.m < 2:
        return
    st, rng = chain.state, chain.rng
    S = st.U.T @ st.U
    nu, tau, temp = ctx.cov.nu, st.tau, chain.temperature
    memo = {}

    def vml(j, pa):
        key = (j, pa)
        if key not in memo:
            memo[key] = K.vertex_log_ml(S, ctx.n_eff, j, np.array(pa, dtype=np.int64),
                                        sigma_shape(nu, ctx.m, len(pa)), tau, temp)
        return memo[key]

    cur_ml = sum(vml(j, pa) for j, pa in enumerate(st.parents))
    cur_prior = log_edge_set_prior(st.graph, ctx.cov.a_eta, ctx.cov.b_eta)
    for _ in range(ctx.cfg.graph_moves):
        move = propose_edge_move(st.graph, rng)
        if move is None:
            return
        cand, _, logq = move
        pars = parents_by_vertex(cand)
        new_ml = sum(vml(j, pa) for j, pa in enumerate(pars))
        new_prior = log_edge_set_prior(cand, ctx.cov.a_eta, ctx.cov.b_eta)
        logr = new_ml - cur_ml + new_prior - cur_prior + logq
        c = chain.counts["graph"]
        c[0] += 1
        if math.log(rng.random()) < logr:
            c[1] += 1
            st.graph, st.parents = cand, pars
            cur_ml, cur_prior = new_ml, new_prior
        if visits is not None:
            visits[st.graph] = visits.get(st.graph, 0) + 1


def update_sigma_rho(chain: Chain, ctx: Context):
    """Step (v): conjugate draws of conditional variances and regression weights."""
    st, rng, m = chain.state, chain.rng, ctx.m
    S = st.U.T @ st.U
    sizes = np.array([len(pa) for pa in st.parents], dtype=np.int64)
    ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(sizes, out=ptr[1:])
    flat = np.array([v for pa in st.parents for v in pa], dtype=np.int64)
    shapes = sigma_shape(ctx.cov.nu, m, sizes) + 0.5 * ctx.n_eff / chain.temperature
    gammas = rng.gamma(shapes)
    normals = rng.standard_normal((m, m))
    sigma2 = np.empty(m)
    rho = np.zeros((m, m))
    if not K.draw_sigma_rho(S, flat, ptr, st.tau, chain.temperature, gammas, normals, sigma2, rho):
        raise SamplerError("covariance Cholesky failed")
    st.sigma2 = sigma2
    st.rho = [rho[j, :sizes[j]].copy() for j in range(m)]


def update_coefficients(st: ChainState, ctx: Context, temperature: float, rng):
    """Step (vi): joint Gaussian draw of active coefficients and random effects per response."""
    s2, C = _conditional_coefs(st, ctx.m)
    normals = rng.standard_normal((ctx.m, ctx.p + ctx.T))
    ok = K.coefficient_sweep(ctx.Y, ctx.X, ctx.Z, ctx.XtX, ctx.XtZ, ctx.ZtZ, st.U, C, s2, temperature,
                             st.gvec, st.B, st.B0, st.w, st.w0, normals)
    if not ok:
        raise SamplerError("coefficient Cholesky failed")


def sweep(chain: Chain, ctx: Context, adapting: bool):
    """One full local sweep, steps (i) to (vi), for a single chain."""
    st, fx = chain.state, ctx.fixed
    if "gamma" not in fx:
        update_gamma_local(chain, ctx, adapting)
    if "tau" not in fx:
        update_tau(chain, ctx, adapting)
    if ctx.hot is not None and "gamma" not in fx:
        update_hotspot(chain, ctx)
    if "w" not in fx:
        update_w(chain, ctx)
    if ctx.has_re and "w0" not in fx:
        update_w0(chain, ctx)
    warm = chain.sweeps < ctx.warmup
    if ctx.cfg.covariance == "hiw" and "graph" not in fx and not warm:
        update_graph(chain, ctx)
    if "sigma_rho" not in fx:
        if warm:
            st.sigma2 = draw_sigma_given_rho(st.U, ctx.n_eff, st.rho, st.parents, ctx.cov.nu,
                                             st.tau, chain.temperature, chain.rng)
        else:
            update_sigma_rho(chain, ctx)
    if "beta" not in fx:
        update_coefficients(st, ctx, chain.temperature, chain.rng)
    st.loglik = loglik(st, ctx)
    chain.sweeps += 1


# ---------------------------------------------------------------- global moves


def exchange_log_ratio(temp_i, temp_k, loglik_i, loglik_k) -> float:
    return (1.0 / temp_i - 1.0 / temp_k) * (loglik_k - loglik_i)


def exchange_move(chains, ctx: Context, rng) -> bool:
    """Swap whole states between a random adjacent temperature pair."""
    if len(chains) < 2:
        return False
    i = int(rng.integers(len(chains) - 1))
    a, b = chains[i], chains[i + 1]
    logr = exchange_log_ratio(a.temperature, b.temperature, a.state.loglik, b.state.loglik)
    ok = math.log(rng.random()) < logr
    c = chains[0].counts["exchange"]
    c[0] += 1
    c[1] += ok
    if ok:
        a.state, b.state = b.state, a.state
    return ok


def _crossover_terms(st: ChainState, ctx: Context, temp: float) -> float:
    return loglik(st, ctx) / temp + _slab_log_prior(st.B, st.gvec, st.w) + gamma_log_prior(st, ctx)


def crossover_move(chains, ctx: Context, rng) -> bool:
    """Exchange a random subset of indicator/coefficient columns between two chains."""
    if len(chains) < 2:
        return False
    i, k = (int(v) for v in rng.choice(len(chains), size=2, replace=False))
    cols = np.flatnonzero(rng.random(ctx.m) < 0.5)
    if cols.size == 0:
        cols = np.array([int(rng.integers(ctx.m))])
    a, b = chains[i], chains[k]
    old = _crossover_terms(a.state, ctx, a.temperature) + _crossover_terms(b.state, ctx, b.temperature)
    na, nb = a.state.copy(), b.state.copy()
    p = ctx.p
    for j in cols:
        sl = slice(j * p, (j + 1) * p)
        na.gvec[sl], nb.gvec[sl] = b.state.gvec[sl], a.state.gvec[sl]
        na.B[:, j], nb.B[:, j] = b.state.B[:, j], a.state.B[:, j]
    for s in (na, nb):
        fit = ctx.X @ s.B[:, cols]
        if ctx.T:
            fit += ctx.Z @ s.B0[:, cols]
        s.U[:, cols] = ctx.Y[:, cols] - fit
        s.loglik = loglik(s, ctx)
    new = _crossover_terms(na, ctx, a.temperature) + _crossover_terms(nb, ctx, b.temperature)
    ok = math.log(rng.random()) < new - old
    c = chains[0].counts["crossover"]
    c[0] += 1
    c[1] += ok
    if ok:
        a.state, b.state = na, nb
    return ok


def global_move(chains, ctx: Context, rng):
    """At most one global move per sweep: crossover with probability ``crossover_prob``, else exchange."""
    if len(chains) < 2:
        return None
    if rng.random() < ctx.cfg.crossover_prob:
        return "crossover", crossover_move(chains, ctx, rng)
    return "exchange", exchange_move(chains, ctx, rng)


def adapt_ladder(ratio: float, acceptance: float, target: float = 0.25, kappa: float = KAPPA) -> float:
    """Rescale the geometric ladder ratio toward the target exchange acceptance."""
    return min(1.0 + (ratio - 1.0) * math.exp(kappa * (acceptance - target)), MAX_TEMP_RATIO)


def ladder(ratio: float, nchains: int) -> np.ndarray:
    return ratio ** np.arange(nchains, dtype=float)


def adapt_temperatures(chains, ratio: float, acceptance: float, target: float, adapting: bool) -> float:
    """Apply :func:`adapt_ladder` to the chains; a no-op once ``adapting`` is False."""
    if not adapting or len(chains) < 2:
        return ratio
    ratio = adapt_ladder(ratio, acceptance, target)
    for c, t in zip(chains, ladder(ratio, len(chains))):
        c.temperature = float(t)
    return ratio


# ---------------------------------------------------------------- driver


def check_state(st: ChainState, ctx: Context, it: int):
    """Invariant checks: coefficient support, graph decomposability, two likelihood routes."""
    g = st.gamma(ctx.p, ctx.m)
    if not np.array_equal(st.B != 0, g != 0):
        raise SamplerError(f"iteration {it}: coefficient support differs from indicators")
    if not is_decomposable(st.graph):
        raise SamplerError(f"iteration {it}: graph is not decomposable")
    a = log_posterior(st, ctx)
    b = log_posterior(st, ctx, route="dense")
    if not abs(a - b) <= 1e-8 * max(1.0, abs(a)):
        raise SamplerError(f"iteration {it}: log posterior routes disagree ({a!r} vs {b!r})")


class _Recorder:
    def __init__(self, ctx: Context, nsamp: int, store_loglik: bool):
        p, m, T, n = ctx.p, ctx.m, ctx.T, ctx.n
        npairs = m * (m - 1) // 2
        self.gamma = np.zeros((nsamp, p, m), dtype=np.int8)
        self.beta = np.zeros((nsamp, p, m))
        self.b0 = np.zeros((nsamp, T, m))
        self.edges = np.zeros((nsamp, npairs), dtype=np.int8)
        self.w = np.zeros(nsamp)
        self.w0 = np.zeros(nsamp)
        self.tau = np.zeros(nsamp)
        self.loglik = np.zeros((nsamp, n, m)) if store_loglik else None
        self.log_post = np.zeros(nsamp)
        self.iterations = np.zeros(nsamp, dtype=np.int64)
        self.k = 0

    def record(self, st: ChainState, ctx: Context, it: int):
        k = self.k
        self.gamma[k] = st.gamma(ctx.p, ctx.m)
        self.beta[k] = st.B
        self.b0[k] = st.B0
        self.edges[k] = st.graph.edge_vector()
        self.w[k], self.w0[k], self.tau[k] = st.w, st.w0 if ctx.has_re else np.nan, st.tau
        if self.loglik is not None:
            self.loglik[k] = cell_loglik(st.U, st.sigma2, st.rho, st.parents)
        self.log_post[k] = log_posterior(st, ctx)
        self.iterations[k] = it
        self.k += 1


def make_chains(ctx: Context, seed) -> tuple:
    cfg = ctx.cfg
    seq = np.random.SeedSequence(seed)
    kids = seq.spawn(cfg.nchains + 1)
    master = np.random.default_rng(kids[0])
    temps = ladder(cfg.temp_ratio, cfg.nchains)
    chains = []
    for c in range(cfg.nchains):
        rng = np.random.default_rng(kids[c + 1])
        st = init_state(ctx, rng)
        chains.append(Chain(st, float(temps[c]), rng, cfg.tau_step,
                            np.zeros((ctx.p, ctx.m)), np.zeros((ctx.p, ctx.m))))
    return master, chains


def run(config: RunConfig, dataset: Dataset, prior: MrfPrior | None = None, progress=None) -> Trace:
    """Run the sampler and return thinned cold-chain samples.

    ``prior`` supplies the MRF structure for ``config.prior == "mrf"``; when
    omitted, an empty structure with the config's ``d`` and ``e`` is used.
    ``progress(it, chains)`` is called after every sweep when given.
    """
    cfg = config.validate(allow_empty=True)
    ctx = build_context(cfg, dataset, prior)
    master, chains = make_chains(ctx, cfg.seed)
    nsamp = (cfg.niter - cfg.burnin) // cfg.thin
    rec = _Recorder(ctx, nsamp, cfg.store_loglik)
    ratio = cfg.temp_ratio
    win_try = win_acc = 0
    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 and len(chains) > 1 else None
    try:
        for it in range(1, cfg.niter + 1):
            adapting = it <= cfg.burnin
            try:
                if pool is None:
                    for c in chains:
                        sweep(c, ctx, adapting)
                else:
                    list(pool.map(lambda c: sweep(c, ctx, adapting), chains))
            except (np.linalg.LinAlgError, FloatingPointError, SamplerError) as exc:
                raise SamplerError(f"iteration {it}: {exc}") from exc
            mv = global_move(chains, ctx, master)
            if mv is not None and mv[0] == "exchange":
                win_try += 1
                win_acc += mv[1]
            if adapting and it % cfg.adapt_window == 0 and win_try:
                ratio = adapt_temperatures(chains, ratio, win_acc / win_try, cfg.exchange_target, True)
                win_try = win_acc = 0
            if cfg.check_every and it % cfg.check_every == 0:
                for c in chains:
                    check_state(c.state, ctx, it)
            if not adapting and (it - cfg.burnin) % cfg.thin == 0:
                rec.record(chains[0].state, ctx, it)
            if progress is not None:
                progress(it, chains)
    finally:
        if pool is not None:
            pool.shutdown()
    acc = {}
    gs = sum(c.gamma_stats for c in chains[:1])
    for idx, name in enumerate(MOVES[:3]):
        acc[name] = (int(gs[idx, 0]), int(gs[idx, 1]))
    for name in MOVES[3:]:
        acc[name] = tuple(chains[0].counts[name])
    return Trace(rec.gamma, rec.beta, rec.b0, rec.edges, rec.w, rec.w0, rec.tau, rec.loglik,
                 rec.log_post, acc, np.array([c.temperature for c in chains]), cfg.to_text(),
                 rec.iterations)
