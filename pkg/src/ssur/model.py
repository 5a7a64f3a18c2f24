"""Likelihood pieces of the sparse SUR model.

Residuals ``U = Y - X B - Z B0`` have rows distributed N(0, Psi).  For a
decomposable graph, Psi is parametrised vertex by vertex: each response's
residual regresses on the residuals of its clique predecessors with
weights ``rho[j]`` and conditional variance ``sigma2[j]``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import gammaln

from .graph import DecomposableGraph, perfect_parents
from .priors import sigma_shape

LOG2PI = math.log(2 * math.pi)


def parents_by_vertex(graph: DecomposableGraph) -> tuple:
    """Parents of every vertex, indexed by vertex, from an MCS order."""
    return _parents_cached(graph.adj)


@lru_cache(maxsize=100_000)
def _parents_cached(adj: tuple) -> tuple:
    order, pars = perfect_parents(adj)
    out = [()] * len(adj)
    for v, pa in zip(order, pars):
        out[v] = pa
    return tuple(out)


def conditional_residuals(U, rho, parents) -> np.ndarray:
    """``U[:, j] - U[:, parents[j]] @ rho[j]`` for every response."""
    E = U.copy()
    for j, pa in enumerate(parents):
        if pa:
            E[:, j] -= U[:, list(pa)] @ rho[j]
    return E


def cell_loglik(U, sigma2, rho, parents) -> np.ndarray:
    """Pointwise log density of each residual cell given its predecessors."""
    E = conditional_residuals(U, rho, parents)
    s2 = np.asarray(sigma2)
    return -0.5 * (LOG2PI + np.log(s2)) - 0.5 * E ** 2 / s2


def loglik_dense(U, Psi) -> float:
    """Matrix-normal log likelihood of ``U`` with row covariance ``Psi``."""
    n, m = U.shape
    c, low = cho_factor(Psi, lower=True)
    logdet = 2.0 * np.log(np.diag(c)).sum()
    quad = np.sum(U * cho_solve((c, low), U.T).T)
    return float(-0.5 * n * (m * LOG2PI + logdet) - 0.5 * quad)


def _vertex_terms(S, j, pa, temp):
    """Gram pieces of regressing residual j on its parents at a given temperature."""
    if pa:
        idx = list(pa)
        W = S[np.ix_(idx, idx)] / temp
        c = S[idx, j] / temp
        return W, c, S[j, j] / temp
    return None, None, S[j, j] / temp


def vertex_log_ml(S, n: int, j: int, pa, nu: float, m: int, tau: float, temp: float = 1.0) -> float:
    """Tempered log marginal likelihood of residual j given its parents.

    ``S = U' U``.  The conditional variance and regression weights are
    integrated out under their clique-local conjugate prior.
    """
    a = sigma_shape(nu, m, len(pa))
    b = 0.5 * tau
    half_n = 0.5 * n / temp
    W, c, ss = _vertex_terms(S, j, pa, temp)
    out = -half_n * LOG2PI + a * math.log(b) - gammaln(a) + gammaln(a + half_n)
    if W is not None:
        q = len(pa)
        A = W + tau * np.eye(q)
        L = np.linalg.cholesky(A)
        z = solve_triangular(L, c, lower=True)
        R = ss - float(z @ z)
        out += 0.5 * q * math.log(tau) - np.log(np.diag(L)).sum()
    else:
        R = ss
    return float(out - (a + half_n) * math.log(b + 0.5 * R))


def hiw_log_ml(S, n: int, parents, nu: float, tau: float, temp: float = 1.0) -> float:
    """Tempered log marginal likelihood of the residual matrix under the graph prior."""
    m = len(parents)
    return sum(vertex_log_ml(S, n, j, parents[j], nu, m, tau, temp) for j in range(m))


def draw_sigma_rho(S, n: int, parents, nu: float, tau: float, temp: float, rng):
    """Conjugate draw of every conditional variance and regression weight vector."""
    m = len(parents)
    sigma2 = np.empty(m)
    rho = []
    half_n = 0.5 * n / temp
    for j in range(m):
        pa = parents[j]
        a = sigma_shape(nu, m, len(pa)) + half_n
        W, c, ss = _vertex_terms(S, j, pa, temp)
        if W is None:
            sigma2[j] = (0.5 * tau + 0.5 * ss) / rng.gamma(a)
            rho.append(np.empty(0))
            continue
        q = len(pa)
        L = np.linalg.cholesky(W + tau * np.eye(q))
        z = solve_triangular(L, c, lower=True)
        mean = solve_triangular(L.T, z, lower=False)
        R = max(ss - float(z @ z), 0.0)
        sigma2[j] = (0.5 * tau + 0.5 * R) / rng.gamma(a)
        noise = solve_triangular(L.T, rng.standard_normal(q), lower=False)
        rho.append(mean + math.sqrt(sigma2[j]) * noise)
    return sigma2, rho


def draw_sigma_given_rho(U, sigma_n: int, rho, parents, nu: float, tau: float, temp: float, rng):
    """Draw each conditional variance from its full conditional with ``rho`` held fixed."""
    m = len(parents)
    E = conditional_residuals(U, rho, parents)
    out = np.empty(m)
    for j in range(m):
        q = len(parents[j])
        rr = float(rho[j] @ rho[j]) if q else 0.0
        a = sigma_shape(nu, m, q) + 0.5 * q + 0.5 * sigma_n / temp
        b = 0.5 * tau * (1.0 + rr) + (0.5 * float(E[:, j] @ E[:, j]) / temp if sigma_n else 0.0)
        out[j] = b / rng.gamma(a)
    return out


def sigma_rho_posterior_params(S, n: int, parents, nu: float, tau: float, temp: float = 1.0):
    """Shapes and scales of the conditional-variance posteriors (for tests and diagnostics)."""
    m = len(parents)
    out = []
    for j in range(m):
        pa = parents[j]
        a = sigma_shape(nu, m, len(pa)) + 0.5 * n / temp
        W, c, ss = _vertex_terms(S, j, pa, temp)
        if W is None:
            R = ss
        else:
            L = np.linalg.cholesky(W + tau * np.eye(len(pa)))
            z = solve_triangular(L, c, lower=True)
            R = ss - float(z @ z)
        out.append((a, 0.5 * tau + 0.5 * R))
    return out


def prior_predictive_means(X, Z, gamma_col, w: float, w0: float, n_draws: int, rng) -> np.ndarray:
    """Draws of ``X beta + Z beta0`` for one response under the slab and random-effect priors."""
    gamma_col = np.asarray(gamma_col, dtype=bool)
    Xa = X[:, gamma_col]
    draws = rng.standard_normal((n_draws, Xa.shape[1])) * math.sqrt(w) @ Xa.T
    if Z is not None:
        draws = draws + rng.standard_normal((n_draws, Z.shape[1])) * math.sqrt(w0) @ Z.T
    return draws


def prior_predictive_cov(X, Z, gamma_col, w: float, w0: float) -> np.ndarray:
    """Covariance of ``X beta + Z beta0`` across samples: ``w X_A X_A' + w0 Z Z'``."""
    gamma_col = np.asarray(gamma_col, dtype=bool)
    Xa = X[:, gamma_col]
    C = w * Xa @ Xa.T
    if Z is not None:
        C = C + w0 * Z @ Z.T
    return C
