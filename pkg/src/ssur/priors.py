"""Prior densities, incremental ratios and hyperparameter elicitation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import gammainc, gammaincc, gammaln, logit
from scipy.stats import gamma as gamma_dist

from .data import MrfPrior


class DegenerateStructureError(ValueError):
    """The structure matrix has no weight, so quantities that divide by it are undefined."""


class InfeasibleError(ValueError):
    """An elicitation target cannot be met within the search bounds."""


@dataclass(frozen=True)
class SpikeSlabHyper:
    a_w: float = 2.0
    b_w: float = 5.0
    a_w0: float | None = None
    b_w0: float | None = None

    def __post_init__(self):
        for name in ("a_w", "b_w", "a_w0", "b_w0"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CovarianceHyper:
    """``nu=None`` resolves to m + 2 once the response count is known."""

    nu: float | None = None
    a_tau: float = 0.1
    b_tau: float = 10.0
    a_eta: float = 0.1
    b_eta: float = 1.0

    def resolved(self, m: int) -> "CovarianceHyper":
        nu = m + 2.0 if self.nu is None else float(self.nu)
        if not nu > m - 1:
            raise ValueError(f"nu={nu} must exceed m - 1 = {m - 1}")
        return CovarianceHyper(nu, self.a_tau, self.b_tau, self.a_eta, self.b_eta)


@dataclass(frozen=True)
class HotspotHyper:
    """Baseline propensity prior: o_k ~ Beta(a_o, b_o), pi_j ~ Gamma(a_pi, rate b_pi).

    ``b_o=None`` resolves to ``p - 2`` (prior mean 2/p per predictor).
    """

    a_o: float = 2.0
    b_o: float | None = None
    a_pi: float = 2.0
    b_pi: float = 1.0

    def resolved(self, p: int) -> "HotspotHyper":
        b_o = max(p - 2.0, 1.0) if self.b_o is None else float(self.b_o)
        return HotspotHyper(self.a_o, b_o, self.a_pi, self.b_pi)


# ---------------------------------------------------------------- MRF


def log_mrf_prior(gamma, prior: MrfPrior) -> float:
    """Unnormalised log MRF potential ``d * sum(gamma) + e * gamma' G gamma``."""
    g = np.asarray(gamma, dtype=float).ravel(order="F") if np.ndim(gamma) == 2 else np.asarray(gamma, dtype=float)
    if g.shape[0] != prior.size:
        raise ValueError(f"gamma has length {g.shape[0]}, prior expects {prior.size}")
    quad = float(g @ (prior.G @ g)) if prior.e != 0 else 0.0
    return prior.d * float(g.sum()) + prior.e * quad


def mrf_flip_log_ratio(gamma, prior: MrfPrior, flip_index: int) -> float:
    """Change in the log potential when indicator ``flip_index`` (0-based) is flipped."""
    g = np.asarray(gamma).ravel(order="F") if np.ndim(gamma) == 2 else np.asarray(gamma)
    if not 0 <= flip_index < prior.size:
        raise IndexError(f"flip_index {flip_index} out of range 0..{prior.size - 1}")
    G = prior.G
    lo, hi = G.indptr[flip_index], G.indptr[flip_index + 1]
    s = float(np.dot(G.data[lo:hi], g[G.indices[lo:hi]]))
    r = prior.d + 2.0 * prior.e * s
    return -r if g[flip_index] else r


def e_upper_bound(d: float, m: int, p: int, c2: float, G) -> float:
    """Largest structure strength before the expected model size passes ``c2``."""
    if not c2 > 0:
        raise ValueError("c2 must be positive")
    total = float(sp.csr_matrix(G).sum())
    if total == 0:
        raise DegenerateStructureError("structure matrix has zero total weight; use e = 0")
    return -d * m * p / (2.0 * c2) / total


def d_from_sparsity(c1: float) -> float:
    """Sparsity parameter whose inverse logit equals the target proportion ``c1``."""
    if not 0 < c1 < 1:
        raise ValueError("c1 must lie in (0, 1)")
    return float(logit(c1))


def e_grid(bound: float, n_points: int = 20) -> np.ndarray:
    return np.linspace(0.0, bound, n_points)


def select_e(bound: float, model_sparsity, c2: float, n_points: int = 20) -> float:
    """Largest grid value whose pilot sparsity stays below ``c2``.

    ``model_sparsity(e)`` runs a pilot and returns the proportion of
    selected indicators.
    """
    best = 0.0
    for e in e_grid(bound, n_points):
        if model_sparsity(e) < c2:
            best = float(e)
        else:
            break
    return best


# ---------------------------------------------------------------- elicitation


def ig_quantile(q: float, shape: float, scale: float, rtol: float = 1e-10) -> float:
    """Quantile of InvGamma(shape, scale) by bisection on the regularised gamma function."""
    if not (0 < q < 1 and shape > 0 and scale > 0):
        raise ValueError("need 0 < q < 1 and positive shape/scale")
    # P(W <= x) = Q(shape, scale / x)
    lo, hi = 0.0, scale / max(shape, 1.0)
    while gammaincc(shape, scale / hi) < q:
        hi *= 2.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if gammaincc(shape, scale / mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Elicitation:
    a: float
    b: float
    const_a: float
    const_b: float
    quantile: float
    threshold: float
    feasible: bool


def elicit_w_hyperparams(r_sparsity: float, mean_beta: float, var_beta: float, m: int, p: int,
                         const_a: float = 0.5, const_b: float | None = None,
                         max_const_b: float = 1e6) -> Elicitation:
    """Slab-variance hyperparameters from a guess at sparsity and effect size.

    ``a_w = const_a * s`` and ``b_w = const_b * s * mean_beta**2`` with
    ``s = m p r / 2``.  When ``const_b`` is not given, the smallest integer
    value is chosen so that the 5% quantile of IG(a_w, b_w) exceeds
    ``mean_beta + 1.96 sd``.  Zero mean and variance give the defaults.
    """
    if not 0 < r_sparsity < 1:
        raise ValueError("r_sparsity must lie in (0, 1)")
    if var_beta < 0:
        raise ValueError("var_beta must be nonnegative")
    if mean_beta == 0 and var_beta == 0:
        d = SpikeSlabHyper()
        return Elicitation(d.a_w, d.b_w, float("nan"), float("nan"),
                           ig_quantile(0.05, d.a_w, d.b_w), 0.0, True)
    if mean_beta == 0:
        raise InfeasibleError("mean_beta = 0 makes b_w zero for every const_b")
    s = 0.5 * m * p * r_sparsity
    theta = abs(mean_beta) + 1.96 * math.sqrt(var_beta)
    a_w = const_a * s
    unit = s * mean_beta ** 2
    if const_b is None:
        # q05 of IG(a, b) is b / q95 of Gamma(a, 1); search the integer grid upward
        const_b = max(1.0, math.ceil(theta * gamma_dist.ppf(0.95, a_w) / unit))
        while const_b <= max_const_b and ig_quantile(0.05, a_w, const_b * unit) <= theta:
            const_b += 1.0
        if const_b > max_const_b:
            raise InfeasibleError(f"no const_b <= {max_const_b} meets threshold {theta:.6g}")
    b_w = const_b * unit
    q = ig_quantile(0.05, a_w, b_w)
    return Elicitation(a_w, b_w, const_a, float(const_b), q, theta, q > theta)


def elicit_w0_hyperparams(prior_sd_re: float, m: int, T: int, const_a0: float = 1.5,
                          b_w0: float | None = None, round_to: float = 100.0) -> Elicitation:
    """Random-effect variance hyperparameters.

    ``a_w0 = const_a0 * m T / 2``.  Without ``b_w0`` the smallest multiple of
    ``round_to`` is chosen whose IG(a_w0, b_w0) 95% quantile exceeds the
    prior variance ``prior_sd_re**2``.
    """
    if not prior_sd_re > 0:
        raise ValueError("prior_sd_re must be positive")
    a = const_a0 * 0.5 * m * T
    target = prior_sd_re ** 2
    if b_w0 is None:
        b_min = target * gamma_dist.ppf(0.05, a)
        b_w0 = max(round_to, math.ceil(b_min / round_to) * round_to)
        while ig_quantile(0.95, a, b_w0) <= target:
            b_w0 += round_to
    q = ig_quantile(0.95, a, b_w0)
    return Elicitation(a, float(b_w0), const_a0, float("nan"), q, target, q > target)


# ---------------------------------------------------------------- covariance


def sigma_shape(nu: float, m: int, n_parents: int) -> float:
    """Inverse-gamma shape of a conditional variance with ``n_parents`` clique predecessors."""
    return 0.5 * (nu - m + n_parents + 1)


def log_sigma_rho_prior(sigma2, rho, nu: float, tau: float, parents) -> float:
    """Log prior of the clique-local variance/regression parametrisation.

    ``parents[j]`` lists the predecessors of response j; ``rho[j]`` holds the
    matching regression weights.  sigma2_j ~ IG(shape_j, tau/2) and
    rho_j | sigma2_j ~ N(0, sigma2_j / tau).
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0) or tau <= 0:
        raise ValueError("variances and tau must be positive")
    m = sigma2.shape[0]
    b = 0.5 * tau
    total = 0.0
    for j in range(m):
        q = len(parents[j])
        a = sigma_shape(nu, m, q)
        s2 = sigma2[j]
        total += a * math.log(b) - gammaln(a) - (a + 1) * math.log(s2) - b / s2
        if q:
            r = np.asarray(rho[j], dtype=float)
            total += -0.5 * q * math.log(2 * math.pi * s2 / tau) - 0.5 * tau * float(r @ r) / s2
    return float(total)


def sample_sigma_rho_prior(nu: float, tau: float, parents, rng):
    """Independent draw of (sigma2, rho) from the clique-local prior."""
    m = len(parents)
    sigma2 = np.empty(m)
    rho = []
    for j in range(m):
        q = len(parents[j])
        sigma2[j] = 0.5 * tau / rng.gamma(sigma_shape(nu, m, q))
        rho.append(rng.normal(0.0, math.sqrt(sigma2[j] / tau), size=q))
    return sigma2, rho


def precision_from_reparam(sigma2, rho, parents) -> np.ndarray:
    """Precision matrix ``T' D^-1 T`` with T unit lower triangular in the vertex order."""
    m = len(parents)
    Tm = np.eye(m)
    for j in range(m):
        if len(parents[j]):
            Tm[j, list(parents[j])] = -np.asarray(rho[j])
    return Tm.T @ (Tm / np.asarray(sigma2)[:, None])


def covariance_from_reparam(sigma2, rho, parents) -> np.ndarray:
    return np.linalg.inv(precision_from_reparam(sigma2, rho, parents))


# ---------------------------------------------------------------- hotspot


def log_hotspot_prior(gamma, o, pi) -> float:
    """Bernoulli log prior with cell probabilities ``o[k] * pi[j]``."""
    gamma = np.asarray(gamma)
    omega = np.outer(np.asarray(o, dtype=float), np.asarray(pi, dtype=float))
    if omega.shape != gamma.shape:
        raise ValueError("propensity dimensions do not match gamma")
    if np.any(omega <= 0) or np.any(omega >= 1):
        raise ValueError("propensity products must lie in (0, 1)")
    return float(np.where(gamma != 0, np.log(omega), np.log1p(-omega)).sum())


def log_hotspot_hyperprior(o, pi, hyper: HotspotHyper) -> float:
    """Beta/Gamma hyperprior restricted to ``max(o) * max(pi) < 1`` (unnormalised)."""
    o = np.asarray(o, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any(o <= 0) or np.any(o >= 1) or np.any(pi <= 0) or o.max() * pi.max() >= 1:
        return -np.inf
    return float(((hyper.a_o - 1) * np.log(o) + (hyper.b_o - 1) * np.log1p(-o)).sum()
                 + ((hyper.a_pi - 1) * np.log(pi) - hyper.b_pi * pi).sum())


def ig_cdf(x, shape, scale):
    """Inverse-gamma CDF via the regularised upper incomplete gamma function."""
    return gammaincc(shape, scale / np.asarray(x, dtype=float))


def gamma_cdf(x, shape, rate):
    return gammainc(shape, rate * np.asarray(x, dtype=float))
