"""Posterior summaries and performance metrics.

Sample arrays put the draw index first: indicators and coefficients are
(N, p, m), random effects (N, T, m), edge indicators (N, m(m-1)/2) and
pointwise log-likelihoods (N, n, m).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .graph import DecomposableGraph


class EvaluationError(ValueError):
    """Missing or inconsistent inputs to a metric."""


@dataclass
class PosteriorSummary:
    gamma_mean: np.ndarray
    beta_mpm: np.ndarray
    b0_mean: np.ndarray
    edge_prob: np.ndarray
    metrics: dict = field(default_factory=dict)


def _nonempty(a, what):
    a = np.asarray(a)
    if a.ndim == 0 or a.shape[0] == 0:
        raise EvaluationError(f"{what}: empty trace")
    return a


def mpm_coefficients(gamma_samples, beta_samples, threshold: float = 0.5) -> np.ndarray:
    """Median-probability-model coefficients.

    Cells with inclusion frequency above ``threshold`` get the mean of
    their draws over the samples in which they were included; all others
    are zero.
    """
    g = _nonempty(gamma_samples, "mpm_coefficients").astype(float)
    b = np.asarray(beta_samples, dtype=float)
    if b.shape != g.shape:
        raise EvaluationError(f"shape mismatch: gamma {g.shape}, beta {b.shape}")
    count = g.sum(axis=0)
    total = b.sum(axis=0)
    out = np.zeros(g.shape[1:])
    sel = (count / g.shape[0] > threshold) & (count > 0)
    out[sel] = total[sel] / count[sel]
    return out


def _fitted(B, B0, data: Dataset):
    fit = data.X @ B
    if data.Z is not None and B0 is not None and np.size(B0):
        fit = fit + data.Z @ B0
    return fit


def prediction_error(B, B0, data: Dataset) -> float:
    """Mean squared residual ``|Y - X B - Z B0|_F^2 / (n m)``."""
    B = np.asarray(B, dtype=float)
    if B.shape != (data.p, data.m):
        raise EvaluationError(f"coefficient matrix is {B.shape}, data need {(data.p, data.m)}")
    if data.Z is not None and B0 is not None and np.size(B0) and np.shape(B0) != (data.T, data.m):
        raise EvaluationError(f"random effects are {np.shape(B0)}, data need {(data.T, data.m)}")
    R = data.Y - _fitted(B, B0, data)
    return float(np.sum(R * R) / R.size)


def mse_mspe(beta_mpm, b0_mean, train: Dataset, validation: Dataset | None = None):
    """Training and validation mean squared errors; the second is None without validation data."""
    mse = prediction_error(beta_mpm, b0_mean, train)
    mspe = None if validation is None else prediction_error(beta_mpm, b0_mean, validation)
    return mse, mspe


@dataclass(frozen=True)
class Elpd:
    elpd_loo: float
    waic_loo: float
    waic_std: float
    lppd: float
    p_waic: float


def elpd(loglik) -> Elpd:
    """Harmonic-mean leave-one-out estimate and two WAIC variants from pointwise log densities.

    ``waic_loo`` subtracts the summed posterior variance of the pointwise
    log density from the LOO estimate; ``waic_std`` subtracts it from the
    log pointwise predictive density.  The variance uses ``ddof=1`` and is
    zero for a single draw.
    """
    ll = _nonempty(loglik, "elpd").astype(float)
    N = ll.shape[0]
    logN = math.log(N)
    loo = float(np.sum(logN - logsumexp(-ll, axis=0)))
    lppd = float(np.sum(logsumexp(ll, axis=0) - logN))
    p_waic = float(np.sum(ll.var(axis=0, ddof=1))) if N > 1 else 0.0
    return Elpd(loo, loo - p_waic, lppd - p_waic, lppd, p_waic)


def _confusion(est, truth):
    est = np.asarray(est, dtype=bool).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    tp = int(np.sum(est & truth))
    tn = int(np.sum(~est & ~truth))
    pos = int(truth.sum())
    neg = truth.size - pos
    acc = (tp + tn) / truth.size
    sens = tp / pos if pos else float("nan")
    spec = tn / neg if neg else float("nan")
    return acc, sens, spec


def selection_metrics(gamma_mean, gamma_true, threshold: float = 0.5):
    """(accuracy, sensitivity, specificity) of selecting cells with mean strictly above ``threshold``."""
    gm = np.asarray(gamma_mean, dtype=float)
    gt = np.asarray(gamma_true)
    if gm.shape != gt.shape:
        raise EvaluationError(f"shape mismatch: estimate {gm.shape}, truth {gt.shape}")
    if not np.all((gt == 0) | (gt == 1)):
        raise EvaluationError("true indicators must be binary")
    return _confusion(gm > threshold, gt)


def edge_matrix(vec, m: int) -> np.ndarray:
    """Symmetric m x m matrix from values over the row-major upper-triangle pairs."""
    vec = np.asarray(vec, dtype=float)
    if vec.size != m * (m - 1) // 2:
        raise EvaluationError(f"expected {m * (m - 1) // 2} pair values for m={m}, got {vec.size}")
    A = np.zeros((m, m))
    iu = np.triu_indices(m, k=1)
    A[iu] = vec
    return A + A.T


def graph_edge_probability(edge_samples, m: int) -> np.ndarray:
    """Per-edge inclusion frequency as a symmetric m x m matrix (zero diagonal)."""
    e = _nonempty(edge_samples, "graph_edge_probability")
    return edge_matrix(e.mean(axis=0), m)


def graph_metrics(edge_prob, true_graph, threshold: float = 0.5):
    """Threshold metrics over the m(m-1)/2 off-diagonal pairs."""
    P = np.asarray(edge_prob, dtype=float)
    A = true_graph.to_matrix() if isinstance(true_graph, DecomposableGraph) else np.asarray(true_graph)
    if P.shape != A.shape or P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise EvaluationError(f"shape mismatch: estimate {P.shape}, truth {A.shape}")
    iu = np.triu_indices(P.shape[0], k=1)
    return _confusion(P[iu] > threshold, A[iu] != 0)


def coefficient_errors(beta_mpm, b0_mean, B_true, B0_true=None):
    """Scaled Frobenius errors ``(|B0_hat - B0| / sqrt(mT), |B_hat - B| / sqrt(mp))``.

    The random-effect error is None when no random effects are given.
    """
    if B_true is None:
        raise EvaluationError("coefficient_errors: true coefficients missing")
    Bh = np.asarray(beta_mpm, dtype=float)
    Bt = np.asarray(B_true, dtype=float)
    if Bh.shape != Bt.shape:
        raise EvaluationError(f"shape mismatch: estimate {Bh.shape}, truth {Bt.shape}")
    coef = float(np.linalg.norm(Bh - Bt) / math.sqrt(Bt.size))
    re = None
    if B0_true is not None:
        B0h = np.asarray(b0_mean, dtype=float)
        B0t = np.asarray(B0_true, dtype=float)
        if B0h.shape != B0t.shape:
            raise EvaluationError(f"shape mismatch: estimate {B0h.shape}, truth {B0t.shape}")
        re = float(np.linalg.norm(B0h - B0t) / math.sqrt(B0t.size))
    return re, coef


def summarize(trace, m: int | None = None) -> PosteriorSummary:
    """Posterior means, MPM coefficients and edge probabilities from a sampler trace."""
    g = _nonempty(trace.gamma, "summarize")
    m = g.shape[2] if m is None else m
    return PosteriorSummary(
        gamma_mean=g.mean(axis=0),
        beta_mpm=mpm_coefficients(g, trace.beta),
        b0_mean=np.asarray(trace.b0, dtype=float).mean(axis=0),
        edge_prob=graph_edge_probability(trace.edges, m),
    )


def evaluate(summary: PosteriorSummary, train: Dataset, validation: Dataset | None = None,
             loglik=None, gamma_true=None, graph_true=None, B_true=None, B0_true=None) -> dict:
    """All available metrics as an ordered name -> value mapping."""
    out = {}
    has_re = train.Z is not None
    b0 = summary.b0_mean if has_re else None
    mse, mspe = mse_mspe(summary.beta_mpm, b0, train, validation)
    out["mse"] = mse
    if mspe is not None:
        out["mspe"] = mspe
    if loglik is not None and np.shape(loglik)[0] > 0:
        e = elpd(loglik)
        out["elpd_loo"] = e.elpd_loo
        out["elpd_waic_loo"] = e.waic_loo
        out["elpd_waic_std"] = e.waic_std
        out["lppd"] = e.lppd
        out["p_waic"] = e.p_waic
    if gamma_true is not None:
        out["accuracy"], out["sensitivity"], out["specificity"] = selection_metrics(
            summary.gamma_mean, gamma_true)
    if graph_true is not None:
        out["graph_accuracy"], out["graph_sensitivity"], out["graph_specificity"] = graph_metrics(
            summary.edge_prob, graph_true)
    if B_true is not None:
        re, coef = coefficient_errors(summary.beta_mpm, b0, B_true, B0_true if has_re else None)
        out["coef_error"] = coef
        if re is not None:
            out["re_error"] = re
    summary.metrics = dict(out)
    return out
