"""Helpers shared by the demo scripts."""
import time

import numpy as np

from ssur import evaluate as ev
from ssur.config import RunConfig
from ssur.data import MrfPrior, edges_to_matrix


def structure_prior(blocks, size, d=-2.0, e=0.1):
    edges = np.vstack(blocks) if blocks else np.zeros((0, 3))
    return MrfPrior(edges_to_matrix(edges, size), d, e)


def fit_and_score(sim, prior="mrf", blocks=None, standardize=True, d=-2.0, e=0.1, **run_kw):
    """Run the sampler on a simulation and return its metrics (plus wall time)."""
    from ssur.mcmc import run

    train, val = sim.train, sim.validation
    if standardize:
        train = train.standardized()
        val = val.apply_standardization(train.standardization)
    mrf = structure_prior(blocks, train.m * train.p, d, e) if prior == "mrf" else None
    cfg = RunConfig(prior=prior, **run_kw)
    started = time.perf_counter()
    trace = run(cfg, train, mrf)
    summary = ev.summarize(trace)
    truth = sim.truth
    metrics = ev.evaluate(summary, train, val, trace.loglik, gamma_true=truth.gamma, graph_true=truth.graph,
                          B_true=None if standardize else truth.B,
                          B0_true=None if standardize else truth.B0)
    metrics["seconds"] = time.perf_counter() - started
    return metrics


def show(rows, keys=("accuracy", "sensitivity", "specificity", "mse", "mspe")):
    width = max(len(name) for name, _ in rows)
    print(" " * width + "".join(f"{k:>13}" for k in keys))
    for name, m in rows:
        print(f"{name:<{width}}" + "".join(f"{m.get(k, float('nan')):>13.3f}" for k in keys))
