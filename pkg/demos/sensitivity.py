"""Desk-scale sensitivity of the MRF prior to a damaged structure graph.

Deletes edges uniformly, deletes whole blocks, or adds random noise edges,
then refits and reports selection and prediction metrics for each case.

    python demos/sensitivity.py --seed 1 --niter 20000 --burnin 8000
"""
import argparse

import numpy as np

from common import fit_and_score, show
from ssur.simulate import desk_scenario, mrf_edge_blocks, perturb_mrf_graph, simulate_alg1

CASES = [("uniform-delete", f) for f in (0.01, 0.1, 0.5, 0.9)] + \
        [("block-delete", f) for f in (0.01, 0.1, 0.5, 0.9, 1.0)] + \
        [("add-noise", f) for f in (0.001, 0.005, 0.01)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--niter", type=int, default=20_000)
    ap.add_argument("--burnin", type=int, default=8_000)
    args = ap.parse_args()
    kw = dict(niter=args.niter, burnin=args.burnin, thin=10, nchains=2, check_every=0, seed=args.seed)
    sim = simulate_alg1(desk_scenario(seed=args.seed))
    blocks = mrf_edge_blocks(sim.scenario)
    size = sim.scenario.m * sim.scenario.p
    rows = [("full structure", fit_and_score(sim, "mrf", blocks, **kw))]
    rng = np.random.default_rng(args.seed)
    for mode, frac in CASES:
        damaged = perturb_mrf_graph(blocks, size, mode, frac, rng)
        n_edges = sum(len(b) for b in damaged)
        rows.append((f"{mode} {frac:g} ({n_edges} edges)", fit_and_score(sim, "mrf", damaged, **kw)))
        show(rows[-1:])
    print()
    show(rows)


if __name__ == "__main__":
    main()
