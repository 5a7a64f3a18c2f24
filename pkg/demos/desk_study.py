"""Desk-scale comparison of the MRF and hotspot indicator priors on data from simulate_alg1.

    python demos/desk_study.py --seeds 1 2 --niter 50000 --burnin 20000

About two minutes per fit on one core at the default settings.
"""
import argparse

from common import fit_and_score, show
from ssur.simulate import desk_scenario, mrf_edge_blocks, simulate_alg1


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--niter", type=int, default=50_000)
    ap.add_argument("--burnin", type=int, default=20_000)
    args = ap.parse_args()
    kw = dict(niter=args.niter, burnin=args.burnin, thin=10, nchains=2, check_every=0)
    for seed in args.seeds:
        sim = simulate_alg1(desk_scenario(seed=seed))
        blocks = mrf_edge_blocks(sim.scenario)
        rows = [("MRF", fit_and_score(sim, "mrf", blocks, seed=seed, **kw)),
                ("hotspot", fit_and_score(sim, "hotspot", seed=seed, **kw))]
        print(f"\nseed {seed}")
        show(rows)


if __name__ == "__main__":
    main()
