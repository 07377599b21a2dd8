"""Monte-Carlo soundness check of the inverse certificate on random grids.

For each grid a random initial state in the pi/2 box is drawn, equilibria
are sampled uniformly from its inverse stability region, and each is
simulated from the same initial state.  Any run not ending at its
equilibrium is reported as a counterexample.
"""

import argparse
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from invstab.certificates import inverse_region
from invstab.dynamics import SystemState
from invstab.sampling import convergence_trials, random_angles_in_box, random_grid, sample_region_eps


def one_grid(args):
    seed, samples, lam, horizon = args
    rng = np.random.default_rng(seed)
    while True:
        g = random_grid(rng, int(rng.integers(3, 10)), coupling_spread=0.2)
        s0 = SystemState(random_angles_in_box(rng, g, 0.5, 1)[0], rng.normal(scale=0.02, size=g.n_generators))
        region = inverse_region(g, s0, lam)
        if not (region.empty or region.caveats):
            break
    eps = sample_region_eps(region, rng, samples)
    tr = convergence_trials(g, s0.to_vector(), eps, horizon=horizon)
    return g.n_buses, tr.counterexamples, float(tr.distances.max())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grids", type=int, default=20)
    ap.add_argument("--samples", type=int, default=100)
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--horizon", type=float, default=60.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    jobs = [((args.seed, i), args.samples, args.lam, args.horizon) for i in range(args.grids)]
    t = time.perf_counter()
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            res = list(pool.map(one_grid, jobs))
    else:
        res = [one_grid(j) for j in jobs]
    for i, (n, bad, worst) in enumerate(res):
        print(f"grid {i:3d}  n={n}  counterexamples {bad}  worst final distance {worst:.2e}")
    print(f"total counterexamples: {sum(r[1] for r in res)} / {args.grids * args.samples}  "
          f"({time.perf_counter() - t:.0f} s)")


if __name__ == "__main__":
    main()
