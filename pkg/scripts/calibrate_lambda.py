"""Recompute the box parameter stored in the case-study fixture.

The reference data give a segment coefficient but no box parameter.
This scans admissible values and reports the one whose coefficient lands
closest to the target, along with the best coefficient attainable.
"""

import argparse

import numpy as np

from invstab.casestudy import load_case_study
from invstab.control import calibrate_lambda, segment_coefficient
from invstab.powerflow import dc_approx_ep, solve_equilibrium


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--target", type=float, default=0.9259)
    ap.add_argument("--samples", type=int, default=2000)
    args = ap.parse_args()
    cs = load_case_study()
    grid, desired = cs.grid, cs.desired
    p = cs.reference_optimized
    ep1 = solve_equilibrium(grid, p, guess=dc_approx_ep(grid, p))
    cal = calibrate_lambda(grid, ep1, desired, args.target, samples=args.samples)
    print(f"calibrated lambda = {cal.lam:.6f}, t = {cal.t:.6f} (target {cal.target_t})")
    for lam in np.linspace(0.53, 1.5, 8):
        print(f"  lambda {lam:.3f}: t = {segment_coefficient(grid, ep1, desired, lam):.4f}")


if __name__ == "__main__":
    main()
