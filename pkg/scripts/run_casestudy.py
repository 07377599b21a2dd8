"""Reproduce the 9-bus emergency-control study and print the tolerance checks.

    python3 scripts/run_casestudy.py --out results/casestudy --monte-carlo 100
"""

import argparse
import json

from invstab.casestudy import run_case_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/casestudy")
    ap.add_argument("--skip-control", action="store_true")
    ap.add_argument("--monte-carlo", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lambda", dest="lam", type=float, default=None)
    args = ap.parse_args()
    s = run_case_study(args.out, skip_control=args.skip_control, seed=args.seed,
                       monte_carlo=args.monte_carlo, lam=args.lam)
    for c in s["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']:<28} {json.dumps(c['value'])[:70]}  ({c['tolerance']})")
    print(f"lambda = {s['lambda']}  timings: {json.dumps({k: round(v, 2) for k, v in s['timings_s'].items()})}")
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
