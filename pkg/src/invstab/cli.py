"""Command-line front end.

Exit codes: 0 success, 1 validation or domain infeasibility, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .casestudy import dispatch_problem_from_doc, ieee9, run_case_study
from .certificates import DEFAULT_LAMBDA, classical_certificate, inverse_region, theorem1_certificate
from .control import (
    SopfProblem,
    execute_plan,
    plan_emergency_control,
    sopf_dispatch,
)
from .dynamics import SystemState, simulate
from .errors import InvStabError, NumericalError, ParseError
from .grid import GridNetwork, load_grid, read_json
from .io import (
    events_path,
    fmt,
    injections_to_doc,
    read_batch,
    read_injections,
    read_state,
    write_events_json,
    write_json,
    write_trajectory_csv,
)
from .powerflow import solve_equilibrium
from .screening import SCREEN_COLUMNS, screen_batch


def _grid(arg: str) -> GridNetwork:
    return ieee9() if arg == "ieee9" else load_grid(arg)


def _state(args, grid: GridNetwork) -> SystemState:
    if args.state is None:
        return SystemState.at_rest(grid, np.zeros(grid.n_buses))
    return read_state(args.state, grid)


def _emit(doc, out) -> None:
    if out:
        write_json(out, doc)
    else:
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")


def _ep_doc(grid, ep, lam) -> dict:
    return {
        "angles": ep.angles.tolist(),
        "residual": ep.residual,
        "iterations": ep.iterations,
        "in_P": ep.in_P(grid),
        "in_Lambda": ep.in_Lambda(grid, lam),
        "lambda": lam,
    }


def cmd_solve_ep(args) -> int:
    grid = _grid(args.grid)
    p = read_injections(args.injections, grid)
    ep = solve_equilibrium(grid, p)
    _emit(_ep_doc(grid, ep, args.lam), args.out)
    return 0


def cmd_simulate(args) -> int:
    grid = _grid(args.grid)
    p = read_injections(args.injections, grid)
    s0 = _state(args, grid)
    traj = simulate(grid, p, s0, horizon=args.horizon, step=args.step,
                    detect_separation=args.detect_separation, output_every=args.output_every)
    try:
        target = solve_equilibrium(grid, p)
    except NumericalError:
        target = None  # no equilibrium: energy and distance columns stay empty
    out = Path(args.out or "trajectory.csv")
    write_trajectory_csv(out, grid, traj, target)
    write_events_json(events_path(out), traj.events)
    for e in traj.events:
        print(f"{fmt(e.time)} {e.kind} {json.dumps(e.detail)}")
    return 0


def cmd_certify(args) -> int:
    grid = _grid(args.grid)
    p = read_injections(args.injections, grid)
    s0 = _state(args, grid)
    ep = solve_equilibrium(grid, p)
    if args.method == "classical":
        rep = classical_certificate(grid, s0, ep, restarts=args.restarts, seed=args.seed)
    else:
        rep = theorem1_certificate(grid, s0, ep, args.lam)
    _emit(rep.to_dict(), args.out)
    return 0


def cmd_region(args) -> int:
    grid = _grid(args.grid)
    region = inverse_region(grid, _state(args, grid), args.lam)
    _emit(region.to_dict(), args.out)
    return 0


def cmd_screen(args) -> int:
    grid = _grid(args.grid)
    s0 = _state(args, grid)
    rows = screen_batch(grid, s0, read_batch(args.batch, grid), args.lam, workers=args.workers)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCREEN_COLUMNS)
        for r in rows:
            d = r.as_row()
            w.writerow([fmt(d[c]) if isinstance(d[c], float) else str(d[c]).lower() if isinstance(d[c], bool)
                        else d[c] for c in SCREEN_COLUMNS])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_plan(args) -> int:
    grid = _grid(args.grid)
    s0 = _state(args, grid)
    desired = solve_equilibrium(grid, read_injections(args.injections, grid))
    problem = dispatch_problem_from_doc(read_json(args.dispatch), args.lam) if args.dispatch else None
    plan = plan_emergency_control(grid, s0, desired, args.lam, problem, max_stages=args.max_stages,
                                  step=args.step)
    _emit(plan.to_dict(), args.out)
    if args.execute:
        traj = execute_plan(grid, s0, plan, step=args.step, horizon_per_stage=args.horizon)
        path = Path(args.trajectory)
        write_trajectory_csv(path, grid, traj, desired)
        write_events_json(events_path(path), traj.events)
    return 0


def _sopf_problem(doc, s0: SystemState, lam: float) -> SopfProblem:
    if not isinstance(doc, dict) or "cost" not in doc:
        raise ParseError("sopf problem must be an object with a 'cost' array")
    try:
        cost = {int(c["bus"]): (float(c.get("c2", 0.0)), float(c.get("c1", 0.0)), float(c.get("c0", 0.0)))
                for c in doc["cost"]}
        thermal = {tuple(int(b) for b in t["line"]): float(t["limit"]) for t in doc.get("thermal_limits", [])}
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"sopf problem: {exc}") from exc
    return SopfProblem(cost, s0, lam, thermal)


def cmd_sopf(args) -> int:
    grid = _grid(args.grid)
    s0 = _state(args, grid)
    res = sopf_dispatch(grid, _sopf_problem(read_json(args.problem), s0, args.lam))
    _emit({
        "ep": res.ep.angles.tolist(),
        "injections": injections_to_doc(res.p.values),
        "cost": res.cost,
        "iterations": res.iterations,
        "stationarity": res.stationarity,
    }, args.out)
    return 0


def cmd_casestudy(args) -> int:
    summary = run_case_study(args.out or "casestudy_out", skip_control=args.skip_control, seed=args.seed,
                             monte_carlo=args.monte_carlo, step=args.step, lam=args.lam)
    for c in summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']} (want {c['tolerance']})")
    return 0 if summary["all_passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="invstab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, state=True, inj=True):
        p.add_argument("--grid", default="ieee9", help="grid JSON file, or 'ieee9' for the bundled case")
        if inj:
            p.add_argument("--injections", required=True)
        if state:
            p.add_argument("--state", help="initial state JSON (default: flat, at rest)")
        p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
        p.add_argument("--out")
        return p

    common(sub.add_parser("solve-ep", help="equilibrium by Newton"), state=False).set_defaults(func=cmd_solve_ep)

    p = common(sub.add_parser("simulate", help="swing dynamics to CSV"))
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=20.0)
    p.add_argument("--output-every", type=int, default=10)
    p.add_argument("--no-detect-separation", dest="detect_separation", action="store_false")
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("certify", help="energy certificate for s0 -> EP"))
    p.add_argument("--method", choices=("classical", "inverse"), default="inverse")
    p.add_argument("--restarts", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_certify)

    common(sub.add_parser("region", help="inverse stability region report"), inj=False).set_defaults(func=cmd_region)

    p = common(sub.add_parser("screen", help="screen a batch of injection scenarios"), inj=False)
    p.add_argument("--batch", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_screen)

    p = common(sub.add_parser("plan", help="emergency-control EP sequence"))
    p.add_argument("--dispatch", help="dispatch problem JSON for the first stage")
    p.add_argument("--max-stages", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=30.0, help="per-stage horizon for --execute")
    p.add_argument("--execute", action="store_true")
    p.add_argument("--trajectory", default="plan_trajectory.csv")
    p.set_defaults(func=cmd_plan)

    p = common(sub.add_parser("sopf", help="relaxed stability-constrained dispatch"), inj=False)
    p.add_argument("--problem", required=True, help="JSON with 'cost' and optional 'thermal_limits'")
    p.set_defaults(func=cmd_sopf)

    p = sub.add_parser("casestudy", help="full 9-bus reproduction run")
    p.add_argument("--out", help="output directory (default casestudy_out)")
    p.add_argument("--skip-control", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--monte-carlo", type=int, default=0, help="region samples to simulate")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="override the calibrated lambda")
    p.set_defaults(func=cmd_casestudy)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvStabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
