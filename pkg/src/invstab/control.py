"""Equilibrium relocation: dispatch design, EP sequencing, staged control and relaxed sOPF."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxopt
import numpy as np

from .certificates import (
    DEFAULT_LAMBDA,
    HALF_PI,
    InverseStabilityRegion,
    inverse_region,
    region_contains,
    theorem1_certificate,
)
from .dynamics import Event, SystemState, Trajectory, angle_distance, simulate
from .errors import (
    EmptyRegion,
    FirstStageUncertified,
    Infeasible,
    NotConverged,
    StageLimitExceeded,
    StageTimeout,
    ValidationError,
)
from .grid import GridNetwork, InjectionVector, edge_differences, edge_infinity_norm, laplacian_pseudoinverse, weighted_laplacian
from .lp import simplex
from .powerflow import EquilibriumPoint, dc_approx_ep, in_box, injections_from_angles, solve_equilibrium

DEFAULT_SWITCH_TOL = 1e-2


# -- minimum-synchronisation dispatch --------------------------------------

@dataclass(frozen=True)
class DispatchProblem:
    """Buses free to redispatch, pinned injections for the rest, and optional boxes.

    ``bounds`` maps a controllable bus id to ``(lo, hi)``; missing buses or
    ``None`` entries are unbounded on that side.
    """

    controllable: tuple[int, ...]
    fixed: dict[int, float] = field(default_factory=dict)
    bounds: dict[int, tuple[float | None, float | None]] = field(default_factory=dict)
    lam: float = DEFAULT_LAMBDA

    def validate(self, grid: GridNetwork) -> None:
        ctrl, fixed = set(self.controllable), set(self.fixed)
        if ctrl & fixed:
            raise ValidationError(f"buses both controllable and fixed: {sorted(ctrl & fixed)}")
        missing = set(range(1, grid.n_buses + 1)) - ctrl - fixed
        if missing:
            raise ValidationError(f"buses neither controllable nor fixed: {sorted(missing)}")
        extra = (ctrl | fixed) - set(range(1, grid.n_buses + 1))
        if extra:
            raise ValidationError(f"unknown buses in dispatch problem: {sorted(extra)}")


@dataclass(frozen=True)
class DispatchResult:
    p: InjectionVector
    norm: float


def min_sync_dispatch(grid: GridNetwork, problem: DispatchProblem) -> DispatchResult:
    """Minimise ``||L^+ p||_{E,inf}`` over the controllable injections (an LP)."""
    problem.validate(grid)
    n = grid.n_buses
    ctrl = [b - 1 for b in problem.controllable]
    fixed = np.zeros(n)
    for b, v in problem.fixed.items():
        fixed[b - 1] = v
    M = grid.incidence @ laplacian_pseudoinverse(grid)
    Mc, off = M[:, ctrl], M @ fixed
    m, nc = Mc.shape
    ones = np.ones((m, 1))
    A_ub = np.block([[Mc, -ones], [-Mc, -ones]])
    b_ub = np.concatenate([-off, off])
    A_eq = np.concatenate([np.ones(nc), [0.0]])[None, :]
    b_eq = np.array([-fixed.sum()])
    bounds = [problem.bounds.get(b, (None, None)) for b in problem.controllable] + [(0.0, None)]
    c = np.zeros(nc + 1)
    c[-1] = 1.0
    res = simplex(c, A_ub, b_ub, A_eq, b_eq, bounds)
    p = fixed.copy()
    p[ctrl] = res.x[:nc]
    p[ctrl] -= p.sum() / nc  # clear round-off so the balance invariant holds exactly
    pv = InjectionVector(p)
    return DispatchResult(pv, edge_infinity_norm(grid, dc_approx_ep(grid, pv)))


# -- EP sequencing ----------------------------------------------------------

@dataclass(frozen=True)
class SegmentStep:
    angles: np.ndarray
    t: float
    t_ball: float
    t_box: float


def next_ep_on_segment(region: InverseStabilityRegion, target, shrink: float = 1.0) -> SegmentStep:
    """Furthest point of the segment from the region center toward ``target`` inside the region.

    ``shrink`` (<= 1) scales the limiting coefficient so the returned point
    sits strictly inside; 1 reproduces the exact boundary intersection.
    """
    if region.empty:
        raise EmptyRegion(f"inverse stability region is empty (K0={region.kinetic_offset:.6g} >= R/4={region.threshold:.6g})")
    grid = region.grid
    x0 = np.asarray(region.center.angles, dtype=float)
    x1 = np.asarray(target.angles if isinstance(target, EquilibriumPoint) else target, dtype=float)
    y0 = edge_differences(grid, x0)
    dy = edge_differences(grid, x1) - y0
    quad = float(np.sum(region.upper_weights * dy**2) / 2)
    if quad == 0.0:
        return SegmentStep(x1.copy(), 1.0, math.inf, math.inf)
    t_ball = math.sqrt((region.threshold - region.kinetic_offset) / quad)
    t_box = math.inf
    for y, d in zip(y0, dy):
        if d > 0:
            t_box = min(t_box, (region.lam - y) / d)
        elif d < 0:
            t_box = min(t_box, (-region.lam - y) / d)
    t_box = max(t_box, 0.0)
    t = min(t_ball, t_box, 1.0)
    if t < 1.0:
        t *= shrink
    return SegmentStep(x0 + t * (x1 - x0), t, t_ball, t_box)


@dataclass(frozen=True)
class Calibration:
    lam: float
    t: float
    target_t: float


def segment_coefficient(grid: GridNetwork, from_ep, target, lam: float) -> float:
    region = inverse_region(grid, SystemState.at_rest(grid, _angles_of(from_ep)), lam)
    return next_ep_on_segment(region, target).t


def calibrate_lambda(grid: GridNetwork, from_ep, target, target_t: float, samples: int = 2000) -> Calibration:
    """Box parameter whose segment coefficient from ``from_ep`` toward ``target`` is closest to ``target_t``.

    Only values admitting ``target`` in the lambda box are scanned; a dense
    grid is followed by a golden-section polish on the best bracket.
    """
    lo = float(np.max(np.abs(edge_differences(grid, _angles_of(target)))))
    hi = HALF_PI - 1e-6
    grid_l = np.linspace(lo, hi, samples)
    err = [abs(segment_coefficient(grid, from_ep, target, lam) - target_t) for lam in grid_l]
    i = int(np.argmin(err))
    a, b = grid_l[max(i - 1, 0)], grid_l[min(i + 1, samples - 1)]
    phi = (math.sqrt(5) - 1) / 2
    for _ in range(60):
        c, d = b - phi * (b - a), a + phi * (b - a)
        if abs(segment_coefficient(grid, from_ep, target, c) - target_t) <= abs(segment_coefficient(grid, from_ep, target, d) - target_t):
            b = d
        else:
            a = c
    lam = (a + b) / 2
    if err[i] < abs(segment_coefficient(grid, from_ep, target, lam) - target_t):
        lam = float(grid_l[i])
    return Calibration(lam, segment_coefficient(grid, from_ep, target, lam), target_t)


def _angles_of(x) -> np.ndarray:
    return np.asarray(x.angles if isinstance(x, (EquilibriumPoint, SystemState)) else x, dtype=float)


def dispatch_for_ep(grid: GridNetwork, ep) -> InjectionVector:
    angles = ep.angles if isinstance(ep, (EquilibriumPoint, SystemState)) else ep
    p = injections_from_angles(grid, angles)
    return InjectionVector(p - p.mean())


@dataclass(frozen=True)
class Stage:
    ep: EquilibriumPoint
    injections: InjectionVector
    t: float | None  # segment coefficient; None for the min-sync first stage


@dataclass(frozen=True)
class ControlPlan:
    stages: tuple[Stage, ...]
    desired: EquilibriumPoint
    lam: float
    switch_tolerance: float = DEFAULT_SWITCH_TOL
    first_stage_check: str = "certificate"  # "certificate" | "simulation"

    def distances(self) -> list[float]:
        return [angle_distance(s.ep, self.desired) for s in self.stages]

    def to_dict(self) -> dict:
        return {
            "stages": [
                {"ep": s.ep.angles.tolist(), "injections": s.injections.values.tolist(), "t": s.t}
                for s in self.stages
            ],
            "desired": self.desired.angles.tolist(),
            "lambda": self.lam,
            "switch_tolerance": self.switch_tolerance,
            "first_stage_check": self.first_stage_check,
        }


def _settled(state: SystemState, ep, tol: float) -> bool:
    freq = float(np.max(np.abs(state.gen_frequencies))) if state.gen_frequencies.size else 0.0
    return angle_distance(state, ep) < tol and freq < tol


def plan_emergency_control(grid: GridNetwork, s0: SystemState, desired: EquilibriumPoint, lam: float,
                           problem: DispatchProblem | None = None, max_stages: int = 20,
                           switch_tolerance: float = DEFAULT_SWITCH_TOL, margin: float = 1e-9,
                           fallback_horizon: float = 30.0, step: float = 1e-3) -> ControlPlan:
    """Sequence of certified equilibria leading from ``s0`` to ``desired``.

    The first stage comes from the minimum-synchronisation dispatch, checked
    by the inverse certificate when ``s0`` lies in the pi/2 box and by
    simulation otherwise.  Later stages step along the segment toward
    ``desired`` as far as each stage's region allows.
    """
    if max_stages < 1:
        raise ValueError("max_stages must be at least 1")
    if not desired.in_Lambda(grid, lam):
        raise ValidationError(f"desired equilibrium is outside the lambda box (lambda={lam})")
    desired_stage = Stage(desired, dispatch_for_ep(grid, desired), 1.0)
    s0_in_P = in_box(grid, s0.angles, HALF_PI).inside
    if s0_in_P and theorem1_certificate(grid, s0, desired, lam).passes:
        return ControlPlan((desired_stage,), desired, lam, switch_tolerance, "certificate")
    if problem is None:
        raise ValidationError("a dispatch problem is needed to design the first stage")

    first = min_sync_dispatch(grid, problem)
    ep1 = solve_equilibrium(grid, first.p, guess=dc_approx_ep(grid, first.p))
    check = "certificate"
    if not (s0_in_P and theorem1_certificate(grid, s0, ep1, lam).passes):
        check = "simulation"
        traj = simulate(grid, first.p, s0, horizon=fallback_horizon, step=step, detect_separation=False,
                        output_every=max(1, int(fallback_horizon / step)))
        if not _settled(traj.final_state, ep1, switch_tolerance):
            raise FirstStageUncertified(
                f"state does not settle at the first equilibrium within {fallback_horizon} s "
                f"(distance {angle_distance(traj.final_state, ep1):.3e})"
            )
    stages = [Stage(ep1, first.p, None)]
    current = ep1
    while True:
        region = inverse_region(grid, SystemState.at_rest(grid, current.angles), lam)
        if region.empty or region.caveats:
            raise EmptyRegion(f"stage {len(stages)}: region unusable ({', '.join(region.caveats)})")
        if region_contains(region, desired).inside:
            stages.append(desired_stage)
            break
        if len(stages) + 1 >= max_stages:
            raise StageLimitExceeded(f"desired equilibrium not reached within {max_stages} stages")
        seg = next_ep_on_segment(region, desired, shrink=1.0 - margin)
        p = dispatch_for_ep(grid, seg.angles)
        ep = solve_equilibrium(grid, p, guess=seg.angles)
        stages.append(Stage(ep, p, seg.t))
        current = ep
    return ControlPlan(tuple(stages), desired, lam, switch_tolerance, check)


def execute_plan(grid: GridNetwork, s0: SystemState, plan: ControlPlan, step: float = 1e-3,
                 horizon_per_stage: float = 30.0, output_every: int = 10) -> Trajectory:
    """Simulate the staged control, switching injections once each stage has settled."""
    parts: list[Trajectory] = []
    state, t0 = s0, 0.0
    last = len(plan.stages) - 1
    for i, stage in enumerate(plan.stages):
        switch = Event(t0, "switch", {"stage": i + 1, "t": stage.t,
                                       "distance_to_desired": angle_distance(state, plan.desired)})
        if i < last:
            if _settled(state, stage.ep, plan.switch_tolerance):
                traj = Trajectory(np.array([t0]), state.angles[None, :], state.gen_frequencies[None, :])
            else:
                traj = simulate(grid, stage.injections, state, horizon=horizon_per_stage, step=step,
                                output_every=output_every, t0=t0,
                                stop=lambda s, ep=stage.ep: _settled(s, ep, plan.switch_tolerance))
                if not _settled(traj.final_state, stage.ep, plan.switch_tolerance):
                    raise StageTimeout(f"stage {i + 1} did not settle within {horizon_per_stage} s")
        else:
            traj = simulate(grid, stage.injections, state, horizon=horizon_per_stage, step=step,
                            output_every=output_every, t0=t0)
        traj.events.insert(0, switch)
        parts.append(traj)
        state, t0 = traj.final_state, float(traj.times[-1])
    return Trajectory.concatenate(parts)


# -- relaxed stability-constrained OPF ---------------------------------------

@dataclass(frozen=True)
class SopfProblem:
    """Quadratic generator costs ``c2 P^2 + c1 P + c0`` keyed by bus id.

    ``thermal_limits`` maps a line ``(k, j)`` to its flow limit; lines not
    listed are unconstrained.
    """

    cost: dict[int, tuple[float, float, float]]
    s0: SystemState
    lam: float = DEFAULT_LAMBDA
    thermal_limits: dict[tuple[int, int], float] = field(default_factory=dict)


@dataclass(frozen=True)
class SopfResult:
    ep: EquilibriumPoint
    p: InjectionVector
    cost: float
    iterations: int
    stationarity: float


class _FeasibleSet:
    """Box-in-line-differences intersected with the F-ball, in reduced angles (bus 1 at zero).

    Euclidean projection is a small cone QP solved with cvxopt; its output is
    then pulled toward a strictly interior point so every constraint holds
    exactly, not just to solver tolerance.
    """

    def __init__(self, grid: GridNetwork, center: np.ndarray, bounds: np.ndarray, rho: float):
        self.C = grid.incidence[:, 1:]
        self.b = bounds
        self.z0 = center
        self.Q = weighted_laplacian(grid, "hi")[1:, 1:]
        self.R = np.linalg.cholesky(self.Q).T  # Q = R^T R
        self.rho = rho  # ball: (z - z0)^T Q (z - z0) <= rho
        self.z_int: np.ndarray | None = None

    def ball_value(self, z) -> float:
        d = z - self.z0
        return float(d @ self.Q @ d)

    def violation(self, z) -> float:
        box = float(np.max(np.abs(self.C @ z) - self.b, initial=-np.inf))
        return max(box, self.ball_value(z) - self.rho)

    def _cone_projection(self, v: np.ndarray, scale: float = 1.0) -> np.ndarray | None:
        k = len(v)
        m = len(self.b)
        G = np.vstack([self.C, -self.C, np.zeros((1, k)), -self.R])
        h = np.concatenate([self.b * scale, self.b * scale, [math.sqrt(self.rho * scale)], -self.R @ self.z0])
        sol = cvxopt.solvers.coneqp(
            cvxopt.matrix(np.eye(k)), cvxopt.matrix(-v), cvxopt.matrix(G), cvxopt.matrix(h),
            dims={"l": 2 * m, "q": [k + 1], "s": []},
            options={"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12, "maxiters": 200},
        )
        if sol["status"] not in ("optimal", "unknown") or sol["x"] is None:
            return None
        return np.array(sol["x"]).ravel()

    def find_interior(self) -> bool:
        for scale in (1 - 1e-3, 1 - 1e-6):
            cand = self._cone_projection(self.z0, scale)
            if cand is not None and self.violation(cand) < 0:
                self.z_int = cand
                return True
        return False

    def pull_inside(self, x):
        """Largest step from the interior point toward ``x`` that stays feasible."""
        z_int = self.z_int
        d = x - z_int
        theta = 1.0
        s0, sd = self.C @ z_int, self.C @ d
        for e in range(len(self.b)):
            if sd[e] > 0:
                theta = min(theta, (self.b[e] - s0[e]) / sd[e])
            elif sd[e] < 0:
                theta = min(theta, (-self.b[e] - s0[e]) / sd[e])
        u = z_int - self.z0
        qa, qb, qc = d @ self.Q @ d, 2 * (u @ self.Q @ d), u @ self.Q @ u - self.rho
        if qa > 0:
            root = (-qb + math.sqrt(max(qb * qb - 4 * qa * qc, 0.0))) / (2 * qa)
            theta = min(theta, root)
        return z_int + max(theta, 0.0) * d

    def project(self, v):
        if self.violation(v) <= 0:
            return np.array(v, dtype=float)
        x = self._cone_projection(v)
        if x is None:
            raise NotConverged("projection subproblem failed")
        if self.violation(x) > 0:
            x = self.pull_inside(x)
        return x


def sopf_dispatch(grid: GridNetwork, problem: SopfProblem, tol: float = 1e-6, max_iter: int = 5000) -> SopfResult:
    """Projected gradient on the equilibrium angles.

    Parametrising by angles makes the power-flow equality hold by
    construction; the feasible set is convex in the angles (line-difference
    box from lambda and thermal limits, intersected with the F-ball of the
    inverse stability region).
    """
    region = inverse_region(grid, problem.s0, problem.lam)
    if region.caveats:
        raise Infeasible(f"inverse stability region unusable: {', '.join(region.caveats)}")
    a = grid.coupling
    bounds = np.full(grid.n_lines, problem.lam)
    for (k, j), limit in problem.thermal_limits.items():
        e = grid.line_index(k, j)
        if not limit > 0:
            raise Infeasible(f"thermal limit on line {{{k},{j}}} must be positive")
        if limit < a[e]:
            bounds[e] = min(bounds[e], math.asin(limit / a[e]))
    rho = 2 * (region.threshold - region.kinetic_offset)
    center = np.asarray(problem.s0.angles, dtype=float)
    center = center - center[0]
    fs = _FeasibleSet(grid, center[1:], bounds, rho)

    if not fs.find_interior():
        raise Infeasible("no equilibrium satisfies the region and thermal constraints together")

    gi = grid.gen_index
    c2 = np.zeros(grid.n_buses)
    c1 = np.zeros(grid.n_buses)
    c0 = 0.0
    for b, (q2, q1, q0) in problem.cost.items():
        if not grid.buses[b - 1].is_generator:
            raise ValidationError(f"cost given for non-generator bus {b}")
        if q2 < 0:
            raise ValidationError(f"bus {b}: quadratic cost coefficient must be nonnegative")
        c2[b - 1], c1[b - 1], c0 = q2, q1, c0 + q0
    mask = np.zeros(grid.n_buses, dtype=bool)
    mask[gi] = True
    E = grid.incidence

    def full(z):
        return np.concatenate([[0.0], z])

    def cost(z):
        P = injections_from_angles(grid, full(z))
        return float(np.sum((c2 * P**2 + c1 * P)[mask]) + c0)

    def grad(z):
        d = full(z)
        P = injections_from_angles(grid, d)
        dcdP = np.where(mask, 2 * c2 * P + c1, 0.0)
        w = a * np.cos(E @ d)
        J = E.T @ (w[:, None] * E)
        return (J @ dcdP)[1:]

    def stationarity(z):
        return float(np.linalg.norm(z - fs.project(z - grad(z))))

    z = fs.project(center[1:])
    f = cost(z)
    alpha = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(z)
        while True:
            z_new = fs.project(z - alpha * g)
            f_new = cost(z_new)
            if f_new <= f - 1e-4 / alpha * float(np.sum((z_new - z) ** 2)) or alpha < 1e-12:
                break
            alpha /= 2
        moved = float(np.max(np.abs(z_new - z)))
        z, f = z_new, f_new
        alpha = min(alpha * 2, 1e3)
        if moved < 1e-12 or it % 10 == 0:
            if stationarity(z) <= tol:
                break
    else:
        raise NotConverged(f"projected gradient did not converge in {max_iter} iterations")
    st = stationarity(z)
    if st > tol:
        raise NotConverged(f"projected gradient stalled with stationarity {st:.3e}")
    angles = full(z)
    p = dispatch_for_ep(grid, angles)
    return SopfResult(EquilibriumPoint(angles), p, f, it, st)
