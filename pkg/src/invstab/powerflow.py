"""Equilibrium equations, their linear approximation, and box/sync tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, SingularJacobian
from .grid import GridNetwork, InjectionVector, edge_differences, edge_infinity_norm, laplacian_pseudoinverse

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
MAX_HALVINGS = 10


@dataclass(frozen=True)
class EquilibriumPoint:
    """Equilibrium angles in the reference gauge (bus 1 at zero)."""

    angles: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        a = np.array(self.angles, dtype=float)
        a = a - a[0]
        a.flags.writeable = False
        object.__setattr__(self, "angles", a)

    def in_P(self, grid: GridNetwork) -> bool:
        return in_box(grid, self.angles, math.pi / 2).inside

    def in_Lambda(self, grid: GridNetwork, lam: float) -> bool:
        return in_box(grid, self.angles, lam).inside


@dataclass(frozen=True)
class BoxCheck:
    inside: bool
    worst_edge: tuple[int, int] | None
    margin: float


@dataclass(frozen=True)
class SyncCheckReport:
    norm_value: float
    threshold: float
    passes: bool
    ep: EquilibriumPoint | None = None
    ep_in_lambda: bool | None = None


def line_flows(grid: GridNetwork, angles, weights: np.ndarray | None = None) -> np.ndarray:
    """Net active power leaving each bus, ``sum_j a_kj sin(delta_k - delta_j)``."""
    a = grid.coupling if weights is None else weights
    return (a * np.sin(edge_differences(grid, angles))) @ grid.incidence


def injections_from_angles(grid: GridNetwork, angles) -> np.ndarray:
    return line_flows(grid, angles)


def _jacobian(grid: GridNetwork, angles: np.ndarray) -> np.ndarray:
    E = grid.incidence
    w = grid.coupling * np.cos(E @ angles)
    return E.T @ (w[:, None] * E)


def solve_equilibrium(grid: GridNetwork, p: InjectionVector, guess=None,
                      tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> EquilibriumPoint:
    """Damped Newton on the power-flow-like equations with bus 1 pinned at zero."""
    pv = np.asarray(p, dtype=float)
    n = grid.n_buses
    if len(pv) != n:
        raise ValueError(f"injection vector has length {len(pv)}, grid has {n} buses")
    x = dc_approx_ep(grid, p) if guess is None else np.array(guess, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"guess has shape {x.shape}, expected ({n},)")
    x = x - x[0]

    def mismatch(v):
        return (line_flows(grid, v) - pv)[1:]

    r = mismatch(x)
    res = float(np.max(np.abs(r))) if n > 1 else 0.0
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NonConvergence(f"Newton reached {max_iter} iterations with residual {res:.3e}")
        J = _jacobian(grid, x)[1:, 1:]
        try:
            cond = np.linalg.cond(J)
            if not np.isfinite(cond) or cond > 1e14:
                raise np.linalg.LinAlgError(f"condition number {cond:.3e}")
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"Jacobian singular at iteration {it}: {exc}") from None
        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = x.copy()
            trial[1:] += step * dx
            r_trial = mismatch(trial)
            res_trial = float(np.max(np.abs(r_trial)))
            if res_trial < res:
                break
            step /= 2
        else:
            raise NonConvergence(f"Newton stalled at residual {res:.3e} after {it} iterations")
        x, r, res = trial, r_trial, res_trial
        it += 1
    return EquilibriumPoint(x, residual=res, iterations=it)


def dc_approx_ep(grid: GridNetwork, p: InjectionVector, reference_gauge: bool = False) -> np.ndarray:
    """Linearised equilibrium ``L^+ p`` (mean-zero gauge unless ``reference_gauge``)."""
    x = laplacian_pseudoinverse(grid) @ np.asarray(p, dtype=float)
    return x - x[0] if reference_gauge else x


def in_box(grid: GridNetwork, angles, bound: float) -> BoxCheck:
    """Check ``|delta_kj| <= bound`` on every line; margin is ``bound - max|delta_kj|``."""
    if not 0 < bound <= math.pi / 2 + 1e-15:
        raise ValueError(f"bound must lie in (0, pi/2], got {bound}")
    diffs = np.abs(edge_differences(grid, angles))
    if diffs.size == 0:
        return BoxCheck(True, None, bound)
    worst = int(np.argmax(diffs))
    margin = float(bound - diffs[worst])
    return BoxCheck(margin >= 0, grid.edges[worst], margin)


def check_sync_condition(grid: GridNetwork, p: InjectionVector, lam: float, verify: bool = True) -> SyncCheckReport:
    """Screen injections with ``||L^+ p||_{E,inf} <= sin(lam)``; optionally confirm by Newton."""
    if not 0 < lam < math.pi / 2:
        raise ValueError(f"lambda must lie in (0, pi/2), got {lam}")
    norm = edge_infinity_norm(grid, dc_approx_ep(grid, p))
    thr = math.sin(lam)
    ep = in_lam = None
    if verify:
        try:
            ep = solve_equilibrium(grid, p)
            in_lam = ep.in_Lambda(grid, lam)
        except (NonConvergence, SingularJacobian):
            ep, in_lam = None, False
    return SyncCheckReport(norm, thr, norm <= thr, ep, in_lam)
