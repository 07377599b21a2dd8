"""Screen injection scenarios against a fixed initial state."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .certificates import inverse_region, region_contains
from .dynamics import SystemState
from .errors import NumericalError
from .grid import BALANCE_TOL, GridNetwork, InjectionVector
from .powerflow import check_sync_condition, solve_equilibrium

SCREEN_COLUMNS = (
    "name", "imbalance", "sync_norm", "sync_threshold", "sync_pass", "ep_found",
    "ep_in_lambda", "lambda_margin", "ball_margin", "in_region", "verdict",
)


@dataclass(frozen=True)
class ScreenRow:
    name: str
    imbalance: float
    sync_norm: float = float("nan")
    sync_threshold: float = float("nan")
    sync_pass: bool = False
    ep_found: bool = False
    ep_in_lambda: bool = False
    lambda_margin: float = float("nan")
    ball_margin: float = float("nan")
    in_region: bool = False
    verdict: str = "fail"

    def as_row(self) -> dict:
        return asdict(self)


def screen_scenario(grid: GridNetwork, s0: SystemState, name: str, values, lam: float) -> ScreenRow:
    """Sync check, Newton equilibrium and region membership for one injection vector.

    ``verdict`` is "pass" only when the equilibrium exists and lies in the
    inverse stability region of ``s0``.
    """
    v = np.asarray(values, dtype=float)
    imbalance = float(v.sum())
    if abs(imbalance) > BALANCE_TOL:
        return ScreenRow(name, imbalance, verdict="unbalanced")
    p = InjectionVector(v)
    sync = check_sync_condition(grid, p, lam, verify=False)
    row = dict(name=name, imbalance=imbalance, sync_norm=sync.norm_value,
               sync_threshold=sync.threshold, sync_pass=sync.passes)
    try:
        ep = solve_equilibrium(grid, p)
    except NumericalError:
        return ScreenRow(**row, verdict="no_ep")
    region = inverse_region(grid, s0, lam)
    mem = region_contains(region, ep)
    inside = mem.inside and not region.caveats
    return ScreenRow(**row, ep_found=True, ep_in_lambda=ep.in_Lambda(grid, lam),
                     lambda_margin=mem.lambda_margin, ball_margin=mem.ball_margin,
                     in_region=inside, verdict="pass" if inside else "fail")


def _screen_one(args):
    return screen_scenario(*args)


def screen_batch(grid: GridNetwork, s0: SystemState, scenarios: list[tuple[str, np.ndarray]], lam: float,
                 workers: int = 1) -> list[ScreenRow]:
    """Rows in input order; ``workers`` > 1 fans out over processes."""
    jobs = [(grid, s0, name, v, lam) for name, v in scenarios]
    if workers <= 1 or len(jobs) <= 1:
        return [_screen_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_screen_one, jobs))
