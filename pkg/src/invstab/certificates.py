"""Quadratic energy bounds, the inverse stability region and energy certificates.

The lower bound ``D`` is weighted with the lower coupling bounds, the upper
bound ``F`` with the upper ones; with degenerate coupling intervals both use
the nominal couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dynamics import SystemState, energy, kinetic_energy
from .grid import GridNetwork, edge_differences, effective_resistances, laplacian_pseudoinverse
from .powerflow import EquilibriumPoint, in_box

HALF_PI = math.pi / 2
DEFAULT_LAMBDA = math.pi / 3

CENTER_OUTSIDE_P = "CenterOutsideP"
EMPTY_REGION = "EmptyRegion"
EP_OUTSIDE_LAMBDA = "EquilibriumOutsideLambda"


def _angles(x) -> np.ndarray:
    if isinstance(x, (SystemState, EquilibriumPoint)):
        return np.asarray(x.angles, dtype=float)
    return np.asarray(x, dtype=float)


def g_constant(lam: float) -> float:
    """Slope bounding the sine gap from below on the ``lam`` box."""
    if not 0 <= lam < HALF_PI:
        raise ValueError(f"lambda must lie in [0, pi/2), got {lam}")
    return (1 - math.sin(lam)) / (HALF_PI - lam)


def quad_lower_D(grid: GridNetwork, x, y, lam: float) -> float | np.ndarray:
    gap = edge_differences(grid, _angles(x)) - edge_differences(grid, _angles(y))
    return g_constant(lam) * np.sum(grid.coupling_lo * gap**2, axis=-1) / 2


def quad_upper_F(grid: GridNetwork, s, y) -> float | np.ndarray:
    """Kinetic energy of ``s`` plus the upper-coupling quadratic angle term.

    ``s`` may be a SystemState or a bare angle array (taken at rest).
    """
    kin = kinetic_energy(grid, s.gen_frequencies) if isinstance(s, SystemState) else 0.0
    gap = edge_differences(grid, _angles(s)) - edge_differences(grid, _angles(y))
    return kin + np.sum(grid.coupling_hi * gap**2, axis=-1) / 2


# -- distance to the boundary of P -----------------------------------------

@dataclass(frozen=True)
class BoundaryDistance:
    radius: float
    point: np.ndarray | None
    face: tuple[tuple[int, int], int] | None  # (line, sign of the active bound)
    caveats: tuple[str, ...] = ()


def min_distance_to_boundary(grid: GridNetwork, delta0, lam: float) -> BoundaryDistance:
    """Minimum of ``D(delta0, .)`` over the boundary of the ``pi/2`` box.

    On the hyperplane ``delta_e = s*pi/2`` the minimum of the quadratic is
    ``g * h_e**2 / (2 * r_e)`` where ``h_e`` is the signed gap to the face and
    ``r_e`` the effective resistance of line ``e`` under the lower couplings;
    the minimiser is ``delta0 + h_e L^+ c_e / r_e``.  The best hyperplane
    point always lies inside the box: the segment from ``delta0`` to it must
    leave the box somewhere, and D grows along the segment, so the exit point
    cannot be cheaper.  No active-set refinement is therefore needed.
    """
    d0 = _angles(delta0)
    y0 = edge_differences(grid, d0)
    if np.any(np.abs(y0) >= HALF_PI):
        return BoundaryDistance(0.0, None, None, (CENTER_OUTSIDE_P,))
    g = g_constant(lam)
    reff = effective_resistances(grid, "lo")
    best = None
    order = sorted(range(grid.n_lines), key=lambda e: tuple(sorted(grid.edges[e])))
    for e in order:
        for sign in (1, -1):
            h = sign * HALF_PI - y0[e]
            val = g * h * h / (2 * reff[e])
            if best is None or val < best[0] - 1e-15:
                best = (val, e, sign, h)
    val, e, sign, h = best
    Lp = laplacian_pseudoinverse(grid, "lo")
    point = d0 + h * (Lp @ grid.incidence[e]) / reff[e]
    return BoundaryDistance(float(val), point, (grid.edges[e], sign))


# -- inverse stability region -----------------------------------------------

@dataclass(frozen=True)
class InverseStabilityRegion:
    grid: GridNetwork = field(repr=False)
    center: SystemState
    lam: float
    gain: float
    radius: float
    kinetic_offset: float
    caveats: tuple[str, ...] = ()

    @property
    def threshold(self) -> float:
        return self.radius / 4

    @property
    def empty(self) -> bool:
        return self.kinetic_offset >= self.threshold

    @property
    def lower_weights(self) -> np.ndarray:
        return self.grid.coupling_lo

    @property
    def upper_weights(self) -> np.ndarray:
        return self.grid.coupling_hi

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "g": self.gain,
            "R": self.radius,
            "threshold": self.threshold,
            "kinetic_offset": self.kinetic_offset,
            "empty": self.empty,
            "caveats": list(self.caveats),
        }


def inverse_region(grid: GridNetwork, s0, lam: float = DEFAULT_LAMBDA) -> InverseStabilityRegion:
    if not 0 < lam < HALF_PI:
        raise ValueError(f"lambda must lie in (0, pi/2), got {lam}")
    if not isinstance(s0, SystemState):
        s0 = SystemState.at_rest(grid, _angles(s0))
    bd = min_distance_to_boundary(grid, s0.angles, lam)
    k0 = float(kinetic_energy(grid, s0.gen_frequencies))
    caveats = list(bd.caveats)
    if k0 >= bd.radius / 4:
        caveats.append(EMPTY_REGION)
    return InverseStabilityRegion(grid, s0, lam, g_constant(lam), bd.radius, k0, tuple(caveats))


@dataclass(frozen=True)
class Membership:
    inside: bool
    lambda_margin: float
    ball_margin: float


def region_contains(region: InverseStabilityRegion, ep) -> Membership:
    """Membership of an equilibrium in the box-and-ball region; margins >= 0 mean satisfied."""
    grid = region.grid
    y = _angles(ep)
    lam_margin = region.lam - float(np.max(np.abs(edge_differences(grid, y))))
    F = float(quad_upper_F(grid, region.center, y))
    ball_margin = region.threshold - F
    return Membership(lam_margin >= 0 and ball_margin >= 0, lam_margin, ball_margin)


# -- E_min oracle -----------------------------------------------------------

@dataclass(frozen=True)
class EminResult:
    value: float
    point: np.ndarray | None
    face: tuple[tuple[int, int], int] | None


def _face_starts(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    return rng.uniform(-0.5, 0.5, size=(count, n))


def e_min_oracle(grid: GridNetwork, ep, restarts: int = 16, seed: int = 0) -> EminResult:
    """Best local minimum of the energy (at rest) over the faces of the ``pi/2`` box.

    An upper bound on the true minimum.  Starting points for face ``f`` come
    from a generator seeded by ``(seed, f)`` and drawn in order, so the start
    set for ``restarts=k`` is a prefix of the one for any larger count.
    """
    ys = _angles(ep)
    if not in_box(grid, ys, HALF_PI).inside:
        raise ValueError("equilibrium must lie in the pi/2 box")
    n = grid.n_buses
    E = grid.incidence[:, 1:]  # bus 1 pinned at zero
    a = grid.coupling
    ystar = edge_differences(grid, ys)
    sin_s, cos_s = np.sin(ystar), np.cos(ystar)

    def fun(z):
        y = E @ z
        return float(np.sum(a * (cos_s - np.cos(y) - sin_s * (y - ystar))))

    def jac(z):
        y = E @ z
        return E.T @ (a * (np.sin(y) - sin_s))

    box_cons = {
        "type": "ineq",
        "fun": lambda z: np.concatenate([HALF_PI - E @ z, HALF_PI + E @ z]),
        "jac": lambda z: np.vstack([-E, E]),
    }
    best = EminResult(math.inf, None, None)
    for e in range(grid.n_lines):
        for si, sign in enumerate((1, -1)):
            rng = np.random.default_rng([seed, e, si])
            starts = _face_starts(rng, n - 1, restarts)
            face_cons = {"type": "eq", "fun": lambda z, e=e, s=sign: np.array([E[e] @ z - s * HALF_PI]),
                         "jac": lambda z, e=e: E[e][None, :]}
            for z0 in starts:
                # move the start onto the face along the line's own direction
                z0 = z0 + (sign * HALF_PI - E[e] @ z0) * E[e] / (E[e] @ E[e])
                res = minimize(fun, z0, jac=jac, method="SLSQP", constraints=[face_cons, box_cons],
                               options={"ftol": 1e-12, "maxiter": 200})
                z = res.x
                y = E @ z
                # accept only points that are genuinely on this face of the box
                if abs(y[e] - sign * HALF_PI) > 1e-7 or np.any(np.abs(y) > HALF_PI + 1e-7):
                    continue
                val = fun(z)
                if val < best.value:
                    best = EminResult(val, np.concatenate([[0.0], z]), (grid.edges[e], sign))
    return best


# -- certificates -----------------------------------------------------------

@dataclass(frozen=True)
class CertificateReport:
    method: str  # "classical" | "inverse"
    passes: bool
    energy_at_start: float
    level: float
    caveats: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.level - self.energy_at_start

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "passes": self.passes,
            "energy_at_start": self.energy_at_start,
            "level": self.level,
            "margin": self.margin,
            "caveats": list(self.caveats),
        }
        d.update(self.extra)
        return d


def classical_certificate(grid: GridNetwork, s0: SystemState, ep, restarts: int = 16, seed: int = 0) -> CertificateReport:
    e0 = energy(grid, s0, ep)
    if not in_box(grid, s0.angles, HALF_PI).inside:
        return CertificateReport("classical", False, e0, math.nan, (CENTER_OUTSIDE_P,))
    emin = e_min_oracle(grid, ep, restarts=restarts, seed=seed).value
    return CertificateReport("classical", e0 < emin, e0, emin)


def theorem1_certificate(grid: GridNetwork, s0: SystemState, ep, lam: float = DEFAULT_LAMBDA) -> CertificateReport:
    region = inverse_region(grid, s0, lam)
    mem = region_contains(region, ep)
    F = float(quad_upper_F(grid, s0, _angles(ep)))
    caveats = list(region.caveats)
    if mem.lambda_margin < 0:
        caveats.append(EP_OUTSIDE_LAMBDA)
    disqualified = bool(caveats)
    passes = not disqualified and F < region.threshold
    extra = {"lambda": lam, "R": region.radius, "lambda_margin": mem.lambda_margin,
             "ball_margin": mem.ball_margin}
    return CertificateReport("inverse", passes, F, region.threshold, tuple(caveats), extra)
