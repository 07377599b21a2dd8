"""Random grids, region sampling and batched convergence trials for Monte-Carlo checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certificates import InverseStabilityRegion, region_contains
from .dynamics import integrate_batch
from .grid import Bus, GridNetwork, Line, edge_differences
from .powerflow import injections_from_angles


def random_grid(rng: np.random.Generator, n_buses: int, extra_edge_prob: float = 0.3,
                gen_fraction: float = 0.4, coupling_spread: float = 0.0) -> GridNetwork:
    """Connected random grid: random spanning tree plus extra chords.

    Parameters are kept in ranges where fixed-step RK4 at 1e-3 s is stable
    and generator modes decay within a few tens of seconds.
    """
    n_gen = max(1, int(round(gen_fraction * n_buses)))
    kinds = ["generator"] * n_gen + ["load"] * (n_buses - n_gen)
    rng.shuffle(kinds)
    buses = []
    for i, kind in enumerate(kinds):
        v = float(rng.uniform(0.95, 1.05))
        if kind == "generator":
            m = float(rng.uniform(0.05, 0.3))
            buses.append(Bus(i + 1, kind, v, damping=m * float(rng.uniform(0.5, 2.0)), inertia=m))
        else:
            buses.append(Bus(i + 1, kind, v, damping=float(rng.uniform(0.1, 1.0))))
    pairs = set()
    for i in range(1, n_buses):
        j = int(rng.integers(0, i))
        pairs.add((j + 1, i + 1))
    for i in range(n_buses):
        for j in range(i + 1, n_buses):
            if (i + 1, j + 1) not in pairs and rng.random() < extra_edge_prob / max(1, n_buses / 4):
                pairs.add((i + 1, j + 1))
    lines = []
    for k, j in sorted(pairs):
        b = float(rng.uniform(2.0, 15.0))
        if coupling_spread > 0:
            a = buses[k - 1].voltage * buses[j - 1].voltage * b
            lo = a * (1 - float(rng.uniform(0, coupling_spread)))
            hi = a * (1 + float(rng.uniform(0, coupling_spread)))
            lines.append(Line(k, j, b, lo, hi))
        else:
            lines.append(Line(k, j, b))
    return GridNetwork(tuple(buses), tuple(lines))


def random_angles_in_box(rng: np.random.Generator, grid: GridNetwork, bound: float, count: int,
                         max_tries: int = 1000) -> np.ndarray:
    """Angle vectors (bus 1 at zero) with every line difference inside ``bound``.

    Angles are grown along a BFS tree with tree-edge differences drawn
    uniformly, then rows violating a chord are rejected.
    """
    adj = grid.neighbours()
    order, parent = [0], {0: None}
    for u in order:
        for v in adj[u]:
            if v not in parent:
                parent[v] = u
                order.append(v)
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries * count:
            raise RuntimeError("could not sample angles inside the box")
        x = np.zeros(grid.n_buses)
        for v in order[1:]:
            x[v] = x[parent[v]] + rng.uniform(-bound, bound)
        if np.all(np.abs(edge_differences(grid, x)) <= bound):
            out.append(x)
    return np.array(out)


def sample_region_eps(region: InverseStabilityRegion, rng: np.random.Generator, count: int,
                      max_tries: int = 200) -> np.ndarray:
    """Equilibrium angle vectors drawn uniformly from the F-ball, kept if inside the lambda box."""
    grid = region.grid
    room = region.threshold - region.kinetic_offset
    if room <= 0:
        raise ValueError("region is empty")
    x0 = np.asarray(region.center.angles, dtype=float)
    k = grid.n_buses - 1
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries * count:
            raise RuntimeError("lambda box and F-ball barely overlap; cannot sample")
        u = np.concatenate([[0.0], rng.normal(size=k)])
        q = float(np.sum(region.upper_weights * edge_differences(grid, u) ** 2) / 2)
        s = math.sqrt(room / q) * rng.random() ** (1 / k) * (1 - 1e-9)
        y = x0 + s * u
        if region_contains(region, y).inside:
            out.append(y - y[0])
    return np.array(out)


@dataclass(frozen=True)
class ConvergenceTrials:
    distances: np.ndarray
    final_states: np.ndarray
    tolerance: float

    @property
    def converged(self) -> np.ndarray:
        return self.distances < self.tolerance

    @property
    def counterexamples(self) -> int:
        return int(np.sum(~self.converged))


def convergence_trials(grid: GridNetwork, x0: np.ndarray, ep_angles: np.ndarray, horizon: float = 60.0,
                       step: float = 1e-3, tolerance: float = 1e-3) -> ConvergenceTrials:
    """Simulate from state vector ``x0`` under the injections of each row of ``ep_angles``."""
    eps = np.atleast_2d(ep_angles)
    p = injections_from_angles(grid, eps)
    X0 = np.broadcast_to(x0, (len(eps), len(x0))).copy()
    final = integrate_batch(grid, p, X0, horizon, step)
    n = grid.n_buses
    d = final[:, :n] - final[:, :1]
    e = eps - eps[:, :1]
    dist = np.sqrt(np.sum((d - e) ** 2, axis=1))
    return ConvergenceTrials(dist, final, tolerance)
