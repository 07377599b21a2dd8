"""Structure-preserving swing dynamics, energy function and fault scenarios.

Generators are second order (angle and frequency are states); load buses are
first order, so only their angles are states.  All functions accept angle
arrays with arbitrary leading batch dimensions where noted, which is what the
Monte-Carlo suites rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFinite, UnknownLine
from .grid import GridNetwork, edge_differences
from .powerflow import EquilibriumPoint, line_flows

SEPARATION_THRESHOLD = 2 * math.pi
BLOWUP = 1e6  # any state entry this large means the integrator has diverged


@dataclass(frozen=True)
class SystemState:
    angles: np.ndarray
    gen_frequencies: np.ndarray

    def __post_init__(self):
        for name in ("angles", "gen_frequencies"):
            v = np.array(getattr(self, name), dtype=float)
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    @classmethod
    def at_rest(cls, grid: GridNetwork, angles) -> "SystemState":
        return cls(np.asarray(angles, dtype=float), np.zeros(grid.n_generators))

    @classmethod
    def from_vector(cls, grid: GridNetwork, x: np.ndarray) -> "SystemState":
        return cls(x[: grid.n_buses], x[grid.n_buses:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.angles, self.gen_frequencies])

    def shifted(self, c: float) -> "SystemState":
        return SystemState(self.angles + c, self.gen_frequencies)


@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # "separation" | "switch"
    detail: dict


@dataclass
class Trajectory:
    """Sampled trajectory; rows of ``angles``/``gen_frequencies`` align with ``times``."""

    times: np.ndarray
    angles: np.ndarray
    gen_frequencies: np.ndarray
    events: list[Event] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> SystemState:
        return SystemState(self.angles[i], self.gen_frequencies[i])

    @property
    def final_state(self) -> SystemState:
        return self.state(-1)

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    @staticmethod
    def concatenate(parts: list["Trajectory"]) -> "Trajectory":
        # consecutive parts share their boundary sample
        times = [parts[0].times] + [p.times[1:] for p in parts[1:]]
        angles = [parts[0].angles] + [p.angles[1:] for p in parts[1:]]
        freqs = [parts[0].gen_frequencies] + [p.gen_frequencies[1:] for p in parts[1:]]
        events = [e for p in parts for e in p.events]
        return Trajectory(np.concatenate(times), np.concatenate(angles), np.concatenate(freqs), events)


@dataclass(frozen=True)
class FaultScenario:
    tripped_line: tuple[int, int]
    clear_time: float
    pre_fault_ep: EquilibriumPoint

    def __post_init__(self):
        if not self.clear_time > 0:
            raise ValueError(f"clear_time must be positive, got {self.clear_time}")


# -- vector field -----------------------------------------------------------

def rhs(grid: GridNetwork, p, state: SystemState) -> SystemState:
    """Time derivative of ``state``; the returned 'state' holds (angle rates, frequency rates)."""
    dx = _rhs_vec(grid, np.asarray(p, dtype=float), state.to_vector())
    return SystemState(dx[: grid.n_buses], dx[grid.n_buses:])


def _rhs_vec(grid: GridNetwork, p: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = grid.n_buses
    gi, li = grid.gen_index, grid.load_index
    delta, omega = x[..., :n], x[..., n:]
    mismatch = p - line_flows(grid, delta)
    out = np.empty_like(x)
    ddelta = out[..., :n]
    ddelta[..., gi] = omega
    ddelta[..., li] = mismatch[..., li] / grid.damping[li]
    out[..., n:] = (mismatch[..., gi] - grid.damping[gi] * omega) / grid.inertia
    return out


def load_frequencies(grid: GridNetwork, p, angles) -> np.ndarray:
    """Load-bus angle rates reconstructed from the first-order load equation."""
    li = grid.load_index
    mismatch = np.asarray(p, dtype=float) - line_flows(grid, angles)
    return mismatch[..., li] / grid.damping[li]


def _rk4_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate(grid: GridNetwork, p, s0: SystemState, horizon: float = 20.0, step: float = 1e-3,
             detect_separation: bool = True, halt_on_separation: bool = False,
             output_every: int = 10, t0: float = 0.0,
             stop: Callable[[SystemState], bool] | None = None) -> Trajectory:
    """Classical fixed-step RK4 integration.

    A separation event is recorded the first time each line's unwrapped angle
    difference reaches 2*pi in magnitude.  ``stop`` is polled every step; when
    it returns True the integration ends at that step (used for staged
    control).  The last integrated state is always sampled.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    pv = np.asarray(p, dtype=float)
    n_steps = max(1, int(round(horizon / step)))
    x = s0.to_vector().astype(float)
    n = grid.n_buses
    E = grid.incidence

    def f(v):
        return _rhs_vec(grid, pv, v)

    times, samples = [t0], [x.copy()]
    events: list[Event] = []
    separated = np.zeros(grid.n_lines, dtype=bool)
    if detect_separation:
        separated |= np.abs(E @ x[:n]) >= SEPARATION_THRESHOLD
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, n_steps + 1):
            x = _rk4_step(f, x, step)
            t = t0 + i * step
            if not np.all(np.abs(x) < BLOWUP):
                raise NonFinite(f"state became non-finite at t = {t:.6g} s (step {step} too large?)")
            halt = False
            if detect_separation:
                crossed = (np.abs(E @ x[:n]) >= SEPARATION_THRESHOLD) & ~separated
                for e in np.flatnonzero(crossed):
                    events.append(Event(t, "separation", {"line": list(grid.edges[e]),
                                                          "angle_difference": float(E[e] @ x[:n])}))
                separated |= crossed
                halt = halt_on_separation and bool(crossed.any())
            if stop is not None and stop(SystemState.from_vector(grid, x)):
                halt = True
            if i % output_every == 0 or i == n_steps or halt:
                times.append(t)
                samples.append(x.copy())
            if halt:
                break
    X = np.array(samples)
    return Trajectory(np.array(times), X[:, :n], X[:, n:], events)


def integrate_batch(grid: GridNetwork, p, x0: np.ndarray, horizon: float, step: float = 1e-3) -> np.ndarray:
    """Integrate a batch of initial conditions (rows of ``x0``) with per-row injections ``p``.

    Returns the final states; used by Monte-Carlo suites where only the end
    point matters.
    """
    pv = np.asarray(p, dtype=float)
    x = np.array(x0, dtype=float)
    n_steps = max(1, int(round(horizon / step)))

    def f(v):
        return _rhs_vec(grid, pv, v)

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_steps):
            x = _rk4_step(f, x, step)
    if not np.all(np.isfinite(x)):
        raise NonFinite("batch state became non-finite")
    return x


# -- faults -----------------------------------------------------------------

def apply_fault(grid: GridNetwork, line: tuple[int, int]) -> GridNetwork:
    """Grid with ``line`` tripped; the result may be disconnected."""
    k, j = line
    try:
        return grid.without_line(k, j)
    except UnknownLine:
        raise UnknownLine(f"cannot trip line {{{k},{j}}}: not in the grid") from None


def fault_cleared_state(grid: GridNetwork, p_fault, scenario: FaultScenario, step: float = 1e-3) -> SystemState:
    """Simulate the fault-on grid from the pre-fault EP for the clearing time."""
    faulted = apply_fault(grid, scenario.tripped_line)
    s0 = SystemState.at_rest(grid, scenario.pre_fault_ep.angles)
    traj = simulate(faulted, p_fault, s0, horizon=scenario.clear_time, step=step, detect_separation=False)
    return traj.final_state


# -- energy -----------------------------------------------------------------

def _ep_angles(ep) -> np.ndarray:
    return np.asarray(ep.angles if isinstance(ep, EquilibriumPoint) else ep, dtype=float)


def potential_energy(grid: GridNetwork, angles, ep, weights: np.ndarray | None = None) -> np.ndarray:
    """Closed form of the path-integral potential; batches over leading axes of ``angles``."""
    a = grid.coupling if weights is None else weights
    y = edge_differences(grid, angles)
    ys = edge_differences(grid, _ep_angles(ep))
    return np.sum(a * (np.cos(ys) - np.cos(y) - np.sin(ys) * (y - ys)), axis=-1)


def kinetic_energy(grid: GridNetwork, gen_frequencies) -> np.ndarray:
    w = np.asarray(gen_frequencies, dtype=float)
    return np.sum(grid.inertia * w**2, axis=-1) / 2


def energy(grid: GridNetwork, s: SystemState, ep) -> float:
    return float(kinetic_energy(grid, s.gen_frequencies) + potential_energy(grid, s.angles, ep))


def trajectory_energy(grid: GridNetwork, traj: Trajectory, ep) -> np.ndarray:
    return kinetic_energy(grid, traj.gen_frequencies) + potential_energy(grid, traj.angles, ep)


def dissipation(grid: GridNetwork, p, angles, gen_frequencies) -> np.ndarray:
    """Analytic energy rate ``-sum_k d_k (d delta_k/dt)^2`` over all buses."""
    gi, li = grid.gen_index, grid.load_index
    w_load = load_frequencies(grid, p, angles)
    w_gen = np.asarray(gen_frequencies, dtype=float)
    return -(np.sum(grid.damping[gi] * w_gen**2, axis=-1) + np.sum(grid.damping[li] * w_load**2, axis=-1))


@dataclass(frozen=True)
class DecayCheck:
    max_increment: float
    energies: np.ndarray
    dissipation: np.ndarray


def energy_decay_check(grid: GridNetwork, p, traj: Trajectory, ep) -> DecayCheck:
    E = trajectory_energy(grid, traj, ep)
    inc = float(np.max(np.diff(E))) if len(E) > 1 else 0.0
    inc = max(inc, 0.0)
    return DecayCheck(inc, E, dissipation(grid, p, traj.angles, traj.gen_frequencies))


# -- distances --------------------------------------------------------------

def angle_distance(s, ep) -> float | np.ndarray:
    """Euclidean distance between angle differences taken to bus 1.

    ``s`` may be a SystemState, an EquilibriumPoint, or an array of angles
    (batched over leading axes).
    """
    if isinstance(s, (SystemState, EquilibriumPoint)):
        x = s.angles
    else:
        x = np.asarray(s, dtype=float)
    y = _ep_angles(ep)
    dx = x - x[..., :1]
    dy = y - y[0]
    d = np.sqrt(np.sum((dx - dy) ** 2, axis=-1))
    return float(d) if np.ndim(d) == 0 else d
