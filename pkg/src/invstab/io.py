"""File formats: injections, states, scenario batches, trajectory CSV and event JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dynamics import Event, SystemState, Trajectory, angle_distance, trajectory_energy
from .errors import ParseError, ValidationError
from .grid import BALANCE_TOL, GridNetwork, InjectionVector, read_json

SIG = 12


def fmt(x: float) -> str:
    return f"{x:.{SIG}g}"


def _injection_values(doc, grid: GridNetwork, where: str) -> np.ndarray:
    if not isinstance(doc, list):
        raise ParseError(f"{where}: injections must be an array of {{bus, power}}")
    values = np.full(grid.n_buses, np.nan)
    for i, item in enumerate(doc):
        if not isinstance(item, dict) or set(item) != {"bus", "power"}:
            raise ParseError(f"{where}[{i}]: expected keys 'bus' and 'power'")
        bus, power = item["bus"], item["power"]
        if isinstance(bus, bool) or not isinstance(bus, int) or not 1 <= bus <= grid.n_buses:
            raise ParseError(f"{where}[{i}]: unknown bus {bus!r}")
        if isinstance(power, bool) or not isinstance(power, (int, float)):
            raise ParseError(f"{where}[{i}]: power must be a number")
        if not np.isnan(values[bus - 1]):
            raise ParseError(f"{where}: bus {bus} listed twice")
        values[bus - 1] = power
    missing = [i + 1 for i in np.flatnonzero(np.isnan(values))]
    if missing:
        raise ParseError(f"{where}: no injection for buses {missing}")
    return values


def injections_from_doc(doc, grid: GridNetwork, where: str = "injections") -> InjectionVector:
    values = _injection_values(doc, grid, where)
    imbalance = float(values.sum())
    if abs(imbalance) > BALANCE_TOL:
        raise ValidationError(f"{where}: injections are unbalanced, sum = {imbalance:.12g} (tolerance {BALANCE_TOL:g})")
    return InjectionVector(values)


def read_injections(path, grid: GridNetwork) -> InjectionVector:
    return injections_from_doc(read_json(path), grid, str(path))


def injections_to_doc(p) -> list[dict]:
    return [{"bus": i + 1, "power": float(v)} for i, v in enumerate(np.asarray(p, dtype=float))]


def state_from_doc(doc, grid: GridNetwork, where: str = "state") -> SystemState:
    if not isinstance(doc, dict) or not {"angles"} <= set(doc) <= {"angles", "gen_frequencies"}:
        raise ParseError(f"{where}: expected keys 'angles' and optional 'gen_frequencies'")
    angles = np.asarray(doc["angles"], dtype=float)
    freqs = np.asarray(doc.get("gen_frequencies", [0.0] * grid.n_generators), dtype=float)
    if angles.shape != (grid.n_buses,):
        raise ValidationError(f"{where}: {len(angles)} angles for {grid.n_buses} buses")
    if freqs.shape != (grid.n_generators,):
        raise ValidationError(f"{where}: {len(freqs)} frequencies for {grid.n_generators} generators")
    return SystemState(angles, freqs)


def read_state(path, grid: GridNetwork) -> SystemState:
    return state_from_doc(read_json(path), grid, str(path))


def state_to_doc(s: SystemState) -> dict:
    return {"angles": s.angles.tolist(), "gen_frequencies": s.gen_frequencies.tolist()}


def read_batch(path, grid: GridNetwork) -> list[tuple[str, np.ndarray]]:
    """Scenario batch: an array whose items are injection arrays or ``{name, injections}`` objects.

    Balance is not enforced here so that the screen can report unbalanced rows.
    """
    doc = read_json(path)
    if not isinstance(doc, list):
        raise ParseError(f"{path}: batch must be an array")
    out = []
    for i, item in enumerate(doc):
        if isinstance(item, dict):
            name = str(item.get("name", f"scenario_{i + 1}"))
            inj = item.get("injections")
        else:
            name, inj = f"scenario_{i + 1}", item
        out.append((name, _injection_values(inj, grid, f"{path}[{i}]")))
    return out


def write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def trajectory_header(grid: GridNetwork) -> list[str]:
    return (["t"] + [f"delta_{k + 1}" for k in range(grid.n_buses)]
            + [f"omega_g{g + 1}" for g in range(grid.n_generators)] + ["energy", "dist_target"])


def write_trajectory_csv(path, grid: GridNetwork, traj: Trajectory, target=None) -> None:
    """One row per sample; energy and distance columns are empty without a target."""
    if target is not None:
        energies = trajectory_energy(grid, traj, target)
        dists = np.atleast_1d(angle_distance(traj.angles, target))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(grid))
        for i, t in enumerate(traj.times):
            row = [fmt(t)] + [fmt(v) for v in traj.angles[i]] + [fmt(v) for v in traj.gen_frequencies[i]]
            row += [fmt(energies[i]), fmt(dists[i])] if target is not None else ["", ""]
            w.writerow(row)


def events_to_doc(events: list[Event]) -> list[dict]:
    return [{"time": float(fmt(e.time)), "kind": e.kind, "detail": e.detail} for e in events]


def write_events_json(path, events: list[Event]) -> None:
    write_json(path, events_to_doc(events))


def events_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".events.json")
