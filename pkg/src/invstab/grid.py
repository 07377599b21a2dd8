"""Grid topology, parameters, file ingestion and graph linear algebra.

Bus ids are 1-based in files and in the public data types; internally bus
``id`` lives at array index ``id - 1``.  Lines are oriented as given
(``from`` -> ``to``); the incidence row of a line is +1 at ``from`` and -1 at
``to``, so ``incidence @ angles`` gives the line angle differences.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import ParseError, SingularityError, UnknownLine, ValidationError

BALANCE_TOL = 1e-9

WeightChoice = Literal["nominal", "lo", "hi"]


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "generator" | "load"
    voltage: float
    damping: float
    inertia: float | None = None

    @property
    def is_generator(self) -> bool:
        return self.kind == "generator"


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    coupling_lo: float | None = None
    coupling_hi: float | None = None

    @property
    def key(self) -> frozenset:
        return frozenset((self.from_bus, self.to_bus))


@dataclass(frozen=True)
class GridNetwork:
    """Lossless structure-preserving grid.

    ``require_connected`` is only switched off for fault-on topologies built
    by :func:`invstab.dynamics.apply_fault`.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    require_connected: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        self._validate()

    def _validate(self) -> None:
        ids = [b.id for b in self.buses]
        if sorted(ids) != list(range(1, len(ids) + 1)) or ids != sorted(ids):
            raise ValidationError(f"bus ids must be 1..N in order, got {ids}")
        for b in self.buses:
            if b.kind not in ("generator", "load"):
                raise ValidationError(f"bus {b.id}: unknown kind {b.kind!r}")
            if not b.voltage > 0:
                raise ValidationError(f"bus {b.id}: voltage must be positive, got {b.voltage}")
            if not b.damping > 0:
                raise ValidationError(f"bus {b.id}: damping must be positive, got {b.damping}")
            if b.is_generator and not (b.inertia is not None and b.inertia > 0):
                raise ValidationError(f"bus {b.id}: generator inertia must be positive, got {b.inertia}")
        if not any(b.is_generator for b in self.buses):
            raise ValidationError("grid has no generator bus")
        seen = set()
        n = len(self.buses)
        for ln in self.lines:
            name = f"line {{{ln.from_bus},{ln.to_bus}}}"
            if ln.from_bus == ln.to_bus:
                raise ValidationError(f"{name}: self loop")
            for b in (ln.from_bus, ln.to_bus):
                if not 1 <= b <= n:
                    raise ValidationError(f"{name}: unknown bus {b}")
            if ln.key in seen:
                raise ValidationError(f"{name}: duplicate line")
            seen.add(ln.key)
            if not ln.susceptance > 0:
                raise ValidationError(f"{name}: susceptance must be positive, got {ln.susceptance}")
        a = self.coupling
        for ln, lo, nom, hi in zip(self.lines, self.coupling_lo, a, self.coupling_hi):
            if not (0 < lo <= nom * (1 + 1e-12) and nom <= hi * (1 + 1e-12)):
                raise ValidationError(
                    f"line {{{ln.from_bus},{ln.to_bus}}}: coupling interval [{lo}, {hi}] "
                    f"must satisfy 0 < lo <= {nom} <= hi"
                )
        if self.require_connected and not self.is_connected():
            raise ValidationError(f"grid is disconnected: buses {self.unreachable_buses()} unreachable from bus 1")

    # -- derived sets -----------------------------------------------------
    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @cached_property
    def gen_index(self) -> np.ndarray:
        return np.array([i for i, b in enumerate(self.buses) if b.is_generator], dtype=int)

    @cached_property
    def load_index(self) -> np.ndarray:
        return np.array([i for i, b in enumerate(self.buses) if not b.is_generator], dtype=int)

    @property
    def n_generators(self) -> int:
        return len(self.gen_index)

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple((ln.from_bus, ln.to_bus) for ln in self.lines)

    @cached_property
    def incidence(self) -> np.ndarray:
        E = np.zeros((self.n_lines, self.n_buses))
        for i, (k, j) in enumerate(self.edges):
            E[i, k - 1] = 1.0
            E[i, j - 1] = -1.0
        E.flags.writeable = False
        return E

    @cached_property
    def voltages(self) -> np.ndarray:
        return np.array([b.voltage for b in self.buses])

    @cached_property
    def damping(self) -> np.ndarray:
        return np.array([b.damping for b in self.buses])

    @cached_property
    def inertia(self) -> np.ndarray:
        """Inertia of generator buses, in generator order."""
        return np.array([self.buses[i].inertia for i in self.gen_index], dtype=float)

    @cached_property
    def coupling(self) -> np.ndarray:
        V = self.voltages
        return np.array([V[ln.from_bus - 1] * V[ln.to_bus - 1] * ln.susceptance for ln in self.lines])

    @cached_property
    def coupling_lo(self) -> np.ndarray:
        return np.array([a if ln.coupling_lo is None else ln.coupling_lo for ln, a in zip(self.lines, self.coupling)])

    @cached_property
    def coupling_hi(self) -> np.ndarray:
        return np.array([a if ln.coupling_hi is None else ln.coupling_hi for ln, a in zip(self.lines, self.coupling)])

    def weights(self, weight_choice: WeightChoice = "nominal") -> np.ndarray:
        try:
            return {"nominal": self.coupling, "lo": self.coupling_lo, "hi": self.coupling_hi}[weight_choice]
        except KeyError:
            raise ValueError(f"unknown weight choice {weight_choice!r}") from None

    def line_index(self, k: int, j: int) -> int:
        key = frozenset((k, j))
        for i, ln in enumerate(self.lines):
            if ln.key == key:
                return i
        raise UnknownLine(f"no line between buses {k} and {j}")

    def neighbours(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.buses]
        for k, j in self.edges:
            adj[k - 1].append(j - 1)
            adj[j - 1].append(k - 1)
        return adj

    def unreachable_buses(self) -> list[int]:
        adj = self.neighbours()
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return [i + 1 for i in range(self.n_buses) if i not in seen]

    def is_connected(self) -> bool:
        return not self.unreachable_buses()

    def without_line(self, k: int, j: int) -> "GridNetwork":
        idx = self.line_index(k, j)
        lines = self.lines[:idx] + self.lines[idx + 1:]
        return replace(self, lines=lines, require_connected=False)


@dataclass(frozen=True)
class InjectionVector:
    """Per-bus active power injections; must sum to zero."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValidationError("injection vector must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValidationError("injection vector has non-finite entries")
        imbalance = float(v.sum())
        if abs(imbalance) > BALANCE_TOL:
            raise ValidationError(f"injections are unbalanced: sum = {imbalance:.12g}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def rebalanced(cls, values) -> "InjectionVector":
        """Spread any imbalance evenly over all buses (for rounded reference data)."""
        v = np.asarray(values, dtype=float)
        return cls(v - v.mean())

    def __len__(self) -> int:
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


# -- file ingestion ---------------------------------------------------------

_BUS_KEYS = {"id", "kind", "voltage", "inertia", "damping"}
_LINE_KEYS = {"from", "to", "susceptance", "coupling_lo", "coupling_hi"}


def _number(obj: dict, key: str, where: str, required: bool = True) -> float | None:
    if key not in obj:
        if required:
            raise ParseError(f"{where}: missing key {key!r}")
        return None
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ParseError(f"{where}: {key!r} must be a number, got {val!r}")
    return float(val)


def grid_from_dict(doc: dict) -> GridNetwork:
    if not isinstance(doc, dict):
        raise ParseError("grid document must be an object")
    extra = set(doc) - {"buses", "lines"}
    if extra:
        raise ParseError(f"unknown top-level keys: {sorted(extra)}")
    for key in ("buses", "lines"):
        if not isinstance(doc.get(key), list):
            raise ParseError(f"{key!r} must be an array")
    buses = []
    for i, b in enumerate(doc["buses"]):
        where = f"buses[{i}]"
        if not isinstance(b, dict):
            raise ParseError(f"{where}: must be an object")
        extra = set(b) - _BUS_KEYS
        if extra:
            raise ParseError(f"{where}: unknown keys {sorted(extra)}")
        bid = b.get("id")
        if isinstance(bid, bool) or not isinstance(bid, int):
            raise ParseError(f"{where}: 'id' must be an integer")
        where = f"bus {bid}"
        kind = b.get("kind")
        if kind not in ("generator", "load"):
            raise ParseError(f"{where}: 'kind' must be 'generator' or 'load', got {kind!r}")
        buses.append(
            Bus(
                id=bid,
                kind=kind,
                voltage=_number(b, "voltage", where),
                damping=_number(b, "damping", where),
                inertia=_number(b, "inertia", where, required=kind == "generator"),
            )
        )
    lines = []
    for i, ln in enumerate(doc["lines"]):
        where = f"lines[{i}]"
        if not isinstance(ln, dict):
            raise ParseError(f"{where}: must be an object")
        extra = set(ln) - _LINE_KEYS
        if extra:
            raise ParseError(f"{where}: unknown keys {sorted(extra)}")
        for key in ("from", "to"):
            if isinstance(ln.get(key), bool) or not isinstance(ln.get(key), int):
                raise ParseError(f"{where}: {key!r} must be an integer bus id")
        lines.append(
            Line(
                from_bus=ln["from"],
                to_bus=ln["to"],
                susceptance=_number(ln, "susceptance", where),
                coupling_lo=_number(ln, "coupling_lo", where, required=False),
                coupling_hi=_number(ln, "coupling_hi", where, required=False),
            )
        )
    buses.sort(key=lambda b: b.id)
    return GridNetwork(tuple(buses), tuple(lines))


def grid_to_dict(grid: GridNetwork) -> dict:
    buses = []
    for b in grid.buses:
        d = {"id": b.id, "kind": b.kind, "voltage": b.voltage, "damping": b.damping}
        if b.is_generator:
            d["inertia"] = b.inertia
        buses.append(d)
    lines = []
    for ln in grid.lines:
        d = {"from": ln.from_bus, "to": ln.to_bus, "susceptance": ln.susceptance}
        if ln.coupling_lo is not None:
            d["coupling_lo"] = ln.coupling_lo
        if ln.coupling_hi is not None:
            d["coupling_hi"] = ln.coupling_hi
        lines.append(d)
    return {"buses": buses, "lines": lines}


def read_json(path) -> object:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None


def load_grid(path: str | Path) -> GridNetwork:
    return grid_from_dict(read_json(path))


# -- linear algebra ---------------------------------------------------------

def weighted_laplacian(grid: GridNetwork, weight_choice: WeightChoice = "nominal") -> np.ndarray:
    E = grid.incidence
    w = grid.weights(weight_choice)
    return E.T @ (w[:, None] * E)


def laplacian_pseudoinverse(grid: GridNetwork, weight_choice: WeightChoice = "nominal") -> np.ndarray:
    """Moore-Penrose pseudoinverse of the coupling-weighted Laplacian.

    Solved on the mean-zero subspace through the bordered system
    ``[[L, 1], [1^T, 0]]``, which is nonsingular exactly when the graph is
    connected.
    """
    if not grid.is_connected():
        raise SingularityError(f"Laplacian pseudoinverse needs a connected graph; unreachable buses {grid.unreachable_buses()}")
    L = weighted_laplacian(grid, weight_choice)
    n = L.shape[0]
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = L
    K[:n, n] = 1.0
    K[n, :n] = 1.0
    rhs = np.zeros((n + 1, n))
    rhs[:n] = np.eye(n) - 1.0 / n
    try:
        X = np.linalg.solve(K, rhs)[:n]
    except np.linalg.LinAlgError as exc:
        raise SingularityError(str(exc)) from None
    return (X + X.T) / 2


def effective_resistances(grid: GridNetwork, weight_choice: WeightChoice = "lo") -> np.ndarray:
    """``c_e^T L^+ c_e`` for every line incidence row ``c_e``."""
    E = grid.incidence
    Lp = laplacian_pseudoinverse(grid, weight_choice)
    return np.einsum("ij,jk,ik->i", E, Lp, E)


def edge_differences(grid: GridNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != grid.n_buses:
        raise ValueError(f"vector has length {x.shape[-1]}, grid has {grid.n_buses} buses")
    return x @ grid.incidence.T


def edge_infinity_norm(grid: GridNetwork, x) -> float:
    diffs = edge_differences(grid, x)
    return float(np.max(np.abs(diffs))) if diffs.size else 0.0
