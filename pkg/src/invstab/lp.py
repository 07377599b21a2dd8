"""Dense two-phase simplex for small linear programs.

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lo <= x <= hi     (either bound may be infinite)

Problems here have tens of variables at most, so a tableau implementation
with Bland's rule is plenty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, Unbounded

TOL = 1e-9


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int


def _pivot(T: np.ndarray, basis: list[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run(T: np.ndarray, basis: list[int], allowed: int, max_iter: int) -> int:
    """Minimise the objective held in the last row of ``T`` (reduced costs)."""
    m = T.shape[0] - 1
    it = 0
    while True:
        cost = T[-1, :allowed]
        entering = next((j for j in range(allowed) if cost[j] < -TOL), None)
        if entering is None:
            return it
        col = T[:m, entering]
        best, leave = np.inf, None
        for r in range(m):
            if col[r] > TOL:
                ratio = T[r, -1] / col[r]
                if ratio < best - TOL or (abs(ratio - best) <= TOL and basis[r] < basis[leave]):
                    best, leave = ratio, r
        if leave is None:
            raise Unbounded("linear program is unbounded")
        _pivot(T, basis, leave, entering)
        it += 1
        if it > max_iter:
            raise RuntimeError("simplex iteration cap reached")


def _standard_form(c, A_ub, b_ub, A_eq, b_eq, bounds):
    """Rewrite with nonnegative variables and equality rows; ``recover`` maps back."""
    n = len(c)
    cols = []  # per original var: list of (std index, coefficient)
    offset = np.zeros(n)
    n_std = 0
    extra_rows = []  # (std index, upper bound) for finite two-sided boxes
    for i, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else lo
        hi = np.inf if hi is None else hi
        if lo > hi:
            raise Infeasible(f"variable {i}: lower bound {lo} exceeds upper bound {hi}")
        if np.isfinite(lo):
            offset[i] = lo
            cols.append([(n_std, 1.0)])
            if np.isfinite(hi):
                extra_rows.append((n_std, hi - lo))
            n_std += 1
        elif np.isfinite(hi):
            offset[i] = hi
            cols.append([(n_std, -1.0)])
            n_std += 1
        else:
            cols.append([(n_std, 1.0), (n_std + 1, -1.0)])
            n_std += 2

    def expand(A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        out = np.zeros((A.shape[0], n_std))
        for i, entries in enumerate(cols):
            for j, s in entries:
                out[:, j] += s * A[:, i]
        return out

    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)

    ub_rows = [expand(A_ub)] if len(A_ub) else []
    ub_rhs = [b_ub - A_ub @ offset] if len(A_ub) else []
    for j, width in extra_rows:
        row = np.zeros((1, n_std))
        row[0, j] = 1.0
        ub_rows.append(row)
        ub_rhs.append(np.array([width]))
    Aub = np.vstack(ub_rows) if ub_rows else np.zeros((0, n_std))
    bub = np.concatenate(ub_rhs) if ub_rhs else np.zeros(0)
    Aeq = expand(A_eq) if len(A_eq) else np.zeros((0, n_std))
    beq = b_eq - A_eq @ offset if len(A_eq) else np.zeros(0)

    m_ub = len(Aub)
    A = np.block([[Aub, np.eye(m_ub)], [Aeq, np.zeros((len(Aeq), m_ub))]])
    b = np.concatenate([bub, beq])
    cs = np.concatenate([expand(np.asarray(c, dtype=float)[None, :])[0], np.zeros(m_ub)])

    def recover(z):
        x = offset.copy()
        for i, entries in enumerate(cols):
            for j, s in entries:
                x[i] += s * z[j]
        return x

    return cs, A, b, recover


def simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None, max_iter: int = 10_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    if bounds is None:
        bounds = [(0.0, None)] * len(c)
    cs, A, b, recover = _standard_form(c, A_ub, b_ub, A_eq, b_eq, bounds)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase I: one artificial per row
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    it = _run(T, basis, n + m, max_iter)
    if -T[-1, -1] > 1e-8 * max(1.0, np.abs(b).max(initial=0.0)):
        raise Infeasible(f"linear program is infeasible (phase I residual {-T[-1, -1]:.3e})")

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            col = next((j for j in range(n) if abs(T[r, j]) > TOL), None)
            if col is None:
                continue
            _pivot(T, basis, r, col)
        keep.append(r)
    T = np.vstack([T[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = [basis[r] for r in keep]

    # phase II
    T[-1, :n] = cs
    for r, j in enumerate(basis):
        T[-1] -= cs[j] * T[r]
    it += _run(T, basis, n, max_iter)
    z = np.zeros(n)
    for r, j in enumerate(basis):
        z[j] = T[r, -1]
    x = recover(z)
    return LPResult(x, float(c @ x), it)
