import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from invstab.errors import Infeasible, Unbounded
from invstab.lp import simplex


def test_textbook():
    # max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18
    res = simplex([-3, -5], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18])
    assert res.fun == pytest.approx(-36)
    assert np.allclose(res.x, [2, 6])


def test_free_and_upper_bounded_vars():
    res = simplex([1, -1], A_eq=[[1, 1]], b_eq=[0], bounds=[(None, None), (None, 3)])
    assert np.allclose(res.x, [-3, 3])


def test_infeasible():
    with pytest.raises(Infeasible):
        simplex([1], A_ub=[[1]], b_ub=[-1], bounds=[(0, None)])
    with pytest.raises(Infeasible):
        simplex([1], bounds=[(2, 1)])


def test_unbounded():
    with pytest.raises(Unbounded):
        simplex([-1, 0], A_ub=[[1, -1]], b_ub=[1])


def test_degenerate_redundant_equalities():
    res = simplex([1, 1], A_eq=[[1, 1], [2, 2]], b_eq=[1, 2])
    assert res.fun == pytest.approx(1)


@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 6))
def test_matches_scipy(seed, n, m):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(-1, 1, size=n)
    b = A @ x0 + rng.uniform(0, 1, size=m)  # x0 is feasible
    Aeq = rng.normal(size=(1, n))
    beq = Aeq @ x0
    bounds = [(-2.0, 2.0) if rng.random() < 0.7 else (None, None) for _ in range(n)]
    bounds = [(-2.0, 2.0) for _ in range(n)] if all(lo is None for lo, _ in bounds) else bounds
    ref = linprog(c, A_ub=A, b_ub=b, A_eq=Aeq, b_eq=beq, bounds=bounds, method="highs")
    if ref.status == 3:
        with pytest.raises(Unbounded):
            simplex(c, A, b, Aeq, beq, bounds)
        return
    assert ref.status == 0
    res = simplex(c, A, b, Aeq, beq, bounds)
    assert res.fun == pytest.approx(ref.fun, abs=1e-7)
    assert np.all(A @ res.x <= b + 1e-8)
    assert np.allclose(Aeq @ res.x, beq, atol=1e-8)
