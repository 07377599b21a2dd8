import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invstab.errors import NonConvergence, SingularJacobian
from invstab.grid import InjectionVector, edge_differences, edge_infinity_norm
from invstab.powerflow import (
    EquilibriumPoint,
    check_sync_condition,
    dc_approx_ep,
    in_box,
    injections_from_angles,
    line_flows,
    solve_equilibrium,
)
from invstab.sampling import random_angles_in_box, random_grid

from conftest import two_bus


def test_two_bus_analytic():
    ep = solve_equilibrium(two_bus(), InjectionVector([0.5, -0.5]))
    assert ep.angles[0] == 0.0
    assert ep.angles[0] - ep.angles[1] == pytest.approx(math.pi / 6, abs=1e-12)


def test_zero_injections_flat():
    ep = solve_equilibrium(two_bus(), InjectionVector([0.0, 0.0]))
    assert np.allclose(ep.angles, 0) and ep.iterations == 0


def test_no_solution_beyond_capacity():
    with pytest.raises((NonConvergence, SingularJacobian)):
        solve_equilibrium(two_bus(), InjectionVector([1.2, -1.2]))


def test_gauge_fixed_to_bus_one():
    ep = EquilibriumPoint(np.array([1.0, 0.5, 2.0]))
    assert np.allclose(ep.angles, [0.0, -0.5, 1.0])


def test_desired_ep_matches_reference(case, desired):
    ref = np.asarray(case.reference["desired_ep"])
    assert np.max(np.abs((desired.angles - desired.angles[0]) - (ref - ref[0]))) < 1e-3


def test_flows_are_balanced(grid9, rng):
    x = rng.normal(size=(5, 9))
    assert np.allclose(line_flows(grid9, x).sum(axis=1), 0, atol=1e-12)


def test_dc_approx_gauge(grid9, case):
    x = dc_approx_ep(grid9, case.nominal)
    assert x.sum() == pytest.approx(0.0, abs=1e-12)
    assert dc_approx_ep(grid9, case.nominal, reference_gauge=True)[0] == 0.0


def test_in_box():
    g = two_bus()
    chk = in_box(g, [0.0, -1.0], math.pi / 2)
    assert chk.inside and chk.worst_edge == (1, 2)
    assert not in_box(g, [0.0, 2.0], math.pi / 2).inside
    with pytest.raises(ValueError):
        in_box(g, [0.0, 0.0], 2.0)


def test_sync_condition_nominal_case(grid9, case):
    rep = check_sync_condition(grid9, case.reference_optimized, math.pi / 89)
    assert rep.passes and rep.ep is not None and rep.ep_in_lambda


def test_sync_condition_scaled_fails(grid9, case):
    rep = check_sync_condition(grid9, InjectionVector(case.reference_optimized.values * 30), math.pi / 89)
    assert not rep.passes
    assert rep.norm_value == pytest.approx(30 * edge_infinity_norm(grid9, dc_approx_ep(grid9, case.reference_optimized)))


@given(st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_round_trip_from_angles(n, seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, n)
    x = random_angles_in_box(rng, g, 1.2, 1)[0]
    p = injections_from_angles(g, x)
    ep = solve_equilibrium(g, InjectionVector(p - p.mean()), guess=x)
    assert np.allclose(edge_differences(g, ep.angles), edge_differences(g, x), atol=1e-10)


@given(st.integers(2, 9), st.integers(0, 2**31 - 1), st.floats(0.05, 1.4))
def test_newton_from_dc_guess_solves_small_loads(n, seed, lam):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, n)
    p = rng.normal(size=n)
    p -= p.mean()
    norm = edge_infinity_norm(g, dc_approx_ep(g, p))
    p *= 0.9 * math.sin(lam) / norm
    ep = solve_equilibrium(g, InjectionVector(p - p.mean()))
    assert ep.residual <= 1e-10
    assert ep.in_Lambda(g, lam)
