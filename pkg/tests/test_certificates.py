import math

import cvxopt
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invstab.certificates import (
    CENTER_OUTSIDE_P,
    EMPTY_REGION,
    EP_OUTSIDE_LAMBDA,
    HALF_PI,
    classical_certificate,
    e_min_oracle,
    g_constant,
    inverse_region,
    min_distance_to_boundary,
    quad_lower_D,
    quad_upper_F,
    region_contains,
    theorem1_certificate,
)
from invstab.dynamics import SystemState, energy
from invstab.grid import Bus, GridNetwork, InjectionVector, Line, edge_differences
from invstab.powerflow import injections_from_angles, solve_equilibrium
from invstab.sampling import random_angles_in_box, random_grid

from conftest import two_bus


def test_g_constant_values():
    assert g_constant(0.0) == pytest.approx(2 / math.pi)
    assert g_constant(math.pi / 6) == pytest.approx(0.5 / (math.pi / 3))
    with pytest.raises(ValueError):
        g_constant(HALF_PI)


@given(st.floats(0, 1.5), st.floats(0, 1.5))
def test_g_monotone(l1, l2):
    lo, hi = sorted((l1, l2))
    assert g_constant(lo) >= g_constant(hi) - 1e-15


@given(st.floats(0.01, 1.5), st.floats(0, 1), st.floats(-1, 1))
def test_sine_gap_inequality(lam, u, v):
    y = lam * (2 * u - 1)
    x = HALF_PI * v
    gap = math.cos(y) - math.cos(x) - math.sin(y) * (x - y)
    assert gap >= g_constant(lam) * (x - y) ** 2 / 2 - 1e-12
    assert gap <= (x - y) ** 2 / 2 + 1e-12


def test_two_bus_radius_closed_form():
    # single edge: r = 1/a, h = pi/2 from a flat center
    g = two_bus(a=2.0)
    bd = min_distance_to_boundary(g, np.zeros(2), math.pi / 4)
    assert bd.radius == pytest.approx(g_constant(math.pi / 4) * 2.0 * (math.pi / 2) ** 2 / 2)
    assert abs(edge_differences(g, bd.point)[0]) == pytest.approx(HALF_PI)


def test_center_outside_P(grid9, case):
    region = inverse_region(grid9, case.fault_cleared, 0.5288)
    assert region.radius == 0.0
    assert CENTER_OUTSIDE_P in region.caveats and EMPTY_REGION in region.caveats
    assert set(region.to_dict()) == {"lambda", "g", "R", "threshold", "kinetic_offset", "empty", "caveats"}


def _qp_radius(g, d0, lam):
    """Minimum of D over each face of the box, each face an exact convex QP."""
    cvxopt.solvers.options["show_progress"] = False
    E = g.incidence[:, 1:]
    z0 = (d0 - d0[0])[1:]
    Q = E.T @ (g_constant(lam) * g.coupling_lo[:, None] * E)
    G = cvxopt.matrix(np.vstack([E, -E]))
    h = cvxopt.matrix(np.full(2 * g.n_lines, HALF_PI))
    best = math.inf
    for e in range(g.n_lines):
        for s in (1, -1):
            sol = cvxopt.solvers.qp(cvxopt.matrix(Q), cvxopt.matrix(-Q @ z0), G, h,
                                    cvxopt.matrix(E[e][None, :]), cvxopt.matrix([s * HALF_PI]))
            if sol["status"] == "optimal":
                z = np.array(sol["x"]).ravel()
                best = min(best, float((z - z0) @ Q @ (z - z0) / 2))
    return best


@given(st.integers(2, 7), st.integers(0, 2**31 - 1), st.floats(0.1, 1.4))
def test_radius_matches_face_qp(n, seed, lam):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, n, coupling_spread=0.3)
    d0 = random_angles_in_box(rng, g, 1.2, 1)[0]
    bd = min_distance_to_boundary(g, d0, lam)
    assert bd.radius == pytest.approx(_qp_radius(g, d0, lam), rel=1e-6, abs=1e-10)
    # the closed-form minimiser lies on the boundary of the box
    y = edge_differences(g, bd.point)
    assert np.max(np.abs(y)) == pytest.approx(HALF_PI, abs=1e-9)
    assert quad_lower_D(g, d0, bd.point, lam) == pytest.approx(bd.radius, rel=1e-9)


def test_tie_broken_by_lowest_edge():
    g = two_bus()
    bd = min_distance_to_boundary(g, np.zeros(2), 0.5)
    assert bd.face == ((1, 2), 1)


@given(st.integers(2, 9), st.integers(0, 2**31 - 1), st.floats(0.1, 1.5))
def test_sandwich(n, seed, lam):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, n, coupling_spread=0.2)
    y = random_angles_in_box(rng, g, lam, 1)[0]
    x = random_angles_in_box(rng, g, HALF_PI, 1)[0]
    w = rng.normal(size=g.n_generators)
    s = SystemState(x, w)
    kin = float(np.sum(g.inertia * w**2) / 2)
    # E is the energy with the nominal coupling; D and F bracket it with a_lo and a_hi
    E = energy(g, s, y)
    assert kin + quad_lower_D(g, x, y, lam) <= E + 1e-12
    assert E <= quad_upper_F(g, s, y) + 1e-12


def test_emin_two_bus():
    g = two_bus()
    assert e_min_oracle(g, [0.0, -math.pi / 6], restarts=3).value == pytest.approx(
        math.cos(math.pi / 6) - 0.5 * (math.pi / 2 - math.pi / 6), abs=1e-8)
    assert e_min_oracle(g, [0.0, 0.0], restarts=3).value == pytest.approx(1.0, abs=1e-8)


def test_emin_prefix_property(grid9, desired):
    a = e_min_oracle(grid9, desired, restarts=2, seed=7).value
    b = e_min_oracle(grid9, desired, restarts=4, seed=7).value
    assert b <= a + 1e-12


def test_certificates_pass_at_ep(grid9, desired):
    s = SystemState.at_rest(grid9, desired.angles)
    assert theorem1_certificate(grid9, s, desired, math.pi / 3).passes
    assert classical_certificate(grid9, s, desired, restarts=2).passes


def test_inverse_certificate_fault_cleared(grid9, case, desired):
    rep = theorem1_certificate(grid9, case.fault_cleared, desired, 0.5288)
    assert not rep.passes and CENTER_OUTSIDE_P in rep.caveats


def test_ep_outside_lambda_flagged(grid9, desired):
    s = SystemState.at_rest(grid9, desired.angles)
    rep = theorem1_certificate(grid9, s, desired, 0.3)
    assert EP_OUTSIDE_LAMBDA in rep.caveats and not rep.passes


@given(st.floats(0.2, 1.4), st.floats(0.2, 1.4), st.integers(0, 2**31 - 1))
def test_lambda_box_nesting(l1, l2, seed):
    lo, hi = sorted((l1, l2))
    rng = np.random.default_rng(seed)
    g = random_grid(rng, 6)
    y = random_angles_in_box(rng, g, 1.4, 1)[0]
    s0 = SystemState.at_rest(g, np.zeros(6))
    m_lo = region_contains(inverse_region(g, s0, lo), y)
    m_hi = region_contains(inverse_region(g, s0, hi), y)
    if m_lo.lambda_margin >= 0:
        assert m_hi.lambda_margin >= 0


def test_region_interval_couplings_use_lo_and_hi():
    g = GridNetwork((Bus(1, "generator", 1.0, 0.1, 0.1), Bus(2, "load", 1.0, 0.1)),
                    (Line(1, 2, 2.0, coupling_lo=1.0, coupling_hi=3.0),))
    region = inverse_region(g, np.zeros(2), 0.5)
    assert region.radius == pytest.approx(g_constant(0.5) * 1.0 * HALF_PI**2 / 2)
    assert region_contains(region, [0.0, 0.2]).ball_margin == pytest.approx(region.threshold - 3.0 * 0.04 / 2)


def test_certificate_sound_on_small_random_grids():
    rng = np.random.default_rng(5)
    from invstab.sampling import convergence_trials, sample_region_eps
    for _ in range(3):
        g = random_grid(rng, 5)
        x0 = random_angles_in_box(rng, g, 0.3, 1)[0]
        p = injections_from_angles(g, x0)
        ep0 = solve_equilibrium(g, InjectionVector(p - p.mean()), guess=x0)
        s0 = SystemState.at_rest(g, ep0.angles)
        region = inverse_region(g, s0, 1.0)
        eps = sample_region_eps(region, rng, 5)
        for y in eps:
            assert theorem1_certificate(g, s0, y, 1.0).passes or region_contains(region, y).ball_margin < 1e-12
        trials = convergence_trials(g, s0.to_vector(), eps, horizon=40.0)
        assert trials.counterexamples == 0
