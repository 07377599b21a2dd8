import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invstab.dynamics import (
    FaultScenario,
    SystemState,
    Trajectory,
    angle_distance,
    apply_fault,
    dissipation,
    energy,
    energy_decay_check,
    fault_cleared_state,
    integrate_batch,
    potential_energy,
    rhs,
    simulate,
)
from invstab.errors import NonFinite, UnknownLine
from invstab.grid import InjectionVector
from invstab.powerflow import injections_from_angles, solve_equilibrium
from invstab.sampling import random_angles_in_box, random_grid

from conftest import two_bus


def test_rest_at_equilibrium_is_fixed_point(grid9, case, desired):
    d = rhs(grid9, case.nominal, SystemState.at_rest(grid9, desired.angles))
    assert np.allclose(d.angles, 0, atol=1e-9) and np.allclose(d.gen_frequencies, 0, atol=1e-9)


def test_constant_trajectory_from_ep(grid9, case, desired):
    traj = simulate(grid9, case.nominal, SystemState.at_rest(grid9, desired.angles), horizon=1.0)
    assert np.max(np.abs(traj.angles - desired.angles)) < 1e-9
    assert traj.events == []


def test_two_bus_linear_rate():
    # load bus at flat start: d * w = P - a sin(delta_21); generator pinned by symmetry of its own law
    g = two_bus()
    s = SystemState(np.zeros(2), np.zeros(1))
    d = rhs(g, InjectionVector([0.5, -0.5]), s)
    assert d.angles[1] == pytest.approx(-0.5 / 0.1)
    assert d.gen_frequencies[0] == pytest.approx(0.5 / 0.1)


def test_rk4_order():
    g = two_bus()
    p = InjectionVector([0.3, -0.3])
    s0 = SystemState(np.array([0.0, 0.4]), np.array([0.2]))
    ref = simulate(g, p, s0, horizon=1.0, step=1e-4, detect_separation=False).final_state.angles
    e1 = np.abs(simulate(g, p, s0, horizon=1.0, step=4e-3, detect_separation=False).final_state.angles - ref).max()
    e2 = np.abs(simulate(g, p, s0, horizon=1.0, step=2e-3, detect_separation=False).final_state.angles - ref).max()
    assert e1 / e2 > 10  # fourth order: about 16


def test_uncontrolled_case_separates(grid9, case):
    traj = simulate(grid9, case.nominal, case.fault_cleared, horizon=10.0)
    lines = {frozenset(e.detail["line"]) for e in traj.events_of("separation")}
    assert {frozenset((4, 5)), frozenset((5, 7))} <= lines
    assert all(e.time <= 10.0 for e in traj.events)


def test_halt_on_separation(grid9, case):
    traj = simulate(grid9, case.nominal, case.fault_cleared, horizon=10.0, halt_on_separation=True)
    assert traj.times[-1] == pytest.approx(traj.events[0].time)


def test_huge_step_nonfinite(grid9, case):
    with pytest.raises(NonFinite):
        simulate(grid9, case.nominal, case.fault_cleared, step=100.0)


def test_fault_helpers(grid9, case, desired):
    with pytest.raises(UnknownLine):
        apply_fault(grid9, (1, 9))
    sc = FaultScenario((5, 7), 0.05, desired)
    s = fault_cleared_state(grid9, case.nominal, sc)
    assert s.angles.shape == (9,) and np.any(s.gen_frequencies != 0)


def test_batch_matches_single(grid9, case, desired, rng):
    x0 = np.concatenate([desired.angles, np.zeros(3)]) + rng.normal(scale=0.05, size=(4, 12))
    fin = integrate_batch(grid9, case.nominal.values, x0, horizon=0.5)
    one = simulate(grid9, case.nominal, SystemState.from_vector(grid9, x0[2]), horizon=0.5, detect_separation=False)
    assert np.allclose(fin[2], one.final_state.to_vector(), atol=1e-12)


def test_concatenate_drops_shared_sample():
    a = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 2)), np.zeros((2, 1)))
    b = Trajectory(np.array([1.0, 2.0]), np.ones((2, 2)), np.zeros((2, 1)))
    c = Trajectory.concatenate([a, b])
    assert list(c.times) == [0.0, 1.0, 2.0]


def test_energy_zero_at_ep(grid9, desired):
    assert energy(grid9, SystemState.at_rest(grid9, desired.angles), desired) == pytest.approx(0.0, abs=1e-12)


def test_energy_gauge_invariant(grid9, desired, rng):
    x = rng.normal(size=9)
    assert potential_energy(grid9, x + 3.0, desired) == pytest.approx(potential_energy(grid9, x, desired))


def test_angle_distance():
    assert angle_distance(np.array([1.0, 1.0]), np.array([0.0, 0.0])) == 0.0
    assert angle_distance(np.array([0.0, 3.0, 4.0]), np.zeros(3)) == pytest.approx(5.0)
    assert angle_distance(np.zeros((4, 3)), np.zeros(3)).shape == (4,)


def test_dissipation_matches_energy_derivative(grid9, case, desired, rng):
    s = SystemState(desired.angles + rng.normal(scale=0.1, size=9), rng.normal(scale=0.1, size=3))
    e0 = energy(grid9, s, desired)

    def fd(h):
        sh = simulate(grid9, case.nominal, s, horizon=h, step=h, detect_separation=False).final_state
        return (energy(grid9, sh, desired) - e0) / h

    rate = 2 * fd(5e-7) - fd(1e-6)  # Richardson: cancels the O(h) term
    assert rate == pytest.approx(float(dissipation(grid9, case.nominal, s.angles, s.gen_frequencies)), rel=1e-4)


@given(st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_energy_never_increases(n, seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, n)
    ep_angles = random_angles_in_box(rng, g, 1.0, 1)[0]
    p = injections_from_angles(g, ep_angles)
    p = InjectionVector(p - p.mean())
    ep = solve_equilibrium(g, p, guess=ep_angles)
    s0 = SystemState(ep.angles + rng.normal(scale=0.3, size=n), rng.normal(scale=0.3, size=g.n_generators))
    traj = simulate(g, p, s0, horizon=2.0, output_every=1, detect_separation=False)
    chk = energy_decay_check(g, p, traj, ep)
    assert chk.max_increment <= 1e-6 * max(1.0, chk.energies[0])
    assert np.all(chk.dissipation <= 0)
