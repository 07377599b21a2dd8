import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from invstab.certificates import inverse_region, region_contains
from invstab.dynamics import SystemState
from invstab.grid import edge_differences
from invstab.sampling import convergence_trials, random_angles_in_box, random_grid, sample_region_eps


@given(st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_random_grid_valid(n, seed):
    g = random_grid(np.random.default_rng(seed), n, coupling_spread=0.2)
    assert g.n_buses == n and g.is_connected() and g.n_generators >= 1
    assert np.all(g.coupling_lo <= g.coupling) and np.all(g.coupling <= g.coupling_hi)


@given(st.integers(2, 9), st.integers(0, 2**31 - 1), st.floats(0.1, 1.5))
def test_box_samples_inside(n, seed, bound):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, n)
    x = random_angles_in_box(rng, g, bound, 5)
    assert np.all(np.abs(edge_differences(g, x)) <= bound)
    assert np.all(x[:, 0] == 0)


def test_region_samples_inside_and_reproducible(grid9, desired):
    region = inverse_region(grid9, SystemState.at_rest(grid9, desired.angles), 1.0)
    a = sample_region_eps(region, np.random.default_rng(0), 50)
    assert all(region_contains(region, y).inside for y in a)
    assert np.array_equal(a, sample_region_eps(region, np.random.default_rng(0), 50))


def test_convergence_trials_at_ep(grid9, desired):
    s = SystemState.at_rest(grid9, desired.angles)
    tr = convergence_trials(grid9, s.to_vector(), desired.angles[None, :], horizon=0.1)
    assert tr.counterexamples == 0 and tr.distances[0] < 1e-12
