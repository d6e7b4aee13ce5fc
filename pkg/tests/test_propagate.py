"""Evolution engines: exactness, cross-agreement, unitarity, time stepping."""

import math

import numpy as np
import pytest

from obslab.grid import Field, field_from_function, l2_norm, make_grid
from obslab.hamiltonian import HamiltonianSpec, gaussian_potential
from obslab.propagate import (ENGINES, PropagatorPlan, engine_cross_check,
                              evolve, evolve_backward, evolve_series,
                              free_gaussian_reference, snap_times)


def _rel(a: Field, b: Field) -> float:
    return l2_norm(Field(a.grid, a.values - b.values)) / max(l2_norm(b), 1e-300)


@pytest.fixture
def grid():
    return make_grid(1, 16.0, 256)


@pytest.fixture
def packet(grid):
    f = field_from_function(grid, lambda x: np.exp(-x**2) * np.exp(0.75j * x))
    return Field(grid, f.values / l2_norm(f))


def test_plan_validation(grid):
    with pytest.raises(ValueError):
        PropagatorPlan(HamiltonianSpec.free(grid), "magic")
    with pytest.raises(ValueError):
        PropagatorPlan(HamiltonianSpec.with_potential(
            grid, gaussian_potential(1.0)), "multiplier")
    with pytest.raises(ValueError):
        PropagatorPlan(HamiltonianSpec.free(make_grid(1, 16.0, 8192)), "dense")
    with pytest.raises(ValueError):
        PropagatorPlan(HamiltonianSpec.free(grid), "splitstep", dt=0.0)


def test_free_gaussian_reference_matches_independent_formula(grid):
    # u(x,t) for data exp(-x^2/(2 w^2)) evolved by the |xi|^2 multiplier
    w, t = 1.2, 0.8
    ref = free_gaussian_reference(grid, w, t)
    from obslab.grid import axis_coordinates
    x = axis_coordinates(grid)
    a = w**2 + 2j * t
    inline = w / np.sqrt(a) * np.exp(-x**2 / (2 * a))
    np.testing.assert_allclose(ref.values, inline, atol=1e-14)
    ref0 = free_gaussian_reference(grid, w, 0.0)
    np.testing.assert_allclose(ref0.values, np.exp(-x**2 / (2 * w**2)),
                               atol=1e-15)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_multiplier_engine_reproduces_closed_form(t):
    # box large enough that the dispersive tail stays below the tolerance
    g = make_grid(1, 32.0, 512)
    w = 1.0
    u0 = free_gaussian_reference(g, w, 0.0)
    plan = PropagatorPlan(HamiltonianSpec.free(g))
    got = evolve(plan, u0, t)
    assert _rel(got, free_gaussian_reference(g, w, t)) <= 1e-8


def test_half_convention_spreads_at_half_rate(grid):
    w = 1.0
    u0 = free_gaussian_reference(grid, w, 0.0)
    plan = PropagatorPlan(HamiltonianSpec.free(grid, convention="half"))
    got = evolve(plan, u0, 2.0)
    ref = free_gaussian_reference(grid, w, 2.0, convention="half")
    assert _rel(got, ref) <= 1e-8
    # and the half-convention reference at 2t equals the full one at t
    ref_full = free_gaussian_reference(grid, w, 1.0, convention="full")
    np.testing.assert_allclose(ref.values, ref_full.values, atol=1e-14)


def test_all_engines_agree_with_potential(grid):
    spec = HamiltonianSpec.with_potential(grid, gaussian_potential(1.0))
    f = field_from_function(grid, lambda x: np.exp(-(x - 1) ** 2))
    f = Field(grid, f.values / l2_norm(f))
    dense = evolve(PropagatorPlan(spec, "dense"), f, 1.0)
    split = evolve(PropagatorPlan(spec, "splitstep", dt=1e-3), f, 1.0)
    assert _rel(split, dense) <= 1e-6


def test_unitarity_across_engines(grid, packet):
    free = HamiltonianSpec.free(grid)
    pot = HamiltonianSpec.with_potential(grid, gaussian_potential(0.5))
    runs = [
        evolve(PropagatorPlan(free), packet, 3.0),
        evolve(PropagatorPlan(free, "dense"), packet, 3.0),
        evolve(PropagatorPlan(pot, "splitstep", dt=1e-2), packet, 3.0),
        evolve(PropagatorPlan(pot, "dense"), packet, 3.0),
    ]
    for out in runs:
        assert abs(l2_norm(out) - 1.0) <= 1e-10


def test_negative_time_and_grid_mismatch_raise(grid, packet):
    plan = PropagatorPlan(HamiltonianSpec.free(grid))
    with pytest.raises(ValueError):
        evolve(plan, packet, -0.1)
    other = field_from_function(make_grid(1, 16.0, 128), lambda x: np.exp(-x**2))
    with pytest.raises(ValueError):
        evolve(plan, other, 0.1)


def test_snap_times_rounds_to_step_lattice(grid):
    spec = HamiltonianSpec.with_potential(grid, gaussian_potential(1.0))
    split = PropagatorPlan(spec, "splitstep", dt=0.25)
    np.testing.assert_allclose(snap_times(split, [0.3, 0.6, 1.0]),
                               [0.25, 0.5, 1.0])
    exact = PropagatorPlan(HamiltonianSpec.free(grid))
    np.testing.assert_allclose(snap_times(exact, [0.3, 0.6]), [0.3, 0.6])


@pytest.mark.parametrize("engine,kind", [("multiplier", "free"),
                                         ("dense", "free"),
                                         ("splitstep", "potential")])
def test_series_matches_single_shot(grid, packet, engine, kind):
    if kind == "free":
        spec = HamiltonianSpec.free(grid)
    else:
        spec = HamiltonianSpec.with_potential(grid, gaussian_potential(1.0))
    plan = PropagatorPlan(spec, engine, dt=1e-2)
    times = [0.5, 1.0, 2.0]
    realized, snaps = evolve_series(plan, packet, times)
    for t, snap in zip(realized, snaps):
        assert _rel(snap, evolve(plan, packet, float(t))) <= 1e-10


def test_series_requires_ascending_times(grid, packet):
    plan = PropagatorPlan(HamiltonianSpec.free(grid))
    with pytest.raises(ValueError):
        evolve_series(plan, packet, [1.0, 0.5])
    with pytest.raises(ValueError):
        evolve_series(plan, packet, [-1.0, 0.5])


@pytest.mark.parametrize("engine,kind", [("multiplier", "free"),
                                         ("dense", "free"),
                                         ("splitstep", "potential")])
def test_backward_inverts_forward(grid, packet, engine, kind):
    if kind == "free":
        spec = HamiltonianSpec.free(grid)
    else:
        spec = HamiltonianSpec.with_potential(grid, gaussian_potential(1.0))
    plan = PropagatorPlan(spec, engine, dt=1e-2)
    fwd = evolve(plan, packet, 1.7)
    back = evolve_backward(plan, fwd, 1.7)
    assert _rel(back, packet) <= 1e-11


def test_splitstep_remainder_substep(grid):
    spec = HamiltonianSpec.with_potential(grid, gaussian_potential(1.0))
    f = field_from_function(grid, lambda x: np.exp(-x**2))
    t = 0.0345  # not a multiple of dt; remainder handled by a short substep
    split = evolve(PropagatorPlan(spec, "splitstep", dt=1e-2), f, t)
    dense = evolve(PropagatorPlan(spec, "dense"), f, t)
    assert _rel(split, dense) <= 1e-5


def test_engine_cross_check_policy(grid, packet):
    spec = HamiltonianSpec.with_potential(grid, gaussian_potential(1.0))
    val = engine_cross_check(PropagatorPlan(spec, "splitstep", dt=1e-3),
                             packet, 0.5)
    assert val is not None and val <= 1e-6
    assert engine_cross_check(PropagatorPlan(spec, "dense"), packet, 0.5) is None
    big = make_grid(1, 16.0, 4096)
    fb = field_from_function(big, lambda x: np.exp(-x**2))
    assert engine_cross_check(PropagatorPlan(HamiltonianSpec.free(big)),
                              fb, 0.5) is None


def test_engine_names_are_stable():
    assert ENGINES == ("multiplier", "splitstep", "dense")
