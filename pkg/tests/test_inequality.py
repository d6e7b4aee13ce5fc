"""Uncertainty norms, velocity cones, outgoing decay, observability ratios."""

import math

import numpy as np
import pytest

from obslab.grid import Field, make_grid
from obslab.hamiltonian import HamiltonianSpec, gaussian_potential
from obslab.inequality import (disjoint_dilation_check, enss_decay,
                               frequency_band_state, group_velocity_floor,
                               minimal_velocity_decay, observability_ratio,
                               sharpness_sequence, uncertainty_norm,
                               uncertainty_norm_dense, uncertainty_scan,
                               window_localized_state)
from obslab.propagate import PropagatorPlan
from obslab.spectral import Interval, project_energy, smooth_step


def normalized(grid, values):
    v = np.asarray(values, dtype=complex)
    return Field(grid, v / np.sqrt(grid.cell_volume * np.vdot(v, v).real))


@pytest.fixture(scope="module")
def free256():
    return HamiltonianSpec(make_grid(1, 16.0, 256), "free")


# --- group velocity floor ---------------------------------------------------

def test_velocity_floor_full_laplacian():
    spec = HamiltonianSpec(make_grid(1, 8.0, 16), "free")
    assert group_velocity_floor(spec, 1.0) == pytest.approx(2.0, abs=1e-14)
    assert group_velocity_floor(spec, 1.25) == pytest.approx(2.0 * math.sqrt(1.25), abs=1e-14)


def test_velocity_floor_half_convention():
    spec = HamiltonianSpec(make_grid(1, 8.0, 16), "free", convention="half")
    # lambda = |xi|^2 / 2 = theta at xi = sqrt(2 theta), speed = xi there
    assert group_velocity_floor(spec, 1.0) == pytest.approx(math.sqrt(2.0), abs=1e-14)


def test_velocity_floor_fractional():
    g = make_grid(1, 8.0, 16)
    half_wave = HamiltonianSpec(g, "fractional", s=1.0)
    # |xi|^1 moves every frequency at the same speed
    assert group_velocity_floor(half_wave, 0.3) == group_velocity_floor(half_wave, 7.0)
    cubic = HamiltonianSpec(g, "fractional", s=3.0)
    assert group_velocity_floor(cubic, 1.0) == pytest.approx(3.0, abs=1e-14)


def test_velocity_floor_needs_positive_theta():
    spec = HamiltonianSpec(make_grid(1, 8.0, 16), "free")
    with pytest.raises(ValueError):
        group_velocity_floor(spec, 0.0)


# --- uncertainty norms ------------------------------------------------------

def test_power_matches_dense_svd(free256):
    a = uncertainty_norm(free256, 1.0, 1.0)
    b = uncertainty_norm_dense(free256, 1.0, 1.0)
    assert a.method == "power" and b.method == "svd"
    assert a.converged
    assert 0.0 < a.norm < 1.0
    assert abs(a.norm - b.norm) < 1e-6


def test_energy_floor_shrinks_window(free256):
    full = uncertainty_norm(free256, 1.0, 1.0)
    cut = uncertainty_norm(free256, 1.0, 1.0, energy_floor=0.5)
    ref = uncertainty_norm_dense(free256, 1.0, 1.0, energy_floor=0.5)
    assert abs(cut.norm - ref.norm) < 1e-6
    # dropping the bottom modes can only lose norm
    assert cut.norm <= full.norm + 1e-9


def test_empty_window_both_routes(free256):
    res = uncertainty_norm(free256, 1.0, -1.0)
    assert res.norm == 0.0 and res.method == "empty"
    pot = HamiltonianSpec(free256.grid, "potential",
                          potential=gaussian_potential(1.0))
    res = uncertainty_norm_dense(pot, 1.0, -5.0)
    assert res.norm == 0.0 and res.method == "empty"


def test_scan_monotone_and_grouped(free256):
    scan = uncertainty_scan(free256, [0.5, 1.0, 2.0], [0.5, 1.0, 2.0])
    assert scan.norms.shape == (3, 3)
    assert np.all(scan.norms > 0.0) and np.all(scan.norms <= 1.0 + 1e-12)
    assert scan.monotone_violations == 0
    assert scan.invariant_exponent == 2.0
    # R sqrt(delta) coincidences, e.g. (0.5, 2.0) with (1.0, 0.5)
    assert any(vals.size >= 2 for _, vals in scan.collapse_groups)
    assert 0.0 <= scan.collapse_spread < 1.0


# --- localized states -------------------------------------------------------

def test_band_state_unit_and_exact(free256):
    psi = frequency_band_state(free256, 1.0, 2.0, 0.3)
    nrm = math.sqrt(free256.grid.cell_volume * np.vdot(psi.values, psi.values).real)
    assert nrm == pytest.approx(1.0, abs=1e-12)
    proj = project_energy(free256, Interval(0.9, 4.1, include_hi=True), psi)
    assert np.linalg.norm(proj.values - psi.values) < 1e-12


def test_band_state_rejects_wide_ramp(free256):
    with pytest.raises(ValueError, match="ramp"):
        frequency_band_state(free256, 1.0, 1.5, 0.3)


def test_window_state_multiplier_passthrough(free256):
    got = window_localized_state(free256, Interval(0.9, 4.1, include_hi=True),
                                 1.0, 2.0, 0.3)
    want = frequency_band_state(free256, 1.0, 2.0, 0.3)
    assert np.array_equal(got.values, want.values)


def test_window_state_dense_exact():
    g = make_grid(1, 16.0, 256)
    spec = HamiltonianSpec(g, "potential", potential=gaussian_potential(0.25))
    window = Interval(1.0, 3.0, include_hi=True)
    psi = window_localized_state(spec, window, 1.1, 1.6, 0.2, energy_ramp=0.4)
    nrm = math.sqrt(g.cell_volume * np.vdot(psi.values, psi.values).real)
    assert nrm == pytest.approx(1.0, abs=1e-12)
    proj = project_energy(spec, window, psi)
    assert np.linalg.norm(proj.values - psi.values) < 1e-12
    with pytest.raises(ValueError, match="energy_ramp"):
        window_localized_state(spec, Interval(1.0, 1.7, include_hi=True),
                               1.1, 1.6, 0.2, energy_ramp=0.4)


# --- minimal velocity decay -------------------------------------------------

def test_interior_mass_decays():
    spec = HamiltonianSpec(make_grid(1, 64.0, 512), "free")
    plan = PropagatorPlan(spec, "multiplier")
    psi = frequency_band_state(spec, 1.2, 1.6, 0.15)
    ser = minimal_velocity_decay(plan, psi, 0.3, np.linspace(2.0, 8.0, 5),
                                 energy_window=(1.44, 2.56))
    assert ser.label == "interior_mass"
    assert ser.velocity == 0.3
    assert np.all(ser.values > 0.0)
    assert np.all(np.diff(ser.values) < 0.0)
    assert ser.fit.slope < -2.0
    assert ser.fit.r_squared > 0.8
    assert ser.wrap_mass < 1e-2
    assert ser.cross_check is not None and ser.cross_check < 1e-6


def test_unlocalized_state_rejected():
    spec = HamiltonianSpec(make_grid(1, 64.0, 512), "free")
    plan = PropagatorPlan(spec, "multiplier")
    x = np.fft.fftshift(np.fft.fftfreq(512)) * 128.0
    gauss = normalized(spec.grid, np.exp(-x**2))
    with pytest.raises(ValueError, match="not localized"):
        minimal_velocity_decay(plan, gauss, 0.3, [2.0, 4.0, 6.0],
                               energy_window=(1.44, 2.56))


def test_zero_velocity_measures_empty_cone():
    spec = HamiltonianSpec(make_grid(1, 64.0, 512), "free")
    plan = PropagatorPlan(spec, "multiplier")
    psi = frequency_band_state(spec, 1.2, 1.6, 0.15)
    # open cone at v = 0 leaves nothing to fit
    with pytest.raises(ValueError):
        minimal_velocity_decay(plan, psi, 0.0, [2.0, 4.0, 6.0])


# --- outgoing (Enss) decay --------------------------------------------------

def test_outgoing_norms_decay():
    # box sized so the seam stays out of reach: 2 sqrt(2) * 12 < gap to seam
    spec = HamiltonianSpec(make_grid(1, 64.0, 512), "free")
    res = enss_decay(spec, [0.0], 0.5, [3.0, 6.0, 9.0, 12.0])
    assert res.mourre_floor == 1.0
    assert res.thresholds == [0.0]
    (ser,) = res.series
    assert np.all(ser.values >= 0.0)
    assert np.all(np.diff(ser.values) < 0.0)
    # short-time slope; the asymptotic rate needs the long-time geometry
    assert ser.fit.slope < -0.2
    assert all(ser.convergence_flags)
    assert res.bound_constants[0] > 0.0
    assert res.constant_ratio == pytest.approx(1.0)
    assert res.max_series is not None
    np.testing.assert_allclose(res.max_series.values, ser.values)


def test_outgoing_guards():
    spec = HamiltonianSpec(make_grid(1, 32.0, 256), "free")
    with pytest.raises(ValueError, match="dense-capable"):
        enss_decay(HamiltonianSpec(make_grid(2, 8.0, 16), "free"),
                   [0.0], 0.5, [4.0, 8.0])
    with pytest.raises(ValueError, match="ramp"):
        enss_decay(spec, [0.0], 0.5, [4.0, 8.0], window=(1.0, 2.0), ramp=0.6)
    with pytest.raises(ValueError, match="v must"):
        enss_decay(spec, [0.0], 2.0, [4.0, 8.0])


def test_opposite_dilation_halves_disjoint():
    spec = HamiltonianSpec(make_grid(1, 32.0, 256), "free")
    assert disjoint_dilation_check(spec, 0.0) < 1e-8


# --- two-time observability -------------------------------------------------

def test_observability_bookkeeping():
    g = make_grid(1, 64.0, 512)
    spec = HamiltonianSpec(g, "free")
    plan = PropagatorPlan(spec, "multiplier")
    x = np.fft.fftshift(np.fft.fftfreq(512)) * 128.0
    u0 = normalized(g, np.exp(1.25j * x) * np.exp(-x**2 / 8.0))
    res = observability_ratio(plan, u0, 1.0, 0.25, 10.25, 1.0,
                              min_time_factor=5.0)
    assert res.total_mass == pytest.approx(1.0, abs=1e-10)
    assert math.isfinite(res.ratio) and res.ratio > 0.0
    assert res.second_radius == pytest.approx(10.0)   # sigma * gap / R^(p-1)
    assert res.window_ok
    assert res.exterior_first <= res.total_mass + 1e-12
    assert res.reduction_deviation < 1e-8
    assert res.wrap_mass < 1e-4
    assert res.cross_check is not None and res.cross_check < 1e-6


def test_observability_fractional_radius_rule():
    g = make_grid(1, 64.0, 512)
    spec = HamiltonianSpec(g, "fractional", s=1.0)
    plan = PropagatorPlan(spec, "multiplier")
    x = np.fft.fftshift(np.fft.fftfreq(512)) * 128.0
    u0 = normalized(g, np.exp(3.0j * x) * np.exp(-x**2 / 8.0))
    res = observability_ratio(plan, u0, 1.0, 0.5, 10.5, 0.5,
                              min_time_factor=5.0)
    # p = 1 makes the second radius sigma * gap, independent of R
    assert res.second_radius == pytest.approx(5.0)
    assert res.reduction_deviation < 1e-8


def test_observability_window_flag_and_ordering():
    g = make_grid(1, 64.0, 512)
    spec = HamiltonianSpec(g, "free")
    plan = PropagatorPlan(spec, "multiplier")
    x = np.fft.fftshift(np.fft.fftfreq(512)) * 128.0
    u0 = normalized(g, np.exp(1.25j * x) * np.exp(-x**2 / 8.0))
    res = observability_ratio(plan, u0, 1.0, 0.0, 10.0, 1.0,
                              min_time_factor=1000.0)
    assert not res.window_ok
    assert res.reduction_deviation == 0.0   # nothing to reduce at t1 = 0
    with pytest.raises(ValueError, match="t2 > t1"):
        observability_ratio(plan, u0, 1.0, 2.0, 2.0, 1.0)
    with pytest.raises(ValueError, match="t2 > t1"):
        observability_ratio(plan, u0, 1.0, -1.0, 2.0, 1.0)


# --- sharpness of the two-ball geometry -------------------------------------

def test_concentration_shrinks_both_columns():
    g = make_grid(1, 128.0, 16384)
    spec = HamiltonianSpec(g, "free")
    plan = PropagatorPlan(spec, "multiplier")
    x = np.fft.fftshift(np.fft.fftfreq(16384)) * 256.0
    f = normalized(g, x * np.exp(-16.0 * x**2)
                   * smooth_step((0.9 - np.abs(x)) / 0.1))
    tab = sharpness_sequence(plan, f, [1, 2, 4], 0.0625, 0.5, 0.25)
    assert tab.ks == [1, 2, 4]
    assert tab.both_decreasing
    assert tab.final_fraction_exterior < 0.5
    assert tab.final_fraction_interior < 0.1
    assert tab.wrap_mass < 1e-10


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_flat_columns_are_not_decreasing():
    g = make_grid(1, 128.0, 16384)
    spec = HamiltonianSpec(g, "free")
    plan = PropagatorPlan(spec, "multiplier")
    x = np.fft.fftshift(np.fft.fftfreq(16384)) * 256.0
    f = normalized(g, x * np.exp(-16.0 * x**2)
                   * smooth_step((0.9 - np.abs(x)) / 0.1))
    # r1 beyond the box: exterior masses identically zero, strict decrease fails
    tab = sharpness_sequence(plan, f, [1, 2], 200.0, 0.5, 0.25)
    assert np.all(tab.exterior_masses == 0.0)
    assert not tab.both_decreasing
