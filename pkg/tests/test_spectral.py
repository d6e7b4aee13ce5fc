"""Smooth cutoffs, spectral windows, projector calculus."""

import numpy as np
import pytest

from obslab.grid import Field, l2_norm, make_grid
from obslab.hamiltonian import (HamiltonianSpec, dilation_generator,
                                zero_potential)
from obslab.spectral import (Interval, apply_spectral_function,
                             decompose_dilation, decompose_hamiltonian,
                             dyadic_cutoff, low_pass, low_pass_profile,
                             project_dilation, project_energy, smooth_bump,
                             smooth_step, smooth_window)


def test_smooth_step_profile():
    u = np.linspace(-1, 2, 301)
    s = smooth_step(u)
    assert (s[u <= 0] == 0).all()
    assert (s[u >= 1] == 1).all()
    mid = s[(u > 0) & (u < 1)]
    assert (np.diff(mid) >= 0).all()
    core = s[(u >= 0.1) & (u <= 0.9)]
    assert (np.diff(core) > 0).all()
    assert 0 < mid.min() and mid.max() <= 1
    assert smooth_step(np.array([0.5]))[0] == pytest.approx(0.5)


def test_smooth_step_flat_to_all_orders_at_ends():
    # derivatives vanish at the ends: values hug 0/1 faster than any power,
    # to the point of underflowing well before the corner
    assert smooth_step(np.array([1e-2]))[0] < 3 * np.exp(-100.0)
    assert smooth_step(np.array([1e-3]))[0] == 0.0
    assert smooth_step(np.array([1 - 1e-3]))[0] == 1.0


def test_bump_support_plateau_and_variation():
    lam = np.linspace(0, 2, 20001)
    b = smooth_bump(lam)
    assert (b[(lam < 5 / 8 - 1e-9)] == 0).all()
    assert (b[lam > 1.5 + 1e-9] == 0).all()
    plateau = b[(lam >= 0.75) & (lam <= 1.25)]
    np.testing.assert_allclose(plateau, 1.0)
    assert b.min() >= 0 and b.max() <= 1
    assert np.sum(np.abs(np.diff(b))) == pytest.approx(2.0, abs=1e-6)


def test_dyadic_family_telescopes_exactly():
    lam = np.linspace(0, 40, 4001)
    total = low_pass_profile(2 * lam)
    for k in range(0, 6):
        total = total + smooth_bump(lam / 2.0**k)
    # partition of unity up to lambda = (5/4) * 2^5
    np.testing.assert_allclose(total, 1.0, atol=1e-12)


def test_interval_membership_and_tiling():
    w = Interval(1.0, 2.0)
    assert w.contains(1.0) and not w.contains(2.0)
    assert Interval(1.0, 2.0, include_hi=True).contains(2.0)
    assert Interval.at_most(3.0).contains(3.0)
    assert Interval.at_least(3.0).contains(1e9)
    with pytest.raises(ValueError):
        Interval(2.0, 1.0)
    inter = Interval(0.0, 2.0).intersect(Interval(1.0, 3.0))
    assert inter.lo == 1.0 and inter.hi == 2.0 and not inter.include_hi


def test_projector_is_idempotent_and_hermitian():
    g = make_grid(1, 8.0, 256)
    spec = HamiltonianSpec.free(g)
    rng = np.random.default_rng(2)
    f = Field(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    h = Field(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    w = Interval(0.5, 4.0)
    pf = project_energy(spec, w, f)
    ppf = project_energy(spec, w, pf)
    np.testing.assert_allclose(ppf.values, pf.values, atol=1e-13)
    lhs = np.vdot(pf.values, h.values)
    rhs = np.vdot(f.values, project_energy(spec, w, h).values)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_adjacent_windows_tile_without_double_counting():
    g = make_grid(1, 8.0, 256)
    spec = HamiltonianSpec.free(g)
    rng = np.random.default_rng(4)
    f = Field(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    a = project_energy(spec, Interval(0.0, 1.0), f)
    b = project_energy(spec, Interval(1.0, 4.0), f)
    both = project_energy(spec, Interval(0.0, 4.0), f)
    np.testing.assert_allclose(a.values + b.values, both.values, atol=1e-13)


def test_multiplier_and_dense_routes_agree():
    # same operator, one spec diagonal in frequency, one forced dense
    g = make_grid(1, 8.0, 128)
    free = HamiltonianSpec.free(g)
    densified = HamiltonianSpec.with_potential(g, zero_potential())
    rng = np.random.default_rng(9)
    f = Field(g, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    for fn in (lambda lam: np.exp(-lam), lambda lam: smooth_bump(lam / 4.0)):
        a = apply_spectral_function(free, fn, f)
        b = apply_spectral_function(densified, fn, f)
        assert l2_norm(Field(g, a.values - b.values)) <= 1e-8


def test_field_level_telescoping_reconstructs_identity():
    g = make_grid(1, 8.0, 256)
    spec = HamiltonianSpec.free(g)
    rng = np.random.default_rng(6)
    f = Field(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    from obslab.hamiltonian import kinetic_symbol
    top = float(kinetic_symbol(spec).max())
    K = int(np.ceil(np.log2(top / 1.25))) + 1
    total = low_pass(spec, f).values
    for k in range(1, K + 1):
        total = total + dyadic_cutoff(spec, k, f).values
    np.testing.assert_allclose(total, f.values, atol=1e-11)


def test_smooth_window_selects_the_expected_band():
    g = make_grid(1, 8.0, 256)
    spec = HamiltonianSpec.free(g)
    rng = np.random.default_rng(8)
    f = Field(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    wf = smooth_window(spec, 4.0, f)
    # content confined to energies in [5/8, 3/2] * scale
    outside = project_energy(spec, Interval(0.0, 4.0 * 5 / 8), wf)
    assert l2_norm(outside) <= 1e-12 * l2_norm(f)


def test_eigendecomposition_residual_and_indices():
    g = make_grid(1, 8.0, 128)
    spec = HamiltonianSpec.with_potential(g, zero_potential())
    eig = decompose_hamiltonian(spec)
    from obslab.hamiltonian import dense_matrix
    assert eig.residual(dense_matrix(spec)) <= 1e-12
    assert (np.diff(eig.eigenvalues) >= 0).all()
    idx = eig.projector_indices(Interval(0.0, 1.0))
    assert ((eig.eigenvalues[idx] >= 0) & (eig.eigenvalues[idx] < 1)).all()


def test_dilation_projectors_split_the_identity():
    g = make_grid(1, 8.0, 256)
    a = dilation_generator(g)
    plus = project_dilation(a, +1, 0.7)
    minus = project_dilation(a, -1, 0.7)
    rng = np.random.default_rng(12)
    v = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    np.testing.assert_allclose(plus.apply(v) + minus.apply(v), v, atol=1e-10)
    # complementary ranges are orthogonal
    assert np.linalg.norm(minus.apply(plus.apply(v))) <= 1e-10
    np.testing.assert_allclose(plus.apply(plus.apply(v)), plus.apply(v),
                               atol=1e-10)
    assert decompose_dilation(a) is decompose_dilation(a)
    with pytest.raises(ValueError):
        project_dilation(a, 0, 0.0)
