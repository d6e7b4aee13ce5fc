"""Quantitative inequalities: uncertainty norms, minimal-velocity decay,
outgoing-state (Enss) localization, two-time observability and its sharpness.

Conventions that matter here:
  * Interior region masks include their boundary sphere, matching chi(|x|<=R).
    The one exception is the propagation cone |x| < v t, which is taken open
    so that v = 0 gives the empty region at every positive time.
  * Group velocities follow the kinetic convention: the symbol kappa |xi|^s
    moves frequency xi at speed kappa * s * |xi|^{s-1}, so a certified energy
    floor theta gives the velocity floor kappa * s * theta^{(s-1)/s} --
    2 sqrt(theta) for the full-convention Laplacian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .estimate import (POWER_MAX_ITER, POWER_SEED, POWER_TOL, LogLogFit,
                       PowerResult, gram_operator_norm, loglog_fit)
from .grid import (Field, RegionMask, boundary_shell_mass, freq_radius_squared,
                   l2_norm, mass_in_region, radius_squared)
from .hamiltonian import HamiltonianSpec, kinetic_symbol
from .propagate import PropagatorPlan, evolve, evolve_series, engine_cross_check
from .spectral import (DilationProjector, Interval, decompose_dilation,
                       decompose_hamiltonian, project_dilation, smooth_bump,
                       smooth_step)

WRAP_TOLERANCE = 1e-8


def group_velocity_floor(spec: HamiltonianSpec, theta: float) -> float:
    """Minimal group velocity over energies >= theta (theta > 0)."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    kappa = spec.kinetic_prefactor
    s = spec.symbol_exponent
    # invert lambda = kappa |xi|^s, speed = kappa s |xi|^{s-1}
    xi = (theta / kappa) ** (1.0 / s)
    return kappa * s * xi ** (s - 1.0)


# ---------------------------------------------------------------------------
# uncertainty norms ||chi(|x| <= R) chi(H <= delta)||

@dataclass
class UncertaintyResult:
    radius: float
    threshold: float
    norm: float
    iterations: int
    residual: float
    converged: bool
    method: str


def _band_projector(spec: HamiltonianSpec, window: Interval):
    """Return (apply, modes) for chi_window(H) on flattened vectors."""
    if spec.is_multiplier:
        mask = window.contains(kinetic_symbol(spec)).astype(float)
        shape = spec.grid.shape
        modes = int(mask.sum())

        def apply(v: np.ndarray) -> np.ndarray:
            return np.fft.ifftn(mask * np.fft.fftn(v.reshape(shape))).ravel()

        return apply, modes
    eig = decompose_hamiltonian(spec)
    idx = eig.projector_indices(window)
    vi = eig.vectors[:, idx]

    def apply(v: np.ndarray) -> np.ndarray:
        return vi @ (vi.conj().T @ v)

    return apply, idx.size


def uncertainty_norm(spec: HamiltonianSpec, radius: float, threshold: float,
                     energy_floor: float = -math.inf, tol: float = POWER_TOL,
                     max_iter: int = POWER_MAX_ITER,
                     seed: int = POWER_SEED) -> UncertaintyResult:
    """||chi(|x| <= radius) chi(H <= threshold)|| by power iteration.

    energy_floor > -inf shrinks the spectral window to (floor, threshold],
    which is how a zero mode gets excluded.
    """
    window = Interval(energy_floor, threshold, include_hi=True)
    proj, modes = _band_projector(spec, window)
    if modes == 0:
        return UncertaintyResult(radius, threshold, 0.0, 0, 0.0, True, "empty")
    inside = (radius_squared(spec.grid) <= radius**2).ravel()

    def gram(v: np.ndarray) -> np.ndarray:
        w = proj(v)
        w = np.where(inside, w, 0.0)
        return proj(w)

    r = gram_operator_norm(gram, spec.grid.dofs, tol=tol, max_iter=max_iter, seed=seed)
    return UncertaintyResult(radius, threshold, r.value, r.iterations,
                             r.residual, r.converged, "power")


def uncertainty_norm_dense(spec: HamiltonianSpec, radius: float, threshold: float,
                           energy_floor: float = -math.inf) -> UncertaintyResult:
    """SVD oracle for the same norm; needs the spectral window explicitly.

    For multiplier kinds the band eigenvectors are discrete Fourier modes, so
    the masked thin matrix is assembled directly and works at any grid size.
    """
    g = spec.grid
    window = Interval(energy_floor, threshold, include_hi=True)
    inside = (radius_squared(g) <= radius**2).ravel()
    if spec.is_multiplier:
        mask = window.contains(kinetic_symbol(spec))
        modes = np.nonzero(mask.ravel())[0]
        if modes.size == 0:
            return UncertaintyResult(radius, threshold, 0.0, 0, 0.0, True, "empty")
        n = g.dofs
        cols = np.zeros((n, modes.size), dtype=complex)
        unit = np.zeros(g.shape, dtype=complex)
        for j, m in enumerate(modes):
            unit.ravel()[m] = 1.0
            cols[:, j] = np.fft.ifftn(unit, norm="ortho").ravel()
            unit.ravel()[m] = 0.0
        thin = cols * inside[:, None]
    else:
        if g.dofs > 4096:
            raise ValueError("dense oracle capped at 4096 dofs")
        eig = decompose_hamiltonian(spec)
        idx = eig.projector_indices(window)
        if idx.size == 0:
            return UncertaintyResult(radius, threshold, 0.0, 0, 0.0, True, "empty")
        thin = eig.vectors[:, idx] * inside[:, None]
    top = float(np.linalg.svd(thin, compute_uv=False)[0])
    return UncertaintyResult(radius, threshold, top, 0, 0.0, True, "svd")


@dataclass
class UncertaintyScan:
    radii: np.ndarray
    thresholds: np.ndarray
    norms: np.ndarray                  # shape (len(radii), len(thresholds))
    monotone_violations: int
    invariant_exponent: float          # norms collapse along R * delta^{1/p}
    collapse_spread: float             # worst relative spread within a group
    collapse_groups: list


def uncertainty_scan(spec: HamiltonianSpec, radii, thresholds,
                     method: str = "auto", **kw) -> UncertaintyScan:
    """Scan the norm over a grid of (R, delta); check monotonicity and the
    scaling collapse along the invariant R * delta^{1/p}."""
    radii = np.sort(np.asarray(radii, dtype=float))
    thresholds = np.sort(np.asarray(thresholds, dtype=float))
    use_dense = method == "dense" or (method == "auto" and
                                      (spec.is_multiplier or spec.grid.dofs <= 4096))
    norms = np.zeros((radii.size, thresholds.size))
    for i, r in enumerate(radii):
        for j, d in enumerate(thresholds):
            if use_dense:
                res = uncertainty_norm_dense(spec, r, d, **kw)
            else:
                res = uncertainty_norm(spec, r, d, **kw)
            norms[i, j] = res.norm

    violations = 0
    slack = 1e-9
    for i in range(radii.size):
        violations += int(np.sum(np.diff(norms[i, :]) < -slack))
    for j in range(thresholds.size):
        violations += int(np.sum(np.diff(norms[:, j]) < -slack))

    p = spec.scaling_exponent
    inv = radii[:, None] * thresholds[None, :] ** (1.0 / p)
    order = np.argsort(inv.ravel())
    flat_inv = inv.ravel()[order]
    flat_norm = norms.ravel()[order]
    groups = []
    start = 0
    for k in range(1, flat_inv.size + 1):
        if k == flat_inv.size or not np.isclose(flat_inv[k], flat_inv[start], rtol=1e-9):
            groups.append((float(flat_inv[start]), flat_norm[start:k].copy()))
            start = k
    spread = 0.0
    for _, vals in groups:
        if vals.size >= 2 and vals.min() > 0:
            spread = max(spread, float(vals.max() / vals.min() - 1.0))
    return UncertaintyScan(radii, thresholds, norms, violations, p, spread, groups)


def frequency_band_state(spec: HamiltonianSpec, xi_lo: float, xi_hi: float,
                         ramp: float) -> Field:
    """Unit state whose frequency profile is a smooth even box on
    xi_lo <= |xi| <= xi_hi with C-infinity ramps of the given width.

    The ramps sit inside the band, so the state is exactly energy localized
    to kappa [xi_lo, xi_hi]^s; wide ramps keep the spatial tails thin, which
    is what the wrap-around monitor wants.
    """
    if not 0 < 2 * ramp < xi_hi - xi_lo:
        raise ValueError("need 0 < 2 ramp < band width")
    xi = np.sqrt(freq_radius_squared(spec.grid))
    profile = smooth_step((xi - xi_lo) / ramp) * smooth_step((xi_hi - xi) / ramp)
    # ifftn centers at index 0 = the box corner; shift to x = 0
    v = np.fft.fftshift(np.fft.ifftn(profile.astype(complex)))
    nrm = np.sqrt(spec.grid.cell_volume * np.vdot(v, v).real)
    return Field(spec.grid, v / nrm)


def window_localized_state(spec: HamiltonianSpec, window: Interval,
                           xi_lo: float, xi_hi: float, xi_ramp: float,
                           energy_ramp: float = 0.4) -> Field:
    """Unit state exactly localized to the given energy window.

    Starts from a frequency band state.  For multiplier kinds that is already
    exact provided the band maps inside the window.  Otherwise the state is
    passed through a smooth energy profile supported strictly inside the
    window, built in the dense eigenbasis; wide ramps (energy_ramp) keep the
    profile's spatial kernel tails negligible, which a sharp cut would not.
    """
    psi = frequency_band_state(spec, xi_lo, xi_hi, xi_ramp)
    if spec.is_multiplier:
        return psi
    if window.hi - window.lo <= 2 * energy_ramp:
        raise ValueError("energy_ramp too wide for the window")
    dec = decompose_hamiltonian(spec)
    lam = dec.eigenvalues
    profile = (smooth_step((lam - window.lo) / energy_ramp)
               * smooth_step((window.hi - lam) / energy_ramp))
    v = dec.vectors @ (profile * (dec.vectors.conj().T @ psi.values))
    v = v / np.sqrt(spec.grid.cell_volume * np.vdot(v, v).real)
    return Field(spec.grid, v)


# ---------------------------------------------------------------------------
# decay series

@dataclass
class DecaySeries:
    times: np.ndarray
    values: np.ndarray                # interior masses or operator norms
    fit: LogLogFit
    velocity: float
    label: str = ""
    wrap_mass: float = 0.0
    cross_check: float | None = None
    convergence_flags: list = dfield(default_factory=list)


def minimal_velocity_decay(plan: PropagatorPlan, psi: Field, v: float, times,
                           energy_window: tuple[float, float] | None = None,
                           fit_floor: float = 1e-26,
                           head_fraction: float = 0.2) -> DecaySeries:
    """Interior mass || chi(|x| < v t) e^{-itH} psi ||^2 against time.

    psi should already be energy localized; when energy_window is given the
    localization psi = chi_window(H) psi is verified rather than imposed.
    The cone is open, so v = 0 measures the empty region.
    """
    spec = plan.hamiltonian
    if energy_window is not None:
        from .spectral import project_energy
        proj = project_energy(spec, Interval(*energy_window, include_hi=True), psi)
        defect = np.linalg.norm(proj.values - psi.values) / max(np.linalg.norm(psi.values), 1e-300)
        if defect > 1e-8:
            raise ValueError(f"psi is not localized in the energy window (defect {defect:.2e})")
    used, snaps = evolve_series(plan, psi, times)
    r2 = radius_squared(spec.grid)
    cell = spec.grid.cell_volume
    masses = np.empty(used.size)
    wrap = 0.0
    for i, (t, u) in enumerate(zip(used, snaps)):
        strict_inside = r2 < (v * t) ** 2
        vals = u.values
        masses[i] = float(cell * np.sum(strict_inside * (vals.real**2 + vals.imag**2)))
        wrap = max(wrap, boundary_shell_mass(u))
    fit = loglog_fit(used, masses, head_fraction=head_fraction, floor=fit_floor)
    xc = engine_cross_check(plan, psi, float(used[len(used) // 2]))
    return DecaySeries(used, masses, fit, v, "interior_mass", wrap, xc)


# ---------------------------------------------------------------------------
# Enss-type outgoing decay

@dataclass
class EnssResult:
    thresholds: list                    # the a values
    series: list                        # DecaySeries per a, values = operator norms
    bound_constants: list               # sup_t ||T(t)|| t^{0.9} per a
    constant_ratio: float
    mourre_floor: float
    max_series: DecaySeries | None = None   # pointwise max over a, fitted


def enss_decay(spec: HamiltonianSpec, a_values, v: float, times,
               window: tuple[float, float] = (1.0, 2.0),
               ramp: float = 0.25,
               interior_fraction: float = 0.3,
               seed: int = POWER_SEED) -> EnssResult:
    """Norm decay of chi^-(A - a - v t) e^{-itH} g(H) chi^+(A - a) W.

    g is a smooth box inscribed in the energy window (C-infinity ramps of
    width `ramp` inside it); theta = window bottom is the commutator floor:
    on supp g the dilation observable grows at rate <i[H, A]> = s <H> >=
    s * theta, so the minus-side projector sliding at speed v runs away from
    the outgoing part and the norm decays in t for every splitting point a.

    W is a smooth spatial window (plateau |x| <= interior_fraction * L, gone
    by 4/3 of that), applied on both sides: W chi^- U g chi^+ W.  Without it
    the periodic box makes the norm trivial two ways: packets against the
    seam cross it and re-enter with the dilation sign flipped, and the
    discrete A eigenvectors carry seam components whose incoming half rides
    under the sliding threshold forever.  The windows restrict the estimate
    to wrap-safe states; the seam-to-window gap must exceed the maximal
    group velocity times max(times), which the caller's box geometry has to
    provide (the defaults do).
    """
    from .hamiltonian import dilation_generator
    from .grid import axis_coordinates
    g = spec.grid
    if g.dim != 1 or g.dofs > 4096:
        raise ValueError("outgoing decay needs a dense-capable 1-D grid")
    lo, hi = window
    if not 0 < 2 * ramp < hi - lo:
        raise ValueError("need 0 < 2 ramp < window width")
    theta = float(lo)
    v_cap = theta if spec.kinetic_prefactor == 1.0 else math.sqrt(theta)
    if not 0 < v < v_cap:
        raise ValueError(f"v must lie in (0, {v_cap:.3f}) for this window")
    A = dilation_generator(g)
    eig_a = decompose_dilation(A)
    heig = decompose_hamiltonian(spec)
    lam = heig.eigenvalues
    box = smooth_step((lam - lo) / ramp) * smooth_step((hi - lam) / ramp)
    r0 = interior_fraction * g.half_extent
    xw = np.abs(axis_coordinates(g))
    w_spatial = smooth_step((4.0 * r0 / 3.0 - xw) / (r0 / 3.0))
    wa = eig_a.vectors                   # A eigenbasis
    vh = heig.vectors                    # H eigenbasis
    alpha = eig_a.eigenvalues
    times = np.asarray(times, dtype=float)

    def forward(x, mask_plus, mask_minus, phase):
        z = w_spatial * x
        z = wa @ (mask_plus * (wa.conj().T @ z))
        z = vh @ (phase * box * (vh.conj().T @ z))
        return w_spatial * (wa @ (mask_minus * (wa.conj().T @ z)))

    def backward(y, mask_plus, mask_minus, phase):
        z = wa @ (mask_minus * (wa.conj().T @ (w_spatial * y)))
        z = vh @ (np.conj(phase) * box * (vh.conj().T @ z))
        z = wa @ (mask_plus * (wa.conj().T @ z))
        return w_spatial * z

    results = []
    constants = []
    for a in a_values:
        mask_plus = (alpha >= a).astype(float)
        norms = np.empty(times.size)
        flags = []
        for i, t in enumerate(times):
            mask_minus = (alpha < a + v * t).astype(float)
            phase = np.exp(-1j * t * lam)
            gram = lambda x: backward(forward(x, mask_plus, mask_minus, phase),
                                      mask_plus, mask_minus, phase)
            res = gram_operator_norm(gram, g.dofs, seed=seed)
            norms[i] = res.value
            flags.append(res.converged)
        fit = loglog_fit(times, norms, head_fraction=0.2)
        const = float(np.max(norms * times**0.9))
        series = DecaySeries(times, norms, fit, v, f"outgoing_norm(a={a})",
                             convergence_flags=flags)
        results.append(series)
        constants.append(const)
    ratio = max(constants) / min(constants) if min(constants) > 0 else math.inf
    stacked = np.max(np.stack([s.values for s in results]), axis=0)
    max_series = DecaySeries(times, stacked,
                             loglog_fit(times, stacked, head_fraction=0.2),
                             v, "outgoing_norm(max over a)")
    return EnssResult(list(a_values), results, constants, ratio, theta,
                      max_series)


def disjoint_dilation_check(spec: HamiltonianSpec, a: float, seed: int = POWER_SEED) -> float:
    """||chi^-(A - a) chi^+(A - a)|| -- complementary projections, norm 0."""
    from .hamiltonian import dilation_generator
    A = dilation_generator(spec.grid)
    eig = decompose_dilation(A)
    plus = DilationProjector(eig, 1, a)
    minus = DilationProjector(eig, -1, a)

    def gram(v):
        w = minus.apply(plus.apply(v))
        return plus.apply(minus.apply(w))

    return gram_operator_norm(gram, spec.grid.dofs, seed=seed).value


# ---------------------------------------------------------------------------
# two-time observability

@dataclass
class ObservabilityResult:
    radius: float
    t1: float
    t2: float
    sigma: float
    second_radius: float
    total_mass: float
    exterior_first: float
    exterior_second: float
    ratio: float                      # C_obs = total / (sum of observed masses)
    window_ok: bool
    reduction_deviation: float
    wrap_mass: float
    cross_check: float | None = None


def observability_ratio(plan: PropagatorPlan, u0: Field, radius: float,
                        t1: float, t2: float, sigma: float,
                        min_time_factor: float = 10.0,
                        _reduce: bool = True) -> ObservabilityResult:
    """Observability constant for exterior observations at two times.

    The first observation reads mass outside |x| <= radius at t1; the second
    reads mass outside radius sigma (t2 - t1) / radius^{p-1} at t2, where p is
    the scaling exponent of H.  The window is admissible when
    t2 - t1 > radius^p * min_time_factor.
    """
    if not t2 > t1 >= 0:
        raise ValueError("need t2 > t1 >= 0")
    spec = plan.hamiltonian
    p = spec.scaling_exponent
    gap = t2 - t1
    window_ok = gap > radius**p * min_time_factor
    r2 = sigma * gap / radius ** (p - 1.0)
    used, snaps = evolve_series(plan, u0, [t1, t2])
    ext1 = mass_in_region(snaps[0], RegionMask.exterior(radius))
    ext2 = mass_in_region(snaps[1], RegionMask.exterior(r2))
    total = l2_norm(u0) ** 2
    denom = ext1 + ext2
    ratio = total / denom if denom > 0 else math.inf
    wrap = max(boundary_shell_mass(s) for s in snaps)
    reduction_dev = 0.0
    if _reduce and t1 > 0:
        shifted = observability_ratio(plan, snaps[0], radius, 0.0, gap, sigma,
                                      min_time_factor, _reduce=False)
        reduction_dev = abs(shifted.ratio - ratio) / max(abs(ratio), 1e-300)
    xc = engine_cross_check(plan, u0, t2)
    return ObservabilityResult(radius, float(used[0]), float(used[1]), sigma, r2,
                               total, ext1, ext2, ratio, window_ok,
                               reduction_dev, wrap, xc)


# ---------------------------------------------------------------------------
# sharpness of the two-ball geometry

@dataclass
class SharpnessTable:
    ks: list
    exterior_masses: np.ndarray        # mass of U_k f outside r1
    interior_masses: np.ndarray        # mass of e^{-itH} U_k f inside sigma t
    both_decreasing: bool
    final_fraction_exterior: float
    final_fraction_interior: float
    wrap_mass: float


def sharpness_sequence(plan: PropagatorPlan, f: Field, ks, r1: float,
                       sigma: float, t: float) -> SharpnessTable:
    """Concentrating family f_k = U_k f: exterior mass at r1 and evolved
    interior mass inside sigma t, both of which should shrink with k."""
    from .grid import concentrate
    exterior = []
    interior = []
    wrap = 0.0
    for k in ks:
        fk = concentrate(f, int(k))
        exterior.append(mass_in_region(fk, RegionMask.exterior(r1)))
        evolved = evolve(plan, fk, t)
        interior.append(mass_in_region(evolved, RegionMask.interior(sigma * t)))
        wrap = max(wrap, boundary_shell_mass(evolved))
    exterior = np.asarray(exterior)
    interior = np.asarray(interior)
    dec = bool(np.all(np.diff(exterior) < 0) and np.all(np.diff(interior) < 0))
    return SharpnessTable(list(ks), exterior, interior, dec,
                          float(exterior[-1] / exterior[0]),
                          float(interior[-1] / interior[0]), wrap)
