"""Decay of band-projector commutators.

For self-adjoint A and bounded B with bounded [A, B], smooth band cutoffs
phi_N = phi(./N) satisfy ||[phi_N(A), B]|| <= C M_AB N^{-3/4} with
M_AB = ||[A, B]||.  The lab measures the left side on a momentum/saturating
multiplier pair by dense SVD and fits the log-log slope; the envelope
exponent -3/4 is an upper bound, the measured decay for smooth data sits
near N^{-1}.

The Fourier-L1 ingredient behind the envelope is checked by quadrature:
psi_N = i phi_N' obeys ||psi_N||_2 ~ N^{-1/2} and ||psi_N'||_2 ~ N^{-3/2}
exactly (chain rule), so the Cauchy-Schwarz proxy
||psi_N||^{1/2} ||psi_N'||^{1/2} decays like N^{-1}, underneath N^{-3/4}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .spectral import smooth_step

DENSE_LIMIT = 2048


def band_profile(u: np.ndarray) -> np.ndarray:
    """C-infinity bump: 0 outside [1/2, 2], 1 on [3/4, 5/4], monotone ramps."""
    u = np.asarray(u, dtype=float)
    return smooth_step((u - 0.5) / 0.25) * smooth_step((2.0 - u) / 0.75)


def bump_profile(n_scale: float):
    """The dilated cutoff phi_N = phi(./N) as a vectorized callable."""
    if n_scale <= 0:
        raise ValueError("scale must be positive")
    return lambda lam: band_profile(np.asarray(lam, dtype=float) / n_scale)


@dataclass
class CommutatorExperiment:
    a: np.ndarray
    b: np.ndarray
    ns: tuple

    def __post_init__(self):
        self.a = np.asarray(self.a)
        self.b = np.asarray(self.b)
        if self.a.shape != self.b.shape or self.a.ndim != 2 \
                or self.a.shape[0] != self.a.shape[1]:
            raise ValueError("A and B must be square matrices of equal size")
        if self.a.shape[0] > DENSE_LIMIT:
            raise ValueError(f"dense route capped at {DENSE_LIMIT}")
        scale = max(float(np.abs(self.a).max()), 1.0)
        if float(np.abs(self.a - self.a.conj().T).max()) > 1e-10 * scale:
            raise ValueError("A must be Hermitian")
        self.ns = tuple(sorted(int(n) for n in self.ns))
        if any(n <= 0 for n in self.ns):
            raise ValueError("band scales must be positive")

    @cached_property
    def eigensystem(self):
        return np.linalg.eigh(self.a)

    @cached_property
    def spectral_radius(self) -> float:
        lam, _ = self.eigensystem
        return float(np.abs(lam).max())

    @cached_property
    def m_ab(self) -> float:
        c = self.a @ self.b - self.b @ self.a
        return float(np.linalg.svd(c, compute_uv=False)[0])

    def cutoff_matrix(self, n_scale: float) -> np.ndarray:
        lam, w = self.eigensystem
        return (w * band_profile(lam / n_scale)) @ w.conj().T


def momentum_pair(half_extent: float = 12.0, points: int = 2048,
                  profile_scale: float = 2.0, shift: float = 1.0,
                  ns=(8, 16, 32, 64, 128)) -> CommutatorExperiment:
    """Spectral momentum plus a constant against a tanh-profile multiplier.

    The multiplier is tapered to zero over [0.55 L, 0.95 L] so its periodic
    extension is smooth; the bare tanh jumps at the seam and its step content
    pollutes every frequency band.  The tanh length scale keeps the
    multiplier's spectral spread inside the narrowest cutoff ramp, which is
    what puts the smallest bands into the asymptotic decay regime.
    """
    h = 2.0 * half_extent / points
    x = -half_extent + h * np.arange(points)
    xi = 2.0 * np.pi * np.fft.fftfreq(points, h)
    f = np.fft.fft(np.eye(points), axis=0) / math.sqrt(points)
    p = f.conj().T @ (xi[:, None] * f)
    p = 0.5 * (p + p.conj().T)
    a = p + shift * np.eye(points)
    shoulder = smooth_step((0.95 * half_extent - np.abs(x))
                           / (0.40 * half_extent))
    b = np.diag(np.tanh(x / profile_scale) * shoulder)
    exp = CommutatorExperiment(a, b, ns)
    if max(exp.ns) > 0.5 * exp.spectral_radius:
        raise ValueError("largest band exceeds half the spectral radius")
    return exp


def commutator_norm(experiment: CommutatorExperiment, n_scale: float) -> float:
    """||[phi_N(A), B]|| by dense SVD."""
    ph = experiment.cutoff_matrix(n_scale)
    c = ph @ experiment.b - experiment.b @ ph
    return float(np.linalg.svd(c, compute_uv=False)[0])


@dataclass
class CommutatorFit:
    ns: tuple
    norms: tuple
    bounds: tuple            # c_hat * M_AB * N^{-3/4} per N
    slope: float | None      # None when all norms vanish
    c_hat: float
    m_ab: float
    b_norm: float
    crude_ok: bool           # every norm <= 2 ||B||
    bounds_ok: bool
    vacuous: bool


def scaling_fit(experiment: CommutatorExperiment) -> CommutatorFit:
    ns = experiment.ns
    norms = tuple(commutator_norm(experiment, n) for n in ns)
    m = experiment.m_ab
    b_norm = float(np.linalg.svd(experiment.b, compute_uv=False)[0])
    crude_ok = all(v <= 2.0 * b_norm * (1.0 + 1e-12) for v in norms)
    if all(v == 0.0 for v in norms):
        bounds = tuple(0.0 for _ in ns)
        return CommutatorFit(ns, norms, bounds, None, 0.0, m, b_norm,
                             crude_ok, True, True)
    if len([v for v in norms if v > 0]) < 5:
        raise ValueError("need at least 5 nonzero norms for the fit")
    c_hat = max(v / (m * n ** -0.75) for v, n in zip(norms, ns))
    bounds = tuple(c_hat * m * n ** -0.75 for n in ns)
    slope = float(np.polyfit(np.log(ns), np.log(norms), 1)[0])
    bounds_ok = all(v <= bd * (1.0 + 1e-12) for v, bd in zip(norms, bounds))
    return CommutatorFit(ns, norms, bounds, slope, c_hat, m, b_norm,
                         crude_ok, bounds_ok, False)


@dataclass
class DerivativeBumpScaling:
    ns: tuple
    l2: tuple                # ||psi_N||_2
    l2_grad: tuple           # ||psi_N'||_2
    proxy: tuple             # ||psi_N||^{1/2} ||psi_N'||^{1/2}
    exponent_l2: float       # expected -1/2
    exponent_grad: float     # expected -3/2
    exponent_proxy: float    # expected -1, must stay under -3/4 envelope
    proxy_under_envelope: bool


def derivative_bump_scaling(ns=(8, 16, 32, 64, 128),
                            samples: int = 1 << 16) -> DerivativeBumpScaling:
    """Fine-quadrature scaling of psi_N = i phi_N' and its derivative."""
    ns = tuple(sorted(int(n) for n in ns))
    l2, l2g, proxy = [], [], []
    for n in ns:
        # cover supp phi_N = [n/2, 2n] with margin
        u = np.linspace(0.25 * n, 2.25 * n, samples)
        du = u[1] - u[0]
        f = band_profile(u / n)
        psi = np.gradient(f, du)
        psi_p = np.gradient(psi, du)
        a = math.sqrt(float(np.sum(psi**2)) * du)
        b = math.sqrt(float(np.sum(psi_p**2)) * du)
        l2.append(a)
        l2g.append(b)
        proxy.append(math.sqrt(a * b))
    ln = np.log(ns)
    e2 = float(np.polyfit(ln, np.log(l2), 1)[0])
    eg = float(np.polyfit(ln, np.log(l2g), 1)[0])
    ep = float(np.polyfit(ln, np.log(proxy), 1)[0])
    env = max(proxy[i] / ns[i] ** -0.75 for i in range(len(ns)))
    under = all(proxy[i] <= env * ns[i] ** -0.75 * (1 + 1e-12)
                for i in range(len(ns)))
    return DerivativeBumpScaling(ns, tuple(l2), tuple(l2g), tuple(proxy),
                                 e2, eg, ep, under)
