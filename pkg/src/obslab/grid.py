"""Periodic pseudospectral grids on [-L, L)^n and L^2 bookkeeping.

All experiments live on a uniform tensor grid with power-of-two points per
axis.  Frequencies follow the FFT layout, xi_j = (pi/L) * k_j with
k_j in [-N/2, N/2), so multiplier operators are plain array products in
frequency space.  The quadrature weight is the cell volume h^n throughout;
norms and masses below always carry it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DOF_BUDGET = 1 << 22


class UnderResolvedError(ValueError):
    """Raised when a rescaled state would be supported on fewer than 8 cells."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-half_extent, half_extent)^dim."""

    dim: int
    half_extent: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not self.half_extent > 0:
            raise ValueError("half_extent must be positive")
        n = self.points_per_axis
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"points_per_axis must be a power of two >= 8, got {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def dofs(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim


def make_grid(dim: int, half_extent: float, points_per_axis: int,
              budget: int = DOF_BUDGET) -> GridSpec:
    spec = GridSpec(dim, half_extent, points_per_axis)
    if spec.dofs > budget:
        raise ValueError(f"grid has {spec.dofs} dofs, budget is {budget}")
    return spec


@lru_cache(maxsize=32)
def axis_coordinates(spec: GridSpec) -> np.ndarray:
    """Ascending coordinates of one axis, from -L to L - h."""
    n = spec.points_per_axis
    x = (np.arange(n) - n // 2) * spec.spacing
    x.flags.writeable = False
    return x


@lru_cache(maxsize=32)
def axis_frequencies(spec: GridSpec) -> np.ndarray:
    """One-axis frequencies in FFT order; equals (pi/L) * k, k in [-N/2, N/2)."""
    xi = 2.0 * np.pi * np.fft.fftfreq(spec.points_per_axis, d=spec.spacing)
    xi.flags.writeable = False
    return xi


def _meshed(axis: np.ndarray, dim: int, which: int) -> np.ndarray:
    shape = [1] * dim
    shape[which] = axis.size
    return axis.reshape(shape)


@lru_cache(maxsize=16)
def radius_squared(spec: GridSpec) -> np.ndarray:
    """|x|^2 on the full grid."""
    x = axis_coordinates(spec)
    r2 = np.zeros(spec.shape)
    for ax in range(spec.dim):
        r2 = r2 + _meshed(x, spec.dim, ax) ** 2
    r2.flags.writeable = False
    return r2


@lru_cache(maxsize=16)
def freq_radius_squared(spec: GridSpec) -> np.ndarray:
    """|xi|^2 on the full frequency lattice, FFT order."""
    xi = axis_frequencies(spec)
    s = np.zeros(spec.shape)
    for ax in range(spec.dim):
        s = s + _meshed(xi, spec.dim, ax) ** 2
    s.flags.writeable = False
    return s


@dataclass
class Field:
    """A complex state sampled on a grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.iscomplexobj(self.values):
            self.values = self.values.astype(complex)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def norm(self) -> float:
        return l2_norm(self)


def field_from_function(spec: GridSpec, fn) -> Field:
    """Sample fn(x1, ..., xn) on the grid."""
    x = axis_coordinates(spec)
    axes = [_meshed(x, spec.dim, ax) for ax in range(spec.dim)]
    return Field(spec, np.asarray(fn(*axes), dtype=complex))


def l2_norm(field: Field) -> float:
    v = field.values
    return float(np.sqrt(field.grid.cell_volume * np.vdot(v, v).real))


def inner(f: Field, g: Field) -> complex:
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return complex(f.grid.cell_volume * np.vdot(f.values, g.values))


def fourier_transform(field: Field) -> Field:
    """Unitary FFT; output indexed by the FFT frequency lattice."""
    return Field(field.grid, np.fft.fftn(field.values, norm="ortho"))


def inverse_fourier_transform(field: Field) -> Field:
    return Field(field.grid, np.fft.ifftn(field.values, norm="ortho"))


@dataclass(frozen=True)
class RegionMask:
    """Radial region; the boundary sphere |x| = radius belongs to the interior."""

    kind: str  # "interior" | "exterior" | "all"
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("interior", "exterior", "all"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind != "all" and self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @classmethod
    def interior(cls, radius: float) -> "RegionMask":
        return cls("interior", radius)

    @classmethod
    def exterior(cls, radius: float) -> "RegionMask":
        return cls("exterior", radius)

    @classmethod
    def everything(cls) -> "RegionMask":
        return cls("all")

    def indicator(self, spec: GridSpec) -> np.ndarray:
        if self.kind == "all":
            return np.ones(spec.shape)
        r2 = radius_squared(spec)
        if self.kind == "interior":
            return (r2 <= self.radius**2).astype(float)
        return (r2 > self.radius**2).astype(float)


def mass_in_region(field: Field, mask: RegionMask) -> float:
    """Squared L^2 norm restricted to the region."""
    ind = mask.indicator(field.grid)
    v = field.values
    return float(field.grid.cell_volume * np.sum(ind * (v.real**2 + v.imag**2)))


def boundary_shell_mass(field: Field, fraction: float = 0.95) -> float:
    """Mass in |x| >= fraction * L; the wrap-around monitor reads this."""
    return mass_in_region(field, RegionMask.exterior(fraction * field.grid.half_extent))


def support_radius(field: Field, rel_threshold: float = 1e-12) -> float:
    """Largest |x| where |f| exceeds rel_threshold * max|f|; 0 for the zero field."""
    mag = np.abs(field.values)
    peak = mag.max()
    if peak == 0.0:
        return 0.0
    supported = mag > rel_threshold * peak
    if not supported.any():
        return 0.0
    return float(np.sqrt(radius_squared(field.grid)[supported].max()))


def concentrate(field: Field, k: int) -> Field:
    """L^2-isometric rescaling U_k f = k^{n/2} f(k x), zero outside the box.

    Integer k keeps rescaled samples on the lattice.  Fails when the shrunken
    support would be carried by fewer than 8 cells per radius.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"k must be an integer >= 1, got {k!r}")
    spec = field.grid
    if k == 1:
        return field.copy()
    r = support_radius(field)
    if r > 0 and r / k < 8 * spec.spacing:
        raise UnderResolvedError(
            f"support radius {r:.3g}/{k} below 8 cells ({8 * spec.spacing:.3g})")
    n = spec.points_per_axis
    half = n // 2
    idx = np.arange(n) - half
    src = idx * k
    valid = np.nonzero((src >= -half) & (src < half))[0]
    src_pos = src[valid] + half
    out = np.zeros(spec.shape, dtype=complex)
    out[np.ix_(*[valid] * spec.dim)] = field.values[np.ix_(*[src_pos] * spec.dim)]
    out *= float(k) ** (spec.dim / 2.0)
    return Field(spec, out)
