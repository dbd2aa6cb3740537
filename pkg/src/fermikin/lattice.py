"""Discrete 3-torus grids, dispersion, Fourier transforms and convolution.

Conventions, used everywhere in the package:

- Position sites x and momentum indices k both live in {-L/2, ..., L/2-1}^3
  and are stored in (L, L, L) arrays at index ``k mod L`` (standard FFT
  wraparound order, row-major).  Momentum coordinates are p = k/L.
- Forward transform:  fhat(p) = sum_x exp(-2*pi*i p.x) f(x).
- Inverse transform:  g(x) = (1/L^3) sum_p exp(+2*pi*i p.x) g(p).
- Momentum integrals mean (1/L^3) sum_p, exactly; no continuum quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

__all__ = [
    "GridSpec",
    "ScalarField",
    "ComplexField",
    "PairPotential",
    "make_grid",
    "dispersion",
    "forward_transform",
    "inverse_transform",
    "convolve",
    "convolve_values",
    "sobolev_norm",
    "cosine_bump_vhat",
    "grid_mean",
]


@dataclass(frozen=True)
class GridSpec:
    """Cubic L x L x L grid with periodic wraparound indexing."""

    L: int
    d: int = 3

    def __post_init__(self):
        if self.d != 3:
            raise ValueError(f"only d=3 supported, got d={self.d}")
        if not isinstance(self.L, (int, np.integer)):
            raise ValueError(f"L must be an integer, got {self.L!r}")
        if self.L % 2 != 0:
            raise ValueError(f"L must be even, got L={self.L}")
        if not (2 <= self.L <= 256):
            raise ValueError(f"L must satisfy 2 <= L <= 256, got L={self.L}")

    @property
    def total_points(self) -> int:
        return self.L**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.L, self.L, self.L)

    def signed_axis(self) -> np.ndarray:
        """Signed indices [0, 1, ..., L/2-1, -L/2, ..., -1] in storage order."""
        k = np.arange(self.L)
        return np.where(k < self.L // 2, k, k - self.L)

    def momentum_axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Meshgrid (p1, p2, p3) of momentum coordinates in storage order."""
        p = self.signed_axis() / self.L
        return np.meshgrid(p, p, p, indexing="ij")


def make_grid(L: int) -> GridSpec:
    """Validated grid constructor; L even, 2 <= L <= 256."""
    return GridSpec(int(L))


def _prepare_values(grid, values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.shape != grid.shape:
        raise ValueError(f"values shape {arr.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """Immutable real field over a grid (storage order as in GridSpec)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _prepare_values(self.grid, self.values, np.float64))

    def map(self, fn) -> "ScalarField":
        return ScalarField(self.grid, fn(self.values))

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _coerce(self, other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _coerce(self, other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _coerce(self, other))

    __rmul__ = __mul__

    def mean(self) -> float:
        return float(np.mean(self.values))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class ComplexField:
    """Immutable complex field over a grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _prepare_values(self.grid, self.values, np.complex128))


def _coerce(field, other):
    if isinstance(other, ScalarField):
        if other.grid != field.grid:
            raise ValueError("grid mismatch")
        return other.values
    return other


def dispersion(grid: GridSpec) -> ScalarField:
    """Kinetic energy 2*(cos 2*pi*p1 + cos 2*pi*p2 + cos 2*pi*p3); range [-6, 6]."""
    p1, p2, p3 = grid.momentum_axes()
    two_pi = 2.0 * np.pi
    e = 2.0 * (np.cos(two_pi * p1) + np.cos(two_pi * p2) + np.cos(two_pi * p3))
    return ScalarField(grid, e)


def forward_transform(f: ComplexField) -> ComplexField:
    """Position-lattice field -> momentum-lattice field, fhat(p) = sum_x e^{-2pi i p.x} f(x)."""
    return ComplexField(f.grid, _fft.fftn(f.values, axes=(0, 1, 2)))


def inverse_transform(g: ComplexField) -> ComplexField:
    """Momentum-lattice field -> position-lattice field, (1/L^3) sum_p e^{+2pi i p.x} g(p)."""
    return ComplexField(g.grid, _fft.ifftn(g.values, axes=(0, 1, 2)))


def convolve_values(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a*b)(p) = (1/L^3) sum_q a(p-q) b(q) on raw arrays, p-q reduced mod the torus."""
    n = a.size
    out = _fft.ifftn(_fft.fftn(a, axes=(0, 1, 2)) * _fft.fftn(b, axes=(0, 1, 2)), axes=(0, 1, 2))
    return np.real(out) / n


def convolve(a: ScalarField, b: ScalarField) -> ScalarField:
    """Normalized torus convolution of two real momentum fields."""
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    return ScalarField(a.grid, convolve_values(a.values, b.values))


def sobolev_norm(v, s: float) -> float:
    """Weighted norm (sum_x <x>^{2s} |v(x)|^2)^{1/2}, <x> = (1+|x|^2)^{1/2}.

    |x| uses the centered representative of each site in [-L/2, L/2)^3.
    Accepts a ScalarField or a cubic array of position values.
    """
    if isinstance(v, ScalarField):
        grid, vals = v.grid, v.values
    else:
        vals = np.asarray(v, dtype=np.float64)
        grid = make_grid(vals.shape[0])
        if vals.shape != grid.shape:
            raise ValueError(f"expected cubic array, got shape {vals.shape}")
    if s < 0:
        raise ValueError("s must be >= 0")
    x = grid.signed_axis().astype(np.float64)
    x1, x2, x3 = np.meshgrid(x, x, x, indexing="ij")
    w = (1.0 + x1**2 + x2**2 + x3**2) ** s
    return float(np.sqrt(np.sum(w * np.abs(vals) ** 2)))


@dataclass(frozen=True)
class PairPotential:
    """Pair potential on the position lattice together with its transform.

    ``vhat`` is exactly ``forward_transform`` of ``v`` under the module
    conventions (stored, not recomputed).  ``norm_bound`` is the weighted
    position-space norm with weight <x>^{3+2*sigma}.
    """

    grid: GridSpec
    v: np.ndarray
    vhat: ScalarField
    sigma: float
    norm_bound: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if not np.isfinite(self.norm_bound):
            raise ValueError("norm bound must be finite")
        arr = np.array(self.v, dtype=np.float64, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "v", arr)

    @classmethod
    def from_position(cls, grid: GridSpec, v: np.ndarray, sigma: float = 0.5) -> "PairPotential":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != grid.shape:
            raise ValueError(f"v shape {v.shape} does not match grid {grid.shape}")
        vhat_c = forward_transform(ComplexField(grid, v.astype(np.complex128)))
        imag = float(np.max(np.abs(vhat_c.values.imag)))
        scale = max(1.0, float(np.max(np.abs(vhat_c.values.real))))
        if imag > 1e-10 * scale:
            raise ValueError("pair potential must be even, v(x) = v(-x), so that vhat is real")
        vhat = ScalarField(grid, vhat_c.values.real)
        bound = sobolev_norm(ScalarField(grid, v), 1.5 + sigma)
        return cls(grid, v, vhat, sigma, bound)

    @classmethod
    def from_vhat(cls, grid: GridSpec, vhat: ScalarField, sigma: float = 0.5) -> "PairPotential":
        if vhat.grid != grid:
            raise ValueError("grid mismatch")
        v_c = inverse_transform(ComplexField(grid, vhat.values.astype(np.complex128)))
        imag = float(np.max(np.abs(v_c.values.imag)))
        scale = max(1.0, float(np.max(np.abs(v_c.values.real))))
        if imag > 1e-10 * scale:
            raise ValueError("vhat must be even in p so that v is real")
        v = v_c.values.real
        # store the exact forward transform of the stored v (bit-consistent)
        return cls.from_position(grid, v, sigma)

    def kappa_sup_bound(self) -> float:
        """A priori sup bound for vhat * mu with 0 <= mu <= 1: mean |vhat|."""
        return float(np.mean(np.abs(self.vhat.values)))


def cosine_bump_vhat(grid: GridSpec, amplitude: float = 1.0) -> ScalarField:
    """Smooth even bump amplitude * prod_j (1 + cos 2*pi*p_j)/2, peaked at p = 0."""
    p1, p2, p3 = grid.momentum_axes()
    two_pi = 2.0 * np.pi
    vals = amplitude * ((1 + np.cos(two_pi * p1)) * (1 + np.cos(two_pi * p2)) * (1 + np.cos(two_pi * p3)) / 8.0)
    return ScalarField(grid, vals)


def grid_mean(values: np.ndarray) -> float:
    """The momentum integral (1/L^3) sum_p of a raw array."""
    return float(np.mean(values))
