"""Energy-shell collision kernel and linear relaxation solvers.

The level-set kernel 2*pi*delta(E(u)-E(p)) is discretized by disjoint uniform
energy bins (histogram), which turns the shell average A into an exact
projection: relaxation then solves in closed form shell by shell, and the
gain-series / loss-exponential resummation identity holds to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import GridSpec, ScalarField, dispersion, grid_mean

__all__ = [
    "EnergyBinning",
    "ShellOperator",
    "KineticState",
    "build_binning",
    "make_shells",
    "shell_average",
    "collision_apply",
    "solve_explicit",
    "solve_rk4",
    "duhamel_series",
    "DuhamelResult",
    "fermi_dirac_occupation",
    "fermi_dirac_stationarity",
    "StationarityReport",
    "self_energy",
    "mollified_rate",
]


@dataclass(frozen=True)
class EnergyBinning:
    """Histogram of a dispersion field into uniform half-open energy bins.

    Bins are [emin + j*delta, emin + (j+1)*delta); every grid point belongs to
    exactly one bin, and integer counts sum to L^3 exactly.
    """

    grid: GridSpec
    energy: ScalarField
    delta: float
    edges: np.ndarray
    bin_index: np.ndarray
    counts: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def weights(self) -> np.ndarray:
        """w_b = (#points in bin b)/L^3."""
        return self.counts / self.grid.total_points


def build_binning(grid: GridSpec, e_field: ScalarField, delta: float) -> EnergyBinning:
    """Uniform bins of width delta anchored at min E, deterministic assignment."""
    if e_field.grid != grid:
        raise ValueError("grid mismatch")
    if not (delta > 0):
        raise ValueError("delta must be > 0")
    e = e_field.values
    emin = float(e.min())
    emax = float(e.max())
    if delta < (emax - emin) / 1e6:
        raise ValueError(f"delta={delta} too small: must be >= (max E - min E)/1e6")
    n_bins = int(np.floor((emax - emin) / delta)) + 1
    idx = np.floor((e - emin) / delta).astype(np.int64)
    np.clip(idx, 0, n_bins - 1, out=idx)
    counts = np.bincount(idx.ravel(), minlength=n_bins)
    edges = emin + delta * np.arange(n_bins + 1)
    idx.setflags(write=False)
    counts.setflags(write=False)
    return EnergyBinning(grid, e_field, float(delta), edges, idx, counts)


@dataclass(frozen=True)
class ShellOperator:
    """Collision rate m = 2*pi*w_b/delta (constant per shell) plus bin means."""

    binning: EnergyBinning
    m: ScalarField = field(init=False)

    def __post_init__(self):
        b = self.binning
        m_per_bin = 2.0 * np.pi * b.weights / b.delta
        object.__setattr__(self, "m", ScalarField(b.grid, m_per_bin[b.bin_index]))

    @property
    def grid(self) -> GridSpec:
        return self.binning.grid

    def bin_means(self, values: np.ndarray) -> np.ndarray:
        """Per-bin means of a raw array; empty bins get 0 (never referenced)."""
        b = self.binning
        sums = np.bincount(b.bin_index.ravel(), weights=values.ravel(), minlength=b.n_bins)
        return np.divide(sums, b.counts, out=np.zeros_like(sums), where=b.counts > 0)

    def average_values(self, values: np.ndarray) -> np.ndarray:
        return self.bin_means(values)[self.binning.bin_index]


def make_shells(grid: GridSpec, delta: float, e_field: ScalarField | None = None) -> ShellOperator:
    """ShellOperator over a dispersion field (the lattice kinetic energy by default)."""
    if e_field is None:
        e_field = dispersion(grid)
    return ShellOperator(build_binning(grid, e_field, delta))


def default_bin_width(grid: GridSpec, e_field: ScalarField | None = None) -> float:
    """Default delta = max(0.02, 4*(band width)/L), keeping bins populated."""
    if e_field is None:
        e_field = dispersion(grid)
    band = float(e_field.values.max() - e_field.values.min())
    return max(0.02, 4.0 * band / grid.L)


def shell_average(f: ScalarField, shells: ShellOperator) -> ScalarField:
    """A[F](p) = mean of F over the bin containing p; an exact projection."""
    if f.grid != shells.grid:
        raise ValueError("grid mismatch")
    return ScalarField(shells.grid, shells.average_values(f.values))


def collision_apply(f: ScalarField, shells: ShellOperator) -> ScalarField:
    """Q[F] = m * (A[F] - F), the binned 2*pi*int delta(E(u)-E(p)) (F(u)-F(p)) du."""
    if f.grid != shells.grid:
        raise ValueError("grid mismatch")
    a = shells.average_values(f.values)
    return ScalarField(shells.grid, shells.m.values * (a - f.values))


@dataclass(frozen=True)
class KineticState:
    """A momentum distribution together with the shell structure it evolved on."""

    f: ScalarField
    shells: ShellOperator


def solve_explicit(f0: ScalarField, t: float, shells: ShellOperator) -> KineticState:
    """F_T = A[F0] + exp(-T m) (F0 - A[F0]); exact for the binned kernel.

    T=0 returns F0 unchanged (bitwise), T -> infinity returns A[F0].
    """
    if f0.grid != shells.grid:
        raise ValueError("grid mismatch")
    if t < 0:
        raise ValueError("T must be >= 0")
    if t == 0:
        return KineticState(f0, shells)
    a = shells.average_values(f0.values)
    out = a + np.exp(-t * shells.m.values) * (f0.values - a)
    return KineticState(ScalarField(shells.grid, out), shells)


def solve_rk4(f0: ScalarField, t: float, dt: float, shells: ShellOperator) -> KineticState:
    """Classical RK4 integration of dF/dT = Q[F] (independent oracle)."""
    if f0.grid != shells.grid:
        raise ValueError("grid mismatch")
    m_max = float(shells.m.values.max())
    if m_max > 0 and dt > 0.1 / m_max:
        raise ValueError(f"dt={dt} violates stability budget dt <= 0.1/max(m) = {0.1 / m_max:.3e}")
    m = shells.m.values
    avg = shells.average_values

    def q(v):
        return m * (avg(v) - v)

    f = f0.values.copy()
    n_full = int(t / dt)
    rem = t - n_full * dt
    for step in range(n_full + 1):
        h = dt if step < n_full else rem
        if h <= 0:
            continue
        k1 = q(f)
        k2 = q(f + 0.5 * h * k1)
        k3 = q(f + 0.5 * h * k2)
        k4 = q(f + h * k3)
        f = f + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return KineticState(ScalarField(shells.grid, f), shells)


@dataclass(frozen=True)
class DuhamelResult:
    """Truncated semigroup series data.

    ``series``        : S_Q = sum_{q<=Q} (T^q/q!) Q^q[F0]  (full generator)
    ``gain_resummed`` : exp(-T m) * sum_{q<=Q} (T^q/q!) (m A)^q [F0]
    ``term_sup``      : sup norms of the full-generator terms
    ``tail_estimate`` : sup bound for the first omitted full-generator term
    ``resummation_error`` : sup |gain_resummed - solve_explicit(F0, T)|
    """

    order: int
    series: ScalarField
    gain_resummed: ScalarField
    term_sup: np.ndarray
    tail_estimate: float
    resummation_error: float
    partials: list | None = None


def duhamel_series(
    f0: ScalarField,
    t: float,
    q_max: int,
    shells: ShellOperator,
    keep_partials: bool = False,
) -> DuhamelResult:
    """Partial sums of the exponential series for the collision semigroup."""
    if f0.grid != shells.grid:
        raise ValueError("grid mismatch")
    if q_max > 60:
        raise ValueError("q_max must be <= 60")
    m = shells.m.values
    m_max = float(m.max())
    if t * m_max > 200.0:
        raise ValueError(f"T*max(m) = {t * m_max:.1f} too large for the series (overflow guard)")
    avg = shells.average_values

    # full generator: X_{q} = (T/q) Q[X_{q-1}] ; series = sum X_q
    series = f0.values.copy()
    x = f0.values.copy()
    term_sup = [float(np.max(np.abs(x)))]
    partials = [series.copy()] if keep_partials else None
    for q in range(1, q_max + 1):
        x = (t / q) * (m * (avg(x) - x))
        series = series + x
        term_sup.append(float(np.max(np.abs(x))))
        if keep_partials:
            partials.append(series.copy())
    # gain-only family: G_q = (T/q) m A[G_{q-1}]
    gain_sum = f0.values.copy()
    g = f0.values.copy()
    for q in range(1, q_max + 1):
        g = (t / q) * (m * avg(g))
        gain_sum = gain_sum + g
    gain_resummed = np.exp(-t * m) * gain_sum

    tail = (t * m_max) ** (q_max + 1) * float(np.max(np.abs(f0.values)))
    for q in range(1, q_max + 2):
        tail /= q
    explicit = solve_explicit(f0, t, shells).f.values
    res_err = float(np.max(np.abs(gain_resummed - explicit)))
    return DuhamelResult(
        q_max,
        ScalarField(shells.grid, series),
        ScalarField(shells.grid, gain_resummed),
        np.asarray(term_sup),
        tail,
        res_err,
        partials,
    )


def fermi_dirac_occupation(e_values: np.ndarray, beta: float, mu_chem: float) -> np.ndarray:
    """1/(1 + exp(beta (E - mu))); beta = inf gives the sharp indicator E < mu."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if np.isinf(beta):
        return (e_values < mu_chem).astype(np.float64)
    # clip the exponent so beta ~ 1e3 does not overflow
    z = np.clip(beta * (e_values - mu_chem), -700.0, 700.0)
    return 1.0 / (1.0 + np.exp(z))


@dataclass(frozen=True)
class StationarityReport:
    residual: float
    predictor: float
    passed: bool
    beta: float
    mu_chem: float
    delta: float
    max_m: float


def fermi_dirac_stationarity(beta: float, mu_chem: float, shells: ShellOperator) -> StationarityReport:
    """Residual ||Q[F_FD]||_inf against the predictor beta * delta * max(m)."""
    e = shells.binning.energy.values
    f = ScalarField(shells.grid, fermi_dirac_occupation(e, beta, mu_chem))
    residual = float(np.max(np.abs(collision_apply(f, shells).values)))
    max_m = float(shells.m.values.max())
    predictor = beta * shells.binning.delta * max_m if not np.isinf(beta) else np.inf
    return StationarityReport(residual, predictor, residual <= predictor, beta, mu_chem, shells.binning.delta, max_m)


def self_energy(e: float, nu: float, grid: GridSpec) -> complex:
    """Sigma(e; nu) = (1/L^3) sum_u 1/(E(u) - e - i nu)."""
    if not (nu > 0):
        raise ValueError("nu must be > 0")
    ev = dispersion(grid).values
    return complex(np.mean(1.0 / (ev - e - 1j * nu)))


def mollified_rate(e_field: ScalarField, width: float, at_energies: np.ndarray) -> np.ndarray:
    """Gaussian-mollified 2*pi*int delta_width(E(u)-e) du, cross-check diagnostic only."""
    if not (width > 0):
        raise ValueError("width must be > 0")
    e = e_field.values.ravel()
    at = np.atleast_1d(np.asarray(at_energies, dtype=np.float64))
    norm = 1.0 / (width * np.sqrt(2.0 * np.pi))
    out = np.empty(at.shape)
    for i, a in enumerate(at):
        out[i] = 2.0 * np.pi * norm * grid_mean(np.exp(-0.5 * ((e - a) / width) ** 2))
    return out
