"""Stationary states on level sets of an interaction-shifted dispersion.

The fixed-point equation asks F to equal its own shell average, where the
shells are level sets of Etilde = E - lambda * (vhat * F).  Solved by damped
Picard with re-binning every iteration; convergence is an empirical
observation and is reported, never assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .boltzmann import ShellOperator, build_binning
from .disorder import uniforms
from .lattice import GridSpec, PairPotential, ScalarField, convolve_values, dispersion

__all__ = [
    "RenormalizedDispersion",
    "FixedPointConfig",
    "FixedPointResult",
    "renormalized_dispersion",
    "stationary_fixed_point",
    "DiagnosticsRow",
    "DiagnosticsReport",
    "crossing_diagnostic_1",
    "crossing_diagnostic_2",
]


@dataclass(frozen=True)
class RenormalizedDispersion:
    """Etilde = E - lambda * (vhat * F), the interaction-shifted kinetic energy."""

    etilde: ScalarField
    lam: float
    source: ScalarField

    def __post_init__(self):
        e = dispersion(self.etilde.grid).values
        shift = float(np.max(np.abs(self.etilde.values - e)))
        if self.lam == 0 and shift != 0.0:
            raise ValueError("lambda = 0 must leave the dispersion unchanged")


def renormalized_dispersion(f: ScalarField, lam: float, potential: PairPotential) -> RenormalizedDispersion:
    if f.grid != potential.grid:
        raise ValueError("grid mismatch")
    e = dispersion(f.grid).values
    if lam == 0:
        return RenormalizedDispersion(ScalarField(f.grid, e), 0.0, f)
    shift = convolve_values(potential.vhat.values, f.values)
    return RenormalizedDispersion(ScalarField(f.grid, e - lam * shift), lam, f)


@dataclass(frozen=True)
class FixedPointConfig:
    theta: float = 0.5
    tol: float = 1e-8
    max_iter: int = 200
    delta: float = 0.25

    def __post_init__(self):
        if not (0 < self.theta <= 1):
            raise ValueError("theta must be in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class FixedPointResult:
    f: ScalarField
    residual: float
    iterations: int
    converged: bool
    residual_history: tuple
    shells: ShellOperator


def _shells_for(f_vals, lam, potential, grid, e0, delta):
    if lam == 0:
        etilde = e0
    else:
        etilde = ScalarField(grid, e0.values - lam * convolve_values(potential.vhat.values, f_vals))
    return ShellOperator(build_binning(grid, etilde, delta))


def stationary_fixed_point(
    f_init: ScalarField,
    lam: float,
    potential: PairPotential,
    config: FixedPointConfig,
) -> FixedPointResult:
    """Damped Picard F <- (1-theta) F + theta A_{Etilde(F)}[F], re-binned per iteration."""
    grid = f_init.grid
    if potential.grid != grid:
        raise ValueError("grid mismatch")
    v = f_init.values
    if v.min() < 0 or v.max() > 1:
        raise ValueError("F_init must take values in [0, 1]")
    e0 = dispersion(grid)

    if lam == 0:
        # no feedback: the equation is linear with fixed E-shells and the
        # exact solution is the plain shell average
        shells = _shells_for(v, 0.0, potential, grid, e0, config.delta)
        f_star = shells.average_values(v)
        residual = float(np.max(np.abs(f_star - shells.average_values(f_star))))
        return FixedPointResult(ScalarField(grid, f_star), residual, 1, True, (residual,), shells)

    f = v.copy()
    history = []
    shells = _shells_for(f, lam, potential, grid, e0, config.delta)
    for it in range(1, config.max_iter + 1):
        a = shells.average_values(f)
        residual = float(np.max(np.abs(f - a)))
        history.append(residual)
        if residual < config.tol:
            return FixedPointResult(ScalarField(grid, f), residual, it, True, tuple(history), shells)
        f = (1.0 - config.theta) * f + config.theta * a
        shells = _shells_for(f, lam, potential, grid, e0, config.delta)
    a = shells.average_values(f)
    residual = float(np.max(np.abs(f - a)))
    history.append(residual)
    return FixedPointResult(
        ScalarField(grid, f), residual, config.max_iter, residual < config.tol, tuple(history), shells
    )


@dataclass(frozen=True)
class DiagnosticsRow:
    epsilon: float
    value: float


@dataclass(frozen=True)
class DiagnosticsReport:
    rows: tuple
    fit_label: str
    fitted: float
    fitted_stderr: float

    @property
    def confidence_interval(self) -> tuple:
        return (self.fitted - 2 * self.fitted_stderr, self.fitted + 2 * self.fitted_stderr)


def crossing_diagnostic_1(etilde: ScalarField, epsilon_list) -> DiagnosticsReport:
    """sup_alpha (1/L^3) sum_q |Etilde(q) - alpha - i eps|^{-1}, fitted to C log(1/eps).

    The alpha grid has spacing <= eps/4 and covers range(Etilde) padded by 1.
    """
    eps_list = [float(e) for e in epsilon_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("epsilon entries must be > 0")
    ev = np.sort(etilde.values.ravel())
    lo, hi = float(ev[0]) - 1.0, float(ev[-1]) + 1.0
    rows = []
    for eps in eps_list:
        n_alpha = int(math.ceil((hi - lo) / (eps / 4.0))) + 1
        alphas = np.linspace(lo, hi, n_alpha)
        best = 0.0
        chunk = max(1, int(2**22 / ev.size))
        for start in range(0, n_alpha, chunk):
            al = alphas[start : start + chunk]
            vals = np.mean(1.0 / np.sqrt((ev[None, :] - al[:, None]) ** 2 + eps * eps), axis=1)
            best = max(best, float(vals.max()))
        rows.append(DiagnosticsRow(eps, best))
    x = np.array([math.log(1.0 / r.epsilon) for r in rows])
    y = np.array([r.value for r in rows])
    denom = float(np.dot(x, x))
    c_fit = float(np.dot(x, y) / denom) if denom > 0 else float("nan")
    resid = y - c_fit * x
    dof = max(len(rows) - 1, 1)
    stderr = float(np.sqrt(np.dot(resid, resid) / dof / denom)) if denom > 0 else float("nan")
    return DiagnosticsReport(tuple(rows), "C*log(1/eps)", c_fit, stderr)


def _xcorr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """h(w) = (1/L^3) sum_p a(p) b(p + w) by FFT (both inputs real)."""
    n = a.size
    fa = _fft.fftn(a, axes=(0, 1, 2))
    fb = _fft.fftn(b, axes=(0, 1, 2))
    return np.real(_fft.ifftn(np.conj(fa) * fb, axes=(0, 1, 2))) / n


def _conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(1/L^3) sum_p a(p) b(w - p) by FFT."""
    n = a.size
    fa = _fft.fftn(a, axes=(0, 1, 2))
    fb = _fft.fftn(b, axes=(0, 1, 2))
    return np.real(_fft.ifftn(fa * fb, axes=(0, 1, 2))) / n


def crossing_diagnostic_2(
    etilde: ScalarField,
    epsilon_list,
    n_mc: int,
    seed: int = 0,
) -> DiagnosticsReport:
    """Triple-resolvent sup estimate, fitted to eps^{-b}.

    For each eps the candidate set is one deterministic center probe
    (alpha_i at the median energy) plus n_mc seeded draws of
    (alpha_1, alpha_2, alpha_3) from range(Etilde) padded by 1 and a sign;
    for every candidate the double grid sum is evaluated for all shifts u at
    once by FFT and maximized over u.
    """
    if n_mc < 10**4:
        raise ValueError("n_mc must be >= 1e4")
    eps_list = [float(e) for e in epsilon_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("epsilon entries must be > 0")
    ev = etilde.values
    lo, hi = float(ev.min()) - 1.0, float(ev.max()) + 1.0
    center = float(np.median(ev))
    u = uniforms(seed, 4 * n_mc)
    alphas = lo + (hi - lo) * u[: 3 * n_mc].reshape(n_mc, 3)
    signs = u[3 * n_mc :] < 0.5

    rows = []
    for eps in eps_list:
        def resolvent(alpha):
            return 1.0 / np.sqrt((ev - alpha) ** 2 + eps * eps)

        def value(a1, a2, a3, plus_sign):
            ra, rb, rc = resolvent(a1), resolvent(a2), resolvent(a3)
            d = _xcorr(rb, rc)  # d(w) = (1/L^3) sum_p rb(p) rc(p+w)
            # plus: value(u) = (1/L^3) sum_q ra(q) d(q+u) ; minus: d(u-q)
            out = _xcorr(ra, d) if plus_sign else _conv(ra, d)
            return float(out.max())

        best = value(center, center, center, True)
        for i in range(n_mc):
            a1, a2, a3 = alphas[i]
            best = max(best, value(a1, a2, a3, bool(signs[i])))
        rows.append(DiagnosticsRow(eps, best))

    x = np.array([math.log(1.0 / r.epsilon) for r in rows])
    y = np.array([math.log(max(r.value, 1e-300)) for r in rows])
    xm, ym = x - x.mean(), y - y.mean()
    denom = float(np.dot(xm, xm))
    b_fit = float(np.dot(xm, ym) / denom) if denom > 0 else float("nan")
    resid = ym - b_fit * xm
    dof = max(len(rows) - 2, 1)
    stderr = float(np.sqrt(np.dot(resid, resid) / dof / denom)) if denom > 0 else float("nan")
    return DiagnosticsReport(tuple(rows), "eps^{-b}", b_fit, stderr)
