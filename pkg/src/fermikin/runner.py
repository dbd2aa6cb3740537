"""Experiment orchestration: dispatch, persistence, manifests, comparisons.

Every run writes its outputs and a JSON manifest atomically (temp file plus
rename); an interrupted run removes whatever it had already written.  Exit
status convention: 0 success, 1 invalid configuration, 2 compute error,
3 non-convergence (results written, flagged).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, boltzmann as bz, graphs as gr, micro, stationary as st
from .config import ConfigError, RunConfig, build_initial, build_potential, test_function
from .fields_io import atomic_write_text, field_csv_text, read_field_csv, write_rows_csv
from .lattice import GridSpec, ScalarField, dispersion, grid_mean, make_grid

__all__ = ["run", "compare_csv", "ComparisonReport", "RunManifest"]


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass
class RunManifest:
    """Reproducibility record; written before and finalized after the run."""

    data: dict

    @classmethod
    def start(cls, config: RunConfig, threads: int) -> "RunManifest":
        return cls(
            {
                "tool": "fermikin",
                "version": __version__,
                "experiment": config.experiment,
                "status": "running",
                "seed": config.seed,
                "threads": threads,
                "config": config.resolved(),
                "started_unix": time.time(),
                "stages": [],
                "rounding": {},
                "convergence": {},
                "outputs": [],
                "notes": [],
            }
        )

    def finalize(self, status: str) -> None:
        self.data["status"] = status
        self.data["finished_unix"] = time.time()
        self.data["wall_seconds"] = self.data["finished_unix"] - self.data["started_unix"]

    def write(self, out_dir: str) -> None:
        atomic_write_text(os.path.join(out_dir, "manifest.json"), json.dumps(self.data, indent=2) + "\n")


@dataclass(frozen=True)
class ComparisonReport:
    """Weak and sup errors between two fields, with the micro uncertainty."""

    weak_error: float
    weak_se: float
    sup_error: float
    f_name: str
    g_name: str


def compare_fields(
    mu: ScalarField, f_ref: ScalarField, f_name: str, g_name: str, se: ScalarField | None = None
) -> ComparisonReport:
    grid = mu.grid
    if f_ref.grid != grid:
        raise ValueError("grid mismatch")
    w = test_function(grid, f_name).values * test_function(grid, g_name).values
    weak = abs(grid_mean(w * (mu.values - f_ref.values)))
    if se is not None:
        # conservative propagation: |(1/L^3) sum w se| bound
        weak_se = grid_mean(np.abs(w) * se.values)
    else:
        weak_se = 0.0
    sup = float(np.max(np.abs(mu.values - f_ref.values)))
    return ComparisonReport(weak, weak_se, sup, f_name, g_name)


def compare_csv(micro_csv: str, kinetic_csv: str, f_name: str, g_name: str) -> ComparisonReport:
    """Compare two stored fields; grids must match."""
    mu = read_field_csv(micro_csv)
    ref = read_field_csv(kinetic_csv, expected_grid=mu.grid)
    return compare_fields(mu, ref, f_name, g_name)


class _OutputTracker:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.written: list[str] = []

    def write_text(self, name: str, text: str) -> None:
        atomic_write_text(os.path.join(self.out_dir, name), text)
        self.written.append(name)

    def cleanup(self) -> None:
        for name in self.written:
            path = os.path.join(self.out_dir, name)
            if os.path.exists(path):
                os.unlink(path)


def run(config: RunConfig, out_dir: str | None = None, threads: int | None = None) -> int:
    """Dispatch an experiment; returns the exit status (0 or 3)."""
    out_dir = out_dir or config.out
    threads = threads if threads is not None else (config.threads or 1)
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest.start(config, threads)
    manifest.write(out_dir)
    tracker = _OutputTracker(out_dir)
    t0 = time.perf_counter()
    try:
        handler = _HANDLERS[config.experiment]
        status = handler(config, tracker, manifest, threads)
    except ConfigError:
        tracker.cleanup()
        manifest.finalize("validation-error")
        manifest.write(out_dir)
        raise
    except BaseException:
        tracker.cleanup()
        manifest.finalize("error")
        manifest.write(out_dir)
        raise
    manifest.data["stages"].append({"name": "total", "seconds": time.perf_counter() - t0})
    manifest.data["outputs"] = tracker.written
    manifest.finalize("complete" if status == 0 else "non-converged")
    manifest.write(out_dir)
    return status


# ---------------------------------------------------------------------------
# experiment handlers


def _grid(config) -> GridSpec:
    return make_grid(config.get("grid", "L"))


def _bin_width(config, grid, section="physics") -> float:
    bw = config.get(section, "bin_width")
    return bw if bw is not None else bz.default_bin_width(grid)


def _horizon_record(hz: micro.HorizonInfo) -> dict:
    return {
        "t_macro": hz.t_macro,
        "zeta": hz.zeta,
        "t_requested": hz.t_requested,
        "dt": hz.dt,
        "n_steps": hz.n_steps,
        "t_actual": hz.t_actual,
        "checkpoint_macro": list(hz.checkpoint_macro),
        "checkpoint_steps": list(hz.checkpoint_steps),
    }


def _run_micro(config, tracker, manifest, threads) -> int:
    grid = _grid(config)
    j = build_initial(grid, config)
    potential = build_potential(grid, config)
    cfg = micro.EvolutionConfig(
        eta=config.get("physics", "eta"),
        lam=config.get("physics", "lambda"),
        t_macro=config.get("physics", "T"),
        scaling=config.get("physics", "scaling"),
        dt=config.get("physics", "dt"),
        n_samples=config.get("physics", "samples"),
        checkpoints=config.get("physics", "checkpoints") or (),
        picard_tol=config.get("picard", "tol"),
        picard_max_iter=config.get("picard", "max_iter"),
    )
    hz = cfg.horizon()
    if hz.n_steps > config.get("physics", "max_steps"):
        raise ConfigError(f"{hz.n_steps} steps exceed max_steps = {config.get('physics', 'max_steps')}")
    traj, _ktraj, report, _ = micro.self_consistent_evolve(
        j, cfg, potential, master_seed=config.seed, n_workers=threads
    )
    for i, (mu_f, se_f) in enumerate(zip(traj.mu, traj.se)):
        tracker.write_text(f"mu_checkpoint_{i}.csv", field_csv_text(mu_f))
        tracker.write_text(f"se_checkpoint_{i}.csv", field_csv_text(se_f))
    manifest.data["rounding"]["horizon"] = _horizon_record(hz)
    manifest.data["convergence"] = {
        "picard_iterations": report.iterations,
        "picard_residual": report.residual,
        "picard_history": list(report.residual_history),
        "converged": report.converged,
        "norm_drift": report.norm_drift,
    }
    return 0 if report.converged else 3


def _run_boltzmann(config, tracker, manifest, threads) -> int:
    grid = _grid(config)
    f0 = build_initial(grid, config)
    delta = _bin_width(config, grid)
    shells = bz.make_shells(grid, delta)
    out = bz.solve_explicit(f0, config.get("physics", "T"), shells)
    tracker.write_text("f_T.csv", field_csv_text(out.f))
    manifest.data["convergence"] = {"bin_width": delta, "max_m": float(shells.m.values.max())}
    return 0


def _run_compare_theorem1(config, tracker, manifest, threads) -> int:
    grid = _grid(config)
    j = build_initial(grid, config)
    potential = build_potential(grid, config)
    pairs = config.get("compare", "pairs")
    test_pairs = {f"{a}:{b}": (test_function(grid, a), test_function(grid, b)) for a, b in pairs}
    delta = _bin_width(config, grid)
    rows = micro.kinetic_scaling_experiment(
        j,
        potential,
        config.get("physics", "eta_list"),
        config.get("physics", "T"),
        config.get("physics", "dt"),
        config.get("physics", "samples"),
        test_pairs,
        delta,
        lambda_coeff=config.get("physics", "lambda_coeff"),
        master_seed=config.seed,
        n_workers=threads,
        max_steps=config.get("physics", "max_steps"),
        picard_tol=config.get("picard", "tol"),
        picard_max_iter=config.get("picard", "max_iter"),
    )
    names = list(test_pairs)
    header = (
        "eta,lambda,n_steps,"
        + ",".join(f"weak_error_{n.replace(':', '_')},weak_se_{n.replace(':', '_')}" for n in names)
        + ",sup_error,picard_iterations,picard_residual,converged,runtime_seconds"
    )
    lines = []
    for r in rows:
        cells = [_fmt(r.eta), _fmt(r.lam), str(r.n_steps)]
        for n in names:
            err, se = r.weak_errors[n]
            cells += [_fmt(err), _fmt(se)]
        cells += [
            _fmt(r.sup_error),
            str(r.picard.iterations),
            _fmt(r.picard.residual),
            str(int(r.picard.converged)),
            _fmt(r.runtime),
        ]
        lines.append(",".join(cells))
    tracker.write_text("comparison.csv", header + "\n" + "\n".join(lines) + "\n")
    warn = []
    for n in names:
        errs = [r.weak_errors[n][0] for r in rows]
        if any(errs[i + 1] >= errs[i] for i in range(len(errs) - 1)):
            warn.append(n)
    if warn:
        manifest.data["notes"].append(
            f"WARN: weak error not monotone in eta for pairs {warn} (Monte Carlo noise possible)"
        )
    manifest.data["convergence"] = {
        "rows": [
            {"eta": r.eta, "picard_iterations": r.picard.iterations, "converged": r.picard.converged}
            for r in rows
        ],
        "bin_width": delta,
    }
    return 0 if all(r.picard.converged for r in rows) else 3


def _run_stationarity(config, tracker, manifest, threads) -> int:
    grid = _grid(config)
    j = build_initial(grid, config)
    potential = build_potential(grid, config)
    rows = micro.stationarity_experiment(
        j,
        potential,
        config.get("physics", "lambda_list"),
        config.get("physics", "delta"),
        config.get("physics", "T"),
        config.get("physics", "dt"),
        config.get("physics", "samples"),
        master_seed=config.seed,
        n_workers=threads,
        max_steps=config.get("physics", "max_steps"),
        picard_tol=config.get("picard", "tol"),
        picard_max_iter=config.get("picard", "max_iter"),
        control_rows=config.get("physics", "control"),
    )
    header = "lambda,eta,n_steps,deviation,in_regime,picard_iterations,converged,runtime_seconds"
    lines = [
        ",".join(
            [
                _fmt(r.lam),
                _fmt(r.eta),
                str(r.n_steps),
                _fmt(r.deviation),
                "in_regime" if r.in_regime else "out_of_regime",
                str(r.picard.iterations),
                str(int(r.picard.converged)),
                _fmt(r.runtime),
            ]
        )
        for r in rows
    ]
    tracker.write_text("stationarity.csv", header + "\n" + "\n".join(lines) + "\n")
    manifest.data["convergence"] = {
        "rows": [{"lambda": r.lam, "eta": r.eta, "converged": r.picard.converged} for r in rows]
    }
    return 0 if all(r.picard.converged for r in rows) else 3


def _run_fixed_point(config, tracker, manifest, threads) -> int:
    grid = _grid(config)
    f_init = build_initial(grid, config)
    potential = build_potential(grid, config)
    delta = config.get("fixed_point", "bin_width")
    if delta is None:
        delta = bz.default_bin_width(grid)
    fp_cfg = st.FixedPointConfig(
        theta=config.get("fixed_point", "theta"),
        tol=config.get("fixed_point", "tol"),
        max_iter=config.get("fixed_point", "max_iter"),
        delta=delta,
    )
    result = st.stationary_fixed_point(f_init, config.get("physics", "lambda"), potential, fp_cfg)
    tracker.write_text("fixed_point.csv", field_csv_text(result.f))
    manifest.data["convergence"] = {
        "iterations": result.iterations,
        "residual": result.residual,
        "residual_history": list(result.residual_history),
        "converged": result.converged,
        "bin_width": delta,
    }
    return 0 if result.converged else 3


def _run_graphs(config, tracker, manifest, threads) -> int:
    nbar_max = config.get("graphs", "nbar_max")
    report = gr.verify_dichotomy(nbar_max)
    lines = []
    for nbar in range(1, nbar_max + 1):
        for n in range(0, 2 * nbar + 1):
            lines.extend(gr.graph_csv_rows(n, 2 * nbar - n))
    tracker.write_text("graphs.csv", gr.GRAPH_CSV_HEADER + "\n" + "\n".join(lines) + "\n")
    manifest.data["convergence"] = {
        "dichotomy": "PASS",
        "total_graphs": report.total_graphs,
        "per_split": {f"{n},{nt}": c.total for (n, nt), c in sorted(report.per_split.items())},
    }
    return 0


def _run_diagnostics(config, tracker, manifest, threads) -> int:
    grid = _grid(config)
    f_init = build_initial(grid, config)
    potential = build_potential(grid, config)
    lam = config.get("physics", "lambda")
    etilde = st.renormalized_dispersion(f_init, lam, potential).etilde
    kind = config.get("diagnostics", "kind")
    eps = config.get("diagnostics", "epsilons")
    if kind == "crossing1":
        report = st.crossing_diagnostic_1(etilde, eps)
    else:
        report = st.crossing_diagnostic_2(etilde, eps, config.get("diagnostics", "n_mc"), seed=config.seed)
    rows = [f"{_fmt(r.epsilon)},{_fmt(r.value)}" for r in report.rows]
    write_header = "epsilon,sup_value"
    tracker.write_text("diagnostics.csv", write_header + "\n" + "\n".join(rows) + "\n")
    lo, hi = report.confidence_interval
    manifest.data["convergence"] = {
        "fit": report.fit_label,
        "fitted": report.fitted,
        "stderr": report.fitted_stderr,
        "confidence_interval": [lo, hi],
    }
    return 0


_HANDLERS = {
    "micro": _run_micro,
    "boltzmann": _run_boltzmann,
    "compare-theorem1": _run_compare_theorem1,
    "stationarity-theorem2": _run_stationarity,
    "fixed-point": _run_fixed_point,
    "graphs": _run_graphs,
    "diagnostics": _run_diagnostics,
}
