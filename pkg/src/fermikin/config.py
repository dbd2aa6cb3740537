"""Strict line-oriented configuration for the fermikin tool.

Format: ``[section]`` headers and ``key = value`` lines; ``#`` starts a
comment.  Unknown sections or keys are errors, every diagnostic carries the
key name and line number.  All keys are documented in docs/config.md.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .lattice import GridSpec, PairPotential, ScalarField, cosine_bump_vhat, make_grid

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "parse_config_text",
    "EXPERIMENTS",
    "test_function",
    "build_potential",
    "build_initial",
]

EXPERIMENTS = (
    "micro",
    "boltzmann",
    "compare-theorem1",
    "stationarity-theorem2",
    "fixed-point",
    "graphs",
    "diagnostics",
)

# aliases accepted in config files / CLI for the Theorem-3 experiment
_EXPERIMENT_ALIASES = {"fixed-point-theorem3": "fixed-point"}


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 1."""


def _parse_bool(s):
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _parse_pairs(s):
    out = []
    for item in s.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ValueError(f"pair {item!r} must look like f:g")
        a, b = item.split(":", 1)
        out.append((a.strip(), b.strip()))
    return tuple(out)


def _parse_lam_eta(s):
    out = []
    for item in s.split(","):
        item = item.strip()
        if not item:
            continue
        a, b = item.split(":", 1)
        out.append((float(a), float(b)))
    return tuple(out)


# (section, key) -> (parser, default); required-ness is per experiment
_SCHEMA = {
    ("run", "experiment"): (str, None),
    ("run", "seed"): (int, 0),
    ("run", "out"): (str, "runs/out"),
    ("run", "threads"): (int, None),
    ("grid", "L"): (int, None),
    ("physics", "eta"): (float, None),
    ("physics", "eta_list"): (_parse_float_list, None),
    ("physics", "lambda"): (float, 0.0),
    ("physics", "lambda_list"): (_parse_float_list, None),
    ("physics", "lambda_coeff"): (float, 1.0),
    ("physics", "T"): (float, None),
    ("physics", "dt"): (float, 0.02),
    ("physics", "samples"): (int, 1),
    ("physics", "scaling"): (str, "eta2"),
    ("physics", "delta"): (float, None),
    ("physics", "checkpoints"): (_parse_float_list, None),
    ("physics", "max_steps"): (int, 100_000),
    ("physics", "bin_width"): (float, None),
    ("physics", "control"): (_parse_lam_eta, ()),
    ("initial", "kind"): (str, "cosine_bump"),
    ("initial", "beta"): (lambda s: math.inf if s == "inf" else float(s), 1.0),
    ("initial", "mu_chem"): (float, 0.0),
    ("initial", "amplitude"): (float, 0.3),
    ("initial", "offset"): (float, 0.5),
    ("initial", "value"): (float, 0.5),
    ("initial", "input_csv"): (str, None),
    ("potential", "kind"): (str, "cosine_bump"),
    ("potential", "amplitude"): (float, 1.0),
    ("potential", "sigma"): (float, 0.5),
    ("picard", "tol"): (float, 1e-3),
    ("picard", "max_iter"): (int, 8),
    ("compare", "pairs"): (_parse_pairs, (("one", "one"), ("cos1", "cos1"))),
    ("fixed_point", "theta"): (float, 0.5),
    ("fixed_point", "tol"): (float, 1e-8),
    ("fixed_point", "max_iter"): (int, 200),
    ("fixed_point", "bin_width"): (float, None),
    ("graphs", "nbar_max"): (int, 4),
    ("diagnostics", "kind"): (str, "crossing1"),
    ("diagnostics", "epsilons"): (_parse_float_list, (0.3, 0.1, 0.03)),
    ("diagnostics", "n_mc"): (int, 10_000),
}

_SECTIONS = sorted({s for s, _ in _SCHEMA})


@dataclass
class RunConfig:
    """Resolved, validated experiment configuration."""

    experiment: str
    seed: int
    out: str
    threads: int | None
    values: dict = dc_field(default_factory=dict)

    def get(self, section, key):
        return self.values[(section, key)]

    def resolved(self) -> dict:
        out = {}
        for (section, key), val in sorted(self.values.items()):
            if isinstance(val, tuple):
                val = list(val)
            out.setdefault(section, {})[key] = val
        return out


def parse_config_text(text: str, origin: str = "<config>") -> RunConfig:
    values = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"{origin}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"{origin}:{lineno}: key outside any [section]")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if (section, key) not in _SCHEMA:
            raise ConfigError(f"{origin}:{lineno}: unknown key '{key}' in section [{section}]")
        parser, _default = _SCHEMA[(section, key)]
        try:
            parsed = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{origin}:{lineno}: key '{key}': {exc}") from exc
        if (section, key) in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key '{key}' in section [{section}]")
        values[(section, key)] = (parsed, lineno)
    return _validate(values, origin)


def parse_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, origin=path)


def _require(values, origin, section, key):
    if (section, key) not in values:
        raise ConfigError(f"{origin}: missing required key '{key}' in section [{section}]")


def _validate(raw: dict, origin: str) -> RunConfig:
    values = {sk: v for sk, (v, _ln) in raw.items()}
    lines = {sk: ln for sk, (_v, ln) in raw.items()}
    for sk, (parser, default) in _SCHEMA.items():
        values.setdefault(sk, default)

    def err(section, key, msg):
        loc = f"{origin}:{lines[(section, key)]}" if (section, key) in lines else origin
        return ConfigError(f"{loc}: key '{key}': {msg}")

    exp = values[("run", "experiment")]
    if exp is None:
        raise ConfigError(f"{origin}: missing required key 'experiment' in section [run]")
    exp = _EXPERIMENT_ALIASES.get(exp, exp)
    if exp not in EXPERIMENTS:
        raise err("run", "experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    values[("run", "experiment")] = exp

    needs_grid = exp not in ("graphs",)
    if needs_grid:
        if values[("grid", "L")] is None:
            raise ConfigError(f"{origin}: missing required key 'L' in section [grid]")
        L = values[("grid", "L")]
        if L % 2 != 0:
            raise err("grid", "L", "L must be even")
        if not (2 <= L <= 256):
            raise err("grid", "L", "L must satisfy 2 <= L <= 256")

    if exp in ("micro", "boltzmann", "compare-theorem1", "stationarity-theorem2"):
        _require(raw, origin, "physics", "T")
        if values[("physics", "T")] < 0:
            raise err("physics", "T", "T must be >= 0")

    if exp == "micro":
        _require(raw, origin, "physics", "eta")
        if values[("physics", "scaling")] not in ("eta2", "lambda"):
            raise err("physics", "scaling", "must be 'eta2' or 'lambda'")
        if values[("physics", "scaling")] == "lambda" and values[("physics", "delta")] is None:
            raise ConfigError(
                f"{origin}: scaling = lambda requires key 'delta' in section [physics]"
            )
    if exp == "compare-theorem1":
        _require(raw, origin, "physics", "eta_list")
        if not (0 < values[("physics", "lambda_coeff")] <= 1):
            raise err("physics", "lambda_coeff", "must be in (0, 1]")
    if exp == "stationarity-theorem2":
        _require(raw, origin, "physics", "lambda_list")
        if values[("physics", "delta")] is None:
            raise ConfigError(
                f"{origin}: stationarity-theorem2 requires key 'delta' in section [physics]"
            )
        if values[("physics", "delta")] <= 0:
            raise err("physics", "delta", "delta must be > 0")
    if exp in ("micro", "compare-theorem1", "stationarity-theorem2"):
        dt = values[("physics", "dt")]
        if not (0 < dt <= 0.05):
            raise err("physics", "dt", "dt must satisfy 0 < dt <= 0.05")
        if values[("physics", "samples")] < 1:
            raise err("physics", "samples", "samples must be >= 1")
    if exp == "diagnostics":
        kind = values[("diagnostics", "kind")]
        if kind not in ("crossing1", "crossing2"):
            raise err("diagnostics", "kind", "must be 'crossing1' or 'crossing2'")
        if kind == "crossing2" and values[("diagnostics", "n_mc")] < 10**4:
            raise err("diagnostics", "n_mc", "n_mc must be >= 1e4")
    if exp == "graphs":
        nb = values[("graphs", "nbar_max")]
        if not (1 <= nb <= 5):
            raise err("graphs", "nbar_max", "nbar_max must be in 1..5")

    ik = values[("initial", "kind")]
    if ik not in ("fermi_dirac", "cosine_bump", "constant"):
        raise err("initial", "kind", "must be fermi_dirac, cosine_bump or constant")
    pk = values[("potential", "kind")]
    if pk not in ("cosine_bump", "zero"):
        raise err("potential", "kind", "must be cosine_bump or zero")

    return RunConfig(
        experiment=exp,
        seed=values[("run", "seed")],
        out=values[("run", "out")],
        threads=values[("run", "threads")],
        values=values,
    )


# ---------------------------------------------------------------------------
# shared builders


def test_function(grid: GridSpec, name: str) -> ScalarField:
    """Named real test functions on the momentum torus."""
    p1, p2, p3 = grid.momentum_axes()
    two_pi = 2.0 * np.pi
    table = {
        "one": lambda: np.ones(grid.shape),
        "cos1": lambda: np.cos(two_pi * p1),
        "cos2": lambda: np.cos(two_pi * p2),
        "cos3": lambda: np.cos(two_pi * p3),
        "sin1": lambda: np.sin(two_pi * p1),
        "sin2": lambda: np.sin(two_pi * p2),
        "sin3": lambda: np.sin(two_pi * p3),
    }
    if name not in table:
        raise ConfigError(f"unknown test function {name!r}; choose from {sorted(table)}")
    return ScalarField(grid, table[name]())


def build_potential(grid: GridSpec, config: RunConfig) -> PairPotential:
    kind = config.get("potential", "kind")
    amp = config.get("potential", "amplitude")
    sigma = config.get("potential", "sigma")
    if kind == "zero":
        return PairPotential.from_vhat(grid, ScalarField(grid, np.zeros(grid.shape)), sigma)
    return PairPotential.from_vhat(grid, cosine_bump_vhat(grid, amp), sigma)


def build_initial(grid: GridSpec, config: RunConfig) -> ScalarField:
    from . import micro
    from .fields_io import read_field_csv

    path = config.get("initial", "input_csv")
    if path is not None:
        return read_field_csv(path, expected_grid=grid)
    kind = config.get("initial", "kind")
    if kind == "fermi_dirac":
        return micro.initial_occupation(
            grid, "fermi_dirac", beta=config.get("initial", "beta"), mu_chem=config.get("initial", "mu_chem")
        )
    if kind == "cosine_bump":
        return micro.initial_occupation(
            grid,
            "cosine_bump",
            amplitude=config.get("initial", "amplitude"),
            offset=config.get("initial", "offset"),
        )
    return micro.initial_occupation(grid, "constant", value=config.get("initial", "value"))
