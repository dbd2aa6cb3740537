"""Deterministic i.i.d. standard Gaussian site disorder.

Child streams are derived from (master_seed, sample_index) with a splitmix64
finalizer; uniforms come from a counter-based splitmix64 sequence and are
converted in fixed-order pairs by Box-Muller.  The draw count per site is
constant, so fields are bit-identical for a given SeedSpec no matter how many
samples are generated concurrently or in what order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import GridSpec

__all__ = [
    "SeedSpec",
    "DisorderField",
    "derive_child_seed",
    "sample_disorder",
    "splitmix64",
    "uniforms",
    "standard_normals",
]

# splitmix64 constants (Steele, Lea, Flood 2014; public domain reference values)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_U64 = np.uint64
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus sample index; the child stream depends on nothing else."""

    master_seed: int
    sample_index: int = 0

    def __post_init__(self):
        if not (0 <= self.sample_index):
            raise ValueError("sample_index must be non-negative")
        object.__setattr__(self, "master_seed", int(self.master_seed) & 0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class DisorderField:
    """Realization of the i.i.d. N(0,1) site energies omega_x."""

    grid: GridSpec
    omega: np.ndarray
    seed: SeedSpec | None = None

    def __post_init__(self):
        arr = np.array(self.omega, dtype=np.float64, copy=True)
        if arr.shape != self.grid.shape:
            raise ValueError(f"omega shape {arr.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("omega must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "omega", arr)


def splitmix64(z):
    """64-bit xor-shift-multiply finalizer, vectorized over uint64 arrays."""
    z = np.asarray(z, dtype=_U64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def derive_child_seed(master_seed: int, sample_index: int) -> int:
    """Child seed = splitmix64(master XOR sample_index * GAMMA), as a python int."""
    if sample_index < 0:
        raise ValueError("sample_index must be non-negative")
    m = _U64(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        x = m ^ (_U64(int(sample_index) & 0xFFFFFFFFFFFFFFFF) * _GAMMA)
    return int(splitmix64(x))


def uniforms(seed: int, count: int) -> np.ndarray:
    """Counter-based uniforms in [0, 1): u_i = splitmix64(seed + (i+1)*GAMMA) / 2^64."""
    i = np.arange(1, count + 1, dtype=_U64)
    with np.errstate(over="ignore"):
        z = splitmix64(_U64(int(seed) & 0xFFFFFFFFFFFFFFFF) + i * _GAMMA)
    # top 53 bits -> double in [0, 1)
    return (z >> _U64(11)).astype(np.float64) * (2.0**-53)


def standard_normals(seed: int, count: int) -> np.ndarray:
    """Fixed-order pair Box-Muller on the counter-based uniform stream.

    Pair j consumes uniforms (2j, 2j+1) and yields
    z_{2j}   = sqrt(-2 log(1-u_{2j})) * cos(2 pi u_{2j+1})
    z_{2j+1} = sqrt(-2 log(1-u_{2j})) * sin(2 pi u_{2j+1});
    1-u is in (0, 1] so the log argument never vanishes.
    """
    pairs = (count + 1) // 2
    u = uniforms(seed, 2 * pairs)
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    theta = (2.0 * np.pi) * u[1::2]
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


def sample_disorder(grid: GridSpec, seed: SeedSpec) -> DisorderField:
    """L^3 i.i.d. N(0,1) values, bit-identical across runs and thread counts."""
    child = derive_child_seed(seed.master_seed, seed.sample_index)
    vals = standard_normals(child, grid.total_points).reshape(grid.shape)
    return DisorderField(grid, vals, seed)
