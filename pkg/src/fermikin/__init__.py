"""Momentum-space laboratory for weakly disordered lattice fermions.

Library layout:

- ``lattice``    : discrete momentum/position 3-torus, dispersion, transforms
- ``disorder``   : seeded i.i.d. Gaussian site disorder
- ``micro``      : split-step one-particle dynamics with self-consistent exchange
- ``boltzmann``  : energy-shell collision kernel and linear relaxation solvers
- ``stationary`` : renormalized-dispersion fixed point and resolvent diagnostics
- ``graphs``     : pair-contraction enumeration and classification
- ``config`` / ``runner`` / ``cli`` : experiment orchestration (``fermikin`` tool)
"""

import os as _os
import sys as _sys

# Reproducibility note: ensemble reductions and the measurement kernels avoid
# multi-threaded BLAS entirely, so results are bit-identical for any worker
# count.  Pinning BLAS pools to one thread here only prevents oversubscription
# when disorder samples run in parallel worker processes.  This has effect only
# if numpy has not been imported yet.
if "numpy" not in _sys.modules:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, "1")
del _os, _sys

__version__ = "0.1.0"

from .lattice import (  # noqa: E402
    GridSpec,
    ScalarField,
    ComplexField,
    PairPotential,
    make_grid,
    dispersion,
    forward_transform,
    inverse_transform,
    convolve,
    sobolev_norm,
)
from .disorder import SeedSpec, DisorderField, derive_child_seed, sample_disorder  # noqa: E402

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
    "sobolev_norm",
    "SeedSpec",
    "DisorderField",
    "derive_child_seed",
    "sample_disorder",
    "__version__",
]
