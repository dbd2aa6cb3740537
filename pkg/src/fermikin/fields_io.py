"""CSV persistence for momentum fields plus atomic file writes.

Field schema: one row per grid point, columns
``kx,ky,kz,p1,p2,p3,E,value`` with integer signed indices, fixed row order by
ascending (kx, ky, kz), and floats at 17 significant digits so every double
round-trips exactly.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .lattice import GridSpec, ScalarField, dispersion, make_grid

__all__ = [
    "FIELD_CSV_HEADER",
    "atomic_write_text",
    "field_csv_text",
    "write_field_csv",
    "read_field_csv",
    "write_rows_csv",
]

FIELD_CSV_HEADER = "kx,ky,kz,p1,p2,p3,E,value"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path: str, text: str) -> None:
    """Write text to a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sorted_signed_order(grid: GridSpec):
    """Storage-order indices arranged by ascending signed (kx, ky, kz)."""
    k = grid.signed_axis()
    order1d = np.argsort(k, kind="stable")  # -L/2 ... L/2-1
    return order1d


def field_csv_text(field: ScalarField) -> str:
    grid = field.grid
    L = grid.L
    k = grid.signed_axis()
    order = _sorted_signed_order(grid)
    e = dispersion(grid).values
    lines = [FIELD_CSV_HEADER]
    for i in order:
        ki = k[i]
        pi = ki / L
        for j in order:
            kj = k[j]
            pj = kj / L
            for m in order:
                km = k[m]
                pm = km / L
                lines.append(
                    f"{ki},{kj},{km},{_fmt(pi)},{_fmt(pj)},{_fmt(pm)},"
                    f"{_fmt(e[i, j, m])},{_fmt(field.values[i, j, m])}"
                )
    return "\n".join(lines) + "\n"


def write_field_csv(path: str, field: ScalarField) -> None:
    atomic_write_text(path, field_csv_text(field))


def read_field_csv(path: str, expected_grid: GridSpec | None = None) -> ScalarField:
    """Parse a field CSV, validating schema, ordering and grid consistency."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != FIELD_CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    n = len(rows)
    L = round(n ** (1.0 / 3.0))
    if L**3 != n:
        raise ValueError(f"{path}: {n} rows is not a cube")
    grid = make_grid(L)
    if expected_grid is not None and grid != expected_grid:
        raise ValueError(f"{path}: grid L={L} does not match expected L={expected_grid.L}")
    values = np.empty(grid.shape)
    half = L // 2
    expect_signed = np.arange(-half, half)
    r = 0
    for a in range(L):
        for b in range(L):
            for c in range(L):
                row = rows[r]
                r += 1
                if len(row) != 8:
                    raise ValueError(f"{path}: row {r + 1} has {len(row)} columns, expected 8")
                kx, ky, kz = int(row[0]), int(row[1]), int(row[2])
                if (kx, ky, kz) != (expect_signed[a], expect_signed[b], expect_signed[c]):
                    raise ValueError(f"{path}: row {r + 1} out of order: got ({kx},{ky},{kz})")
                values[kx % L, ky % L, kz % L] = float(row[7])
    return ScalarField(grid, values)


def write_rows_csv(path: str, header: str, rows) -> None:
    text = header + "\n" + "\n".join(rows) + ("\n" if rows else "")
    atomic_write_text(path, text)
