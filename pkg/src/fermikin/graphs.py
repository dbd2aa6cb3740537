"""Pair-contraction graphs on two particle lines: enumeration and classification.

Vertices 1..n sit on the left particle line and n+1..n+ntilde on the right,
numbered left to right.  A graph is a perfect matching of the n+ntilde
interaction vertices.  Classification:

- immediate recollision: pair (l, l+1) with both vertices on one line;
- rung:                  pair (l, l') with l <= n < l';
- basic ladder:          n = ntilde and pairs exactly {(l, 2n+1-l)};
- decorated ladder:      every pair is an immediate recollision or a rung, and
                         rungs sorted by left endpoint have strictly
                         decreasing right endpoints;
- crossing:              pairs (l, l') and (j, j') with l < j < l' < j';
- nesting:               a pair (l, l') with l' - l >= 3, both endpoints on
                         one line, whose interior is tiled by adjacent pairs
                         (j, j+1), j = l+1, l+3, ..., l'-2.

Every graph that is not a decorated ladder contains a crossing or a nesting;
``verify_dichotomy`` checks this exhaustively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

from .boltzmann import ShellOperator
from .lattice import ScalarField, grid_mean

__all__ = [
    "ContractionGraph",
    "ClassificationFlags",
    "ClassCounts",
    "DichotomyReport",
    "enumerate_graphs",
    "classify",
    "verify_dichotomy",
    "double_factorial",
    "ladder_term_kinetic",
    "graph_csv_rows",
    "GRAPH_CSV_HEADER",
]

ENUMERATION_BUDGET = 14  # (2*7-1)!! = 135135 matchings


def double_factorial(k: int) -> int:
    """(2k-1)!! = (2k)!/(k! 2^k), the number of perfect matchings of 2k items."""
    return math.factorial(2 * k) // (math.factorial(k) * 2**k)


@dataclass(frozen=True)
class ContractionGraph:
    """Perfect matching of {1, ..., n+ntilde} stored as sorted pairs."""

    n: int
    ntilde: int
    pairs: tuple

    def __post_init__(self):
        total = self.n + self.ntilde
        if total % 2 != 0:
            raise ValueError("n + ntilde must be even")
        pairs = tuple(sorted((min(a, b), max(a, b)) for a, b in self.pairs))
        seen = [v for p in pairs for v in p]
        if sorted(seen) != list(range(1, total + 1)):
            raise ValueError("pairs must form a perfect matching of 1..n+ntilde")
        object.__setattr__(self, "pairs", pairs)

    @property
    def canonical(self) -> str:
        return ",".join(f"{a}-{b}" for a, b in self.pairs)


@dataclass(frozen=True)
class ClassificationFlags:
    immediate_recollision_count: int
    is_basic_ladder: bool
    is_decorated_ladder: bool
    has_crossing: bool
    has_nesting: bool


def _matchings(verts: tuple) -> Iterator[tuple]:
    """All matchings of a sorted vertex tuple, first element paired ascending."""
    if not verts:
        yield ()
        return
    first, rest = verts[0], verts[1:]
    for i, partner in enumerate(rest):
        head = (first, partner)
        for tail in _matchings(rest[:i] + rest[i + 1 :]):
            yield (head,) + tail


def enumerate_graphs(n: int, ntilde: int) -> Iterator[ContractionGraph]:
    """Every perfect matching of the n + ntilde vertices, in canonical order."""
    if n < 0 or ntilde < 0:
        raise ValueError("n and ntilde must be non-negative")
    total = n + ntilde
    if total % 2 != 0:
        raise ValueError(f"n + ntilde = {total} is odd: no perfect matchings")
    if total > ENUMERATION_BUDGET:
        raise ValueError(f"n + ntilde = {total} exceeds enumeration budget {ENUMERATION_BUDGET}")
    for pairs in _matchings(tuple(range(1, total + 1))):
        yield ContractionGraph(n, ntilde, pairs)


def _is_immediate_recollision(pair, n):
    a, b = pair
    return b == a + 1 and (b <= n or a >= n + 1)


def classify(g: ContractionGraph) -> ClassificationFlags:
    n = g.n
    pairs = g.pairs
    partner = {}
    for a, b in pairs:
        partner[a] = b
        partner[b] = a

    imm = [p for p in pairs if _is_immediate_recollision(p, n)]
    rungs = [(a, b) for a, b in pairs if a <= n and b >= n + 1]

    basic = (
        g.n == g.ntilde
        and all(partner[l] == 2 * n + 1 - l for l in range(1, n + 1))
    )

    decorated = len(imm) + len(rungs) == len(pairs)
    if decorated and rungs:
        rights = [b for a, b in sorted(rungs)]
        decorated = all(rights[i] > rights[i + 1] for i in range(len(rights) - 1))

    crossing = any(
        a1 < a2 < b1 < b2
        for i, (a1, b1) in enumerate(pairs)
        for (a2, b2) in pairs[i + 1 :]
    )

    nesting = False
    for a, b in pairs:
        if b - a < 3:
            continue
        if not (b <= n or a >= n + 1):
            continue
        interior_tiled = all(partner.get(j) == j + 1 for j in range(a + 1, b - 1, 2))
        if interior_tiled:
            nesting = True
            break

    return ClassificationFlags(len(imm), basic, decorated, crossing, nesting)


@dataclass(frozen=True)
class ClassCounts:
    total: int = 0
    basic_ladder: int = 0
    decorated_ladder: int = 0
    crossing: int = 0
    nesting: int = 0
    violations: int = 0


@dataclass(frozen=True)
class DichotomyReport:
    nbar_max: int
    per_split: dict
    total_graphs: int
    violations: tuple

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_dichotomy(nbar_max: int) -> DichotomyReport:
    """Exhaustively assert (not decorated) => (crossing or nesting), nbar <= nbar_max."""
    if nbar_max > 5:
        raise ValueError("nbar_max must be <= 5 (classification budget)")
    per_split = {}
    violations = []
    total = 0
    for nbar in range(1, nbar_max + 1):
        for n in range(0, 2 * nbar + 1):
            ntilde = 2 * nbar - n
            counts = dict(total=0, basic_ladder=0, decorated_ladder=0, crossing=0, nesting=0, violations=0)
            seen = set()
            for g in enumerate_graphs(n, ntilde):
                key = g.canonical
                if key in seen:
                    raise AssertionError(f"duplicate canonical encoding {key} at (n, ntilde)=({n},{ntilde})")
                seen.add(key)
                flags = classify(g)
                counts["total"] += 1
                counts["basic_ladder"] += flags.is_basic_ladder
                counts["decorated_ladder"] += flags.is_decorated_ladder
                counts["crossing"] += flags.has_crossing
                counts["nesting"] += flags.has_nesting
                if not flags.is_decorated_ladder and not (flags.has_crossing or flags.has_nesting):
                    counts["violations"] += 1
                    violations.append((n, ntilde, key))
            expected = double_factorial(nbar)
            if counts["total"] != expected:
                raise AssertionError(
                    f"(n, ntilde)=({n},{ntilde}): enumerated {counts['total']} != (2*{nbar}-1)!! = {expected}"
                )
            per_split[(n, ntilde)] = ClassCounts(**counts)
            total += counts["total"]
    if violations:
        listing = "; ".join(f"(n={n},nt={nt}) {k}" for n, nt, k in violations[:10])
        raise AssertionError(f"dichotomy violated by {len(violations)} graphs: {listing}")
    return DichotomyReport(nbar_max, per_split, total, tuple(violations))


def ladder_term_kinetic(
    q: int,
    t: float,
    j_field: ScalarField,
    f: ScalarField,
    g: ScalarField,
    shells: ShellOperator,
) -> float:
    """Kinetic limit of the q-rung basic ladder: (T^q/q!) <f g, (m A)^q [J]>.

    The pairing <a, b> is the grid mean (1/L^3) sum_p a(p) b(p); the signed
    resummation against exp(-T m) lives in boltzmann.duhamel_series.
    """
    if q < 0 or t < 0:
        raise ValueError("q and T must be non-negative")
    for fld in (j_field, f, g):
        if fld.grid != shells.grid:
            raise ValueError("grid mismatch")
    m_max = float(shells.m.values.max())
    if q > 0 and t * m_max > 200.0:
        raise ValueError(f"T*max(m) = {t * m_max:.1f} too large (overflow guard)")
    x = j_field.values.copy()
    for k in range(1, q + 1):
        x = (t / k) * (shells.m.values * shells.average_values(x))
    return grid_mean(f.values * g.values * x)


GRAPH_CSV_HEADER = "n,ntilde,pairing,immediate_recollisions,basic_ladder,decorated_ladder,crossing,nesting"


def graph_csv_rows(n: int, ntilde: int) -> Iterator[str]:
    """CSV rows (no header) for every graph of the (n, ntilde) family."""
    for g in enumerate_graphs(n, ntilde):
        fl = classify(g)
        yield (
            f"{n},{ntilde},\"{g.canonical}\",{fl.immediate_recollision_count},"
            f"{int(fl.is_basic_ladder)},{int(fl.is_decorated_ladder)},"
            f"{int(fl.has_crossing)},{int(fl.has_nesting)}"
        )
