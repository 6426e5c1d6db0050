"""Hyperplane arrangements and affine cylindrical cell decompositions.

An arrangement of hyperplanes in R^d is decomposed into a finite partition
of cells organised level by level: level-0 holds the single origin cell
(the empty point of R^0); a level-i cell is a *section* (the graph of one
affine mapping over a base cell of level i−1) or a *sector* (the open slab
between two consecutive such graphs, or an unbounded slab beyond the first
or last one).  The decomposition is built by first projecting the
arrangement down dimension by dimension — adding, for every pair of
non-parallel non-vertical planes, the projection of their intersection —
and then stacking cells upward.  Projection guarantees delineability: over
any base cell, the mappings induced by the level's planes never cross, so
ordering them at the base cell's sample point orders them over the whole
cell.

All coordinates are exact rationals.  Hyperplanes are stored canonically:
integer coefficients with gcd 1 and a positive leading linear coefficient,
so that equal point sets have equal representations.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

from .core import rational
from .linprog import affine_eval

# ---------------------------------------------------------------------------
# Hyperplanes
# ---------------------------------------------------------------------------


def canonicalize(coeffs) -> tuple:
    """Canonical form of the hyperplane a_0 + a_1·x_1 + … + a_d·x_d = 0.

    Scales to coprime integers with the first nonzero linear coefficient
    positive.  Rejects functionals with an all-zero linear part (they are
    not hyperplanes).
    """
    coeffs = tuple(rational(a) for a in coeffs)
    if all(a == 0 for a in coeffs[1:]):
        raise ValueError("hyperplane has all-zero linear part")
    scale = reduce(math.lcm, (a.denominator for a in coeffs), 1)
    ints = [int(a * scale) for a in coeffs]
    g = reduce(math.gcd, ints)
    first = next(i for i in range(1, len(ints)) if ints[i] != 0)
    if ints[first] < 0:
        g = -g
    return tuple(Fraction(v, g) for v in ints)


@dataclass(frozen=True)
class Arrangement:
    """A finite set of canonical hyperplanes in R^d (first-appearance order)."""

    d: int
    hyperplanes: tuple


def make_arrangement(d: int, planes) -> Arrangement:
    if d < 1:
        raise ValueError("arrangement dimension must be at least 1")
    seen = set()
    out = []
    for h in planes:
        h = canonicalize(h)
        if len(h) != d + 1:
            raise ValueError(f"hyperplane of wrong dimension for R^{d}: {h}")
        if h not in seen:
            seen.add(h)
            out.append(h)
    return Arrangement(d=d, hyperplanes=tuple(out))


def _project_planes(planes, i: int):
    """Planes in R^{i-1} whose union covers all boundary interactions.

    Vertical planes (zero coefficient on x_i) descend unchanged minus the
    dropped coordinate; every non-parallel pair of non-vertical planes
    contributes the projection of its intersection.
    """
    seen = set()
    out = []

    def add(coeffs):
        h = canonicalize(coeffs)
        if h not in seen:
            seen.add(h)
            out.append(h)

    nonvertical = []
    for h in planes:
        if h[i] == 0:
            add(h[:i])
        else:
            nonvertical.append(h)
    for h1, h2 in itertools.combinations(nonvertical, 2):
        lam = h1[i] / h2[i]
        if all(h1[j] == lam * h2[j] for j in range(1, i)):
            continue  # parallel: proportional linear parts, empty intersection
        cand = tuple(h1[j] - lam * h2[j] for j in range(i))
        add(cand)
    return tuple(out)


def project_arrangement(arr: Arrangement) -> Arrangement:
    if arr.d < 2:
        raise ValueError("cannot project an arrangement on R^1")
    return Arrangement(d=arr.d - 1, hyperplanes=_project_planes(arr.hyperplanes, arr.d))


def mapping_value(h, y) -> Fraction:
    """Height of the non-vertical hyperplane h over the point y of R^{i-1}."""
    i = len(h) - 1
    if h[i] == 0:
        raise ValueError("vertical hyperplane has no section mapping")
    total = h[0]
    for a, v in zip(h[1 : i], y):
        total += a * v
    return -total / h[i]


# ---------------------------------------------------------------------------
# Cells and decompositions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    """One cell of a decomposition.

    ``id`` is the path of stack indices from the origin; ``lower``/``upper``
    are the delineating hyperplanes (None encodes −∞/+∞ for unbounded
    sectors; sections carry the same plane on both sides).  ``sample`` lies
    strictly inside the cell.
    """

    id: tuple
    level: int
    kind: str  # 'origin' | 'sector' | 'section'
    base: tuple | None
    lower: tuple | None
    upper: tuple | None
    sample: tuple


@dataclass(frozen=True)
class CellDecomposition:
    d: int
    pools: dict  # level i (1..d) → tuple of canonical hyperplanes of A_i
    levels: tuple  # levels[i] = tuple of level-i cells in construction order
    index: dict  # cell id → Cell

    def cells(self, level: int):
        return self.levels[level]

    def children(self, cell: Cell):
        prefix = cell.id
        return tuple(
            c for c in self.levels[cell.level + 1] if c.id[:-1] == prefix
        )


def _stack_elements(planes_nonvertical, base_sample):
    """The alternating sector/section stack over one base cell.

    Returns (kind, lower, upper, sample_extension) tuples in bottom-up
    order.  Mappings equal at the base sample are equal over the whole base
    cell (delineability), so grouping by sample value is exact.
    """
    groups = {}
    for h in planes_nonvertical:
        groups.setdefault(mapping_value(h, base_sample), []).append(h)
    values = sorted(groups)
    if not values:
        return [("sector", None, None, Fraction(0))]
    stack = [("sector", None, groups[values[0]][0], values[0] - 1)]
    for k, v in enumerate(values):
        plane = groups[v][0]
        stack.append(("section", plane, plane, v))
        if k + 1 < len(values):
            nxt = values[k + 1]
            stack.append(("sector", plane, groups[nxt][0], (v + nxt) / 2))
        else:
            stack.append(("sector", plane, None, v + 1))
    return stack


def build_cd(arr: Arrangement, restrict=None) -> CellDecomposition:
    """Affine cylindrical decomposition of R^{arr.d} adapted to ``arr``.

    ``restrict(level, sample)`` may prune cells (with their whole towers)
    during construction when the caller only needs the part of space where
    the predicate holds; pruning never alters surviving cells.
    """
    d = arr.d
    pools = {d: arr.hyperplanes}
    for i in range(d, 1, -1):
        pools[i - 1] = _project_planes(pools[i], i)

    origin = Cell(id=(), level=0, kind="origin", base=None, lower=None, upper=None, sample=())
    levels = [(origin,)]
    for i in range(1, d + 1):
        nonvertical = [h for h in pools[i] if h[i] != 0]
        new = []
        for base in levels[i - 1]:
            for k, (kind, lo, hi, t) in enumerate(
                _stack_elements(nonvertical, base.sample)
            ):
                sample = base.sample + (t,)
                if restrict is not None and not restrict(i, sample):
                    continue
                new.append(
                    Cell(
                        id=base.id + (k,),
                        level=i,
                        kind=kind,
                        base=base.id,
                        lower=lo,
                        upper=hi,
                        sample=sample,
                    )
                )
        levels.append(tuple(new))
    index = {c.id: c for level in levels for c in level}
    return CellDecomposition(d=d, pools=pools, levels=tuple(levels), index=index)


def cd_stats(cd: CellDecomposition) -> dict:
    return {
        "dimension": cd.d,
        "cells_per_level": [len(cd.levels[i]) for i in range(cd.d + 1)],
        "pool_sizes": {i: len(cd.pools[i]) for i in sorted(cd.pools)},
        "total_cells": sum(len(lv) for lv in cd.levels),
    }


# ---------------------------------------------------------------------------
# Cell queries
# ---------------------------------------------------------------------------


def cell_side(cd: CellDecomposition, cell: Cell, coeffs) -> str:
    """Side of the cell relative to a hyperplane: '+', '-', or '0'.

    The hyperplane (given by raw coefficients, not necessarily canonical)
    must belong to the decomposition's pool at the cell's level — then the
    cell lies entirely on one side or inside it, so the sign at the sample
    point is the sign everywhere.  The sign returned is that of the
    coefficients exactly as given.
    """
    coeffs = tuple(rational(a) for a in coeffs)
    if len(coeffs) != cell.level + 1:
        raise ValueError("hyperplane dimension does not match cell level")
    canon = canonicalize(coeffs)
    if canon not in cd.pools[cell.level]:
        raise ValueError("hyperplane is not in the decomposition's pool at this level")
    v = affine_eval(coeffs, cell.sample)
    return "+" if v > 0 else "-" if v < 0 else "0"


def cell_corners(cd: CellDecomposition, cell: Cell):
    """Corner points of a bounded cell, keyed by identifier strings.

    Each corner is named by a string over {'L','U'} — position j says
    whether the level-j ancestor's lower or upper delineating plane was
    followed.  Distinct strings may name coinciding points; duplicates are
    retained.  Raises ValueError for unbounded cells.
    """
    if cell.level == 0:
        return [("", ())]
    base = cd.index[cell.base]
    out = []
    for s, p in cell_corners(cd, base):
        for ch, plane in (("L", cell.lower), ("U", cell.upper)):
            if plane is None:
                raise ValueError("unbounded cell has no corners")
            out.append((s + ch, p + (mapping_value(plane, p),)))
    return out


def cell_contains(cd: CellDecomposition, cell: Cell, point) -> bool:
    """Exact membership of a point (length == cell.level) in the cell."""
    if cell.level == 0:
        return True
    base = cd.index[cell.base]
    y, t = point[:-1], point[-1]
    if not cell_contains(cd, base, y):
        return False
    if cell.kind == "section":
        return t == mapping_value(cell.lower, y)
    if cell.lower is not None and not t > mapping_value(cell.lower, y):
        return False
    if cell.upper is not None and not t < mapping_value(cell.upper, y):
        return False
    return True


def locate(cd: CellDecomposition, point) -> Cell:
    """The unique cell of level len(point) containing the point."""
    point = tuple(rational(v) for v in point)
    if len(point) > cd.d:
        raise ValueError("point has more coordinates than the decomposition")
    cell = cd.levels[0][0]
    for i in range(1, len(point) + 1):
        y, t = point[: i - 1], point[i - 1]
        found = None
        for child in cd.children(cell):
            if child.kind == "section":
                if t == mapping_value(child.lower, y):
                    found = child
                    break
            else:
                lo_ok = child.lower is None or t > mapping_value(child.lower, y)
                hi_ok = child.upper is None or t < mapping_value(child.upper, y)
                if lo_ok and hi_ok:
                    found = child
                    break
        if found is None:
            raise ValueError(f"no cell contains {point} at level {i}")
        cell = found
    return cell


def _chain(cd: CellDecomposition, cell: Cell):
    """Ancestors from level 1 down to the cell itself."""
    chain = []
    cur = cell
    while cur.level > 0:
        chain.append(cur)
        cur = cd.index[cur.base]
    return list(reversed(chain))


_SECTOR_FRACTIONS = (
    Fraction(1, 2),
    Fraction(1, 3),
    Fraction(2, 3),
    Fraction(1, 4),
    Fraction(3, 4),
)
_OPEN_OFFSETS = (
    Fraction(1),
    Fraction(1, 2),
    Fraction(2),
    Fraction(1, 3),
    Fraction(3),
)
_FREE_VALUES = (
    Fraction(0),
    Fraction(1),
    Fraction(-1),
    Fraction(1, 2),
    Fraction(-1, 2),
)


def cell_interior_points(cd: CellDecomposition, cell: Cell, count: int = 5):
    """Deterministic points strictly inside the cell (≤ 5 distinct recipes).

    Each variant re-walks the cell's chain, placing the new coordinate at a
    different position of the open interval between the delineating
    mappings evaluated at the partial point built so far.
    """
    if count > 5:
        raise ValueError("at most 5 interior variants are available")
    points = []
    for v in range(count):
        p = ()
        for c in _chain(cd, cell):
            if c.kind == "section":
                t = mapping_value(c.lower, p)
            else:
                lo = None if c.lower is None else mapping_value(c.lower, p)
                hi = None if c.upper is None else mapping_value(c.upper, p)
                if lo is None and hi is None:
                    t = _FREE_VALUES[v]
                elif lo is None:
                    t = hi - _OPEN_OFFSETS[v]
                elif hi is None:
                    t = lo + _OPEN_OFFSETS[v]
                else:
                    t = lo + (hi - lo) * _SECTOR_FRACTIONS[v]
            p = p + (t,)
        points.append(p)
    return points


# ---------------------------------------------------------------------------
# Compatibility
# ---------------------------------------------------------------------------


def _sign(v: Fraction) -> str:
    return "+" if v > 0 else "-" if v < 0 else "0"


def compatibility_check(
    cd: CellDecomposition, arr: Arrangement, n_points: int = 100, seed: int = 0
) -> bool:
    """Verify the decomposition is adapted to the arrangement.

    Every full-level cell must have a constant sign against every plane of
    the arrangement (checked on the sample plus five deterministic interior
    resamples), and random points must fall in exactly one cell of every
    level, agreeing with ``locate``.
    """
    d = cd.d
    for cell in cd.levels[d]:
        pts = [cell.sample] + cell_interior_points(cd, cell, 5)
        for h in arr.hyperplanes:
            signs = {_sign(affine_eval(h, p)) for p in pts}
            if len(signs) > 1:
                return False

    rng = random.Random(seed)
    for _ in range(n_points):
        point = tuple(
            Fraction(rng.randint(-12 * 16, 12 * 16), 16) for _ in range(d)
        )
        for level in range(1, d + 1):
            prefix = point[:level]
            members = [
                c for c in cd.levels[level] if cell_contains(cd, c, prefix)
            ]
            if len(members) != 1:
                return False
            if locate(cd, prefix).id != members[0].id:
                return False
    return True
