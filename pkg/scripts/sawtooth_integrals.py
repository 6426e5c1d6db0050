"""Demo: exact integrals of sawtooth networks over [0, 1].

Builds one-hidden-layer networks whose graphs are unit-height sawteeth,
positive at the points of S1 and negative at S2, then integrates each
exactly.  The integral depends only on |S1| - |S2|: each tooth has the
same area by construction, so equal-size sets cancel to exactly zero.

Run:  python3 scripts/sawtooth_integrals.py
"""

from fractions import Fraction

from nnquery.analysis import Box, integrate_box
from nnquery.core import format_rational
from nnquery.network import build_sawtooth
from nnquery.pwl import pwl_from_network


def main():
    unit = Box(((Fraction(0), Fraction(1)),))
    grid = [Fraction(k, 16) for k in range(2, 15)]
    rows = [
        (grid[0:3], grid[4:7]),   # 3 vs 3 -> 0
        (grid[0:4], grid[5:7]),   # 4 vs 2 -> positive
        (grid[0:1], grid[2:6]),   # 1 vs 4 -> negative
        (grid[0:2], grid[8:10]),  # 2 vs 2 -> 0 (uneven spacing)
        ((), ()),                 # no teeth: the zero function
    ]
    print(f"{'|S1|':>4} {'|S2|':>4} {'integral over [0,1]':>20}")
    for s1, s2 in rows:
        net = build_sawtooth(tuple(s1), tuple(s2))
        value = integrate_box(pwl_from_network(net), unit)
        print(f"{len(s1):>4} {len(s2):>4} {format_rational(value):>20}")


if __name__ == "__main__":
    main()
