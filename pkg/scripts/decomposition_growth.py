"""Demo: how the cylindrical decomposition behind query evaluation grows.

For random networks of increasing width, builds the decomposition induced
by the graph query F(x1..xm) = z and prints cells per level.  The growth
with width (more breakplanes, more affine pieces) is the reason query
evaluation restricts hyperplanes to the levels where they are needed.

Run:  python3 scripts/decomposition_growth.py
"""

import random
import time

from nnquery.geometry import build_cd, cd_stats
from nnquery.pwl import pwl_from_network
from nnquery.query import build_query_arrangement, normalize_ordered_prenex, parse_query

from fractions import Fraction

from nnquery.network import Network, Neuron


def random_net(rng, m, width):
    def neuron(n_in):
        return Neuron(
            bias=Fraction(rng.randint(-4, 4), 2),
            weights=tuple(Fraction(rng.randint(-4, 4), 2) for _ in range(n_in)),
        )

    return Network(
        inputs=m,
        hidden=(tuple(neuron(m) for _ in range(width)),),
        outputs=(neuron(width),),
    )


def graph_query_cd(net):
    f = pwl_from_network(net)
    xs = [f"x{j}" for j in range(1, f.m + 1)]
    ast = parse_query(f"F({', '.join(xs)}) = z", f.m)
    q = normalize_ordered_prenex(ast, free_order=xs + ["z"])
    return build_cd(build_query_arrangement(f, q))


def main():
    rng = random.Random(2026)
    print(f"{'inputs':>6} {'width':>6} {'cells/level':>24} {'total':>8} {'secs':>7}")
    for m in (1, 2):
        for width in (1, 2, 3):
            net = random_net(rng, m, width)
            started = time.perf_counter()
            stats = cd_stats(graph_query_cd(net))
            elapsed = time.perf_counter() - started
            per_level = "/".join(str(c) for c in stats["cells_per_level"])
            print(
                f"{m:>6} {width:>6} {per_level:>24} "
                f"{stats['total_cells']:>8} {elapsed:>7.2f}"
            )


if __name__ == "__main__":
    main()
