"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --n 100000 --r 3.0 --repeat 3
"""
import argparse
import time

import numpy as np

from frozencsp import _fallback
from frozencsp.core import build_gamma
from frozencsp.model import hypergraph_2col
from frozencsp.sampler import enumerate_solutions, sample_csp, sample_planted

try:
    from frozencsp import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--r", type=float, default=3.0)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--enum-n", type=int, default=18)
    ap.add_argument("--enum-r", type=float, default=1.5)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _kernels is None:
        print("compiled extension not built; nothing to compare")
        return
    m = hypergraph_2col(args.k)
    pp = sample_planted(m, args.n, int(args.r * args.n), args.seed)
    g = build_gamma(pp.instance, pp.sigma, m)
    indptr, inc = g.incidence
    peel_in = (g.n_vertices, g.edges, g.essential, indptr, inc)

    small = sample_csp(m, args.enum_n, int(args.enum_r * args.enum_n), args.seed)
    tables = np.ascontiguousarray(m.tables)
    enum_in = (small.n, tables, small.members, small.tuples)

    cases = [
        ("peel_sequential", peel_in),
        ("parallel_rounds", peel_in + (g.signs, 1 << 62)),
        ("enumerate_solutions", enum_in),
    ]
    print(f"{'kernel':<22}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, inputs in cases:
        tp, outp = best_of(lambda: getattr(_fallback, name)(*inputs), args.repeat)
        tc, outc = best_of(lambda: getattr(_kernels, name)(*inputs), args.repeat)
        outp = outp if isinstance(outp, tuple) else (outp,)
        outc = outc if isinstance(outc, tuple) else (outc,)
        agree = all(np.array_equal(a, b) for a, b in zip(outp, outc))
        print(f"{name:<22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}" + ("" if agree else "  MISMATCH"))


if __name__ == "__main__":
    main()
