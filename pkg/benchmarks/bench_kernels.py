"""Compiled vs pure-Python kernels on the workloads the strategies actually issue.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from bikerec import kernels


def workloads(rng):
    pi = rng.dirichlet(np.ones(25))
    m = 40
    cap = rng.integers(10, 31, m).astype(np.int64)
    start = np.array([rng.integers(c + 1) for c in cap], dtype=np.int64)
    lam1, mu1, lam2, mu2 = (rng.uniform(0, 0.005, m) for _ in range(4))
    dur1 = rng.uniform(0, 900, m)
    h = np.full(m, 5.0)
    lo = np.ones(m, dtype=np.int64)
    return {
        # one EC probability: an hour of evolution at 5 s steps
        "evolve K=24, 3600 s": lambda be: be.evolve(pi, 0.004, 0.003, 3600.0, 5.0),
        # one boundary average over a 20 min prediction window
        "evolve_average K=24, 1200 s": lambda be: be.evolve_average(pi, 0.004, 0.003, 1200.0, 5.0),
        # arrival probabilities for a batch of 40 candidate stations
        "point_mass_probs x40": lambda be: be.point_mass_probs(cap, start, lam1, mu1, dur1, h, lo, cap, 1e-12),
        # future impacts for 40 candidates (ECFI's inner loop)
        "arrival_impacts x40, 1200 s": lambda be: be.arrival_impacts(cap, start, lam1, mu1, dur1, h, lam2, mu2,
                                                                     1200.0, h, -1),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.backends()
    names = [b.BACKEND for b in backends]
    if len(backends) < 2:
        print("compiled extension not built; only timing the Python fallback")
    rng = np.random.default_rng(0)
    print(f"{'workload':32s}" + "".join(f"{n:>14s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in workloads(rng).items():
        times = []
        for be in backends:
            fn(be)  # warm up
            number = 1 if be.BACKEND == "python" else 20
            best = min(timeit.repeat(lambda: fn(be), number=number, repeat=args.repeat)) / number
            times.append(best)
        row = f"{label:32s}" + "".join(f"{t * 1e3:12.3f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[1] / times[0]:11.0f}x"
        print(row)


if __name__ == "__main__":
    main()
