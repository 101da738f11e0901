"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 200 800] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from cgm import kernels


def corner_case(n: int):
    rng = np.random.default_rng(0)
    Y = rng.exponential(1.0, (n, n))
    T = np.zeros((n, n))
    T[:, 0] = np.cumsum(Y[:, 0])
    T[0, :] = np.cumsum(Y[0, :])
    return lambda ns: ns.corner_sweep(Y, T.copy())


def wet_case(n: int):
    sigma = np.random.default_rng(1).random((n, n)) < 0.7
    R = np.zeros((n, n), dtype=np.bool_)
    R[0, 0] = True
    return lambda ns: ns.wet_sweep(sigma, R.copy())


def tandem_case(n: int):
    rng = np.random.default_rng(2)
    customers, stations = n * 10, 30
    S = rng.exponential(1.0, (customers, stations))
    A0 = np.full(customers - 1, 2.0)

    def go(ns):
        A = np.empty((customers - 1, stations + 1))
        A[:, 0] = A0
        ns.tandem_sweep(A, S, np.zeros((customers, stations)))
    return go


CASES = {"corner_sweep": corner_case, "wet_sweep": wet_case, "tandem_sweep": tandem_case}


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", type=int, nargs="+", default=[200, 800])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    print(f"{'kernel':<14}{'size':>7}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, make in CASES.items():
        for n in args.sizes:
            run = make(n)
            run(kernels.numba_kernels)  # compile outside the timing
            t_nb = min(timeit.repeat(lambda: run(kernels.numba_kernels), number=1, repeat=args.repeat))
            t_np = min(timeit.repeat(lambda: run(kernels.numpy_kernels), number=1, repeat=args.repeat))
            print(f"{name:<14}{n:>7}{t_nb * 1e3:>12.2f}{t_np * 1e3:>12.2f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
