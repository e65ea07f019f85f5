"""Compare the compiled and numpy strided-correlation kernels.

Usage: ``python benchmarks/bench_kernels.py [--repeat R]``.  Prints the
median time per call for each backend and the speedup of the compiled one.
"""
import argparse
import timeit

import numpy as np

from stochrecon import _kernels_py, build_basis, kernels

CASES = [
    # (paths, grid cells, stride, taps source level)
    (1, 4096, 4, 2),
    (250, 4096, 4, 2),
    (250, 4096, 64, 6),
    (250, 16384, 16, 4),
]


def bench(impl, x, w, start, stride, count, size, repeat):
    c = impl.analyze(x, w, start, stride, count)
    t_a = min(timeit.repeat(lambda: impl.analyze(x, w, start, stride, count), number=5,
                            repeat=repeat)) / 5
    t_s = min(timeit.repeat(lambda: impl.synthesize(c, w, start, stride, size), number=5,
                            repeat=repeat)) / 5
    return t_a, t_s


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the numpy backend can run")
    basis = build_basis("daubechies", 3)
    rng = np.random.default_rng(0)
    print(f"{'paths':>6} {'cells':>6} {'stride':>6} {'taps':>5} {'op':>10} "
          f"{'numpy ms':>9} {'cython ms':>10} {'speedup':>8}")
    for paths, size, stride, level in CASES:
        w = basis.taps_on_grid(0, 1, 2 ** level)
        x = rng.standard_normal((paths, size))
        count = (size - w.size) // stride
        ref = bench(_kernels_py, x, w, -w.size // 2, stride, count, size, args.repeat)
        if kernels.BACKEND == "cython":
            fast = bench(kernels._impl, x, w, -w.size // 2, stride, count, size, args.repeat)
        else:
            fast = (float("nan"), float("nan"))
        for op, a, b in zip(("analyze", "synthesize"), ref, fast):
            print(f"{paths:6d} {size:6d} {stride:6d} {w.size:5d} {op:>10} {a * 1e3:9.3f} "
                  f"{b * 1e3:10.3f} {a / b:8.2f}")


if __name__ == "__main__":
    main()
