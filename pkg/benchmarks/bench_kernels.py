"""Time the compiled kernels against the numpy/pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from demoguide import kernels


def cases(rng):
    T = 1000  # one epoch of frames
    r, v = rng.normal(size=T), rng.normal(size=T)
    d = (rng.random(T) < 0.02).astype(np.uint8)
    pts, cents = rng.normal(size=(T, 6)), rng.normal(size=(16, 6))
    labels = rng.integers(0, 16, size=T)
    return {
        "gae (T=1000)": lambda impl: kernels.gae(r, v, 0.3, d, 0.99, 0.97, impl=impl),
        "discounted_returns (T=1000)": lambda impl: kernels.discounted_returns(r, d, 0.3, 0.99, impl=impl),
        "assign_nearest (1000x6, k=16)": lambda impl: kernels.assign_nearest(pts, cents, impl=impl),
        "centroid_sums (1000x6, k=16)": lambda impl: kernels.centroid_sums(pts, labels, 16, impl=impl),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the fallback can be timed")
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    impls = {b: kernels.get_backend(b) for b in backends}
    print(f"{'kernel':<32}" + "".join(f"{b + ' (us)':>16}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {}
        for b, impl in impls.items():
            fn(impl)
            times[b] = min(timeit.repeat(lambda: fn(impl), number=args.repeat, repeat=3)) / args.repeat * 1e6
        speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else ""
        print(f"{name:<32}" + "".join(f"{times[b]:>16.1f}" for b in backends) + speed)


if __name__ == "__main__":
    main()
