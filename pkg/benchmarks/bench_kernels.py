"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each case is timed with ``timeit`` (best of ``--repeat``) on both backends,
after checking that they return the same result.
"""
import argparse
import json
import timeit

import numpy as np

from noncanon import _pykernels

try:
    from noncanon import _ckernels
except ImportError:
    _ckernels = None


def volterra_case(n):
    rng = np.random.default_rng(0)
    f = np.exp(-1j * rng.uniform(0, 1) * np.arange(n + 1) * 0.01) * 0.8
    return f"volterra n={n}", "volterra_trapezoid", (f, 1.0, 0.01)


def histogram_case(N, m):
    return f"histogram N={N} m={m}", "coincidence_histogram", (N, m)


CASES = [volterra_case(500), volterra_case(2000), volterra_case(8000), histogram_case(8, 5), histogram_case(10, 6)]


def best_of(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.2 and number < 1000:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install --no-build-isolation -e .` first")
    rows = []
    print(f"{'case':<24}{'python [s]':>14}{'cython [s]':>14}{'speedup':>10}")
    for label, name, fargs in CASES:
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        a, b = py(*fargs), cy(*fargs)
        if isinstance(a, dict):
            assert a == b, label
        else:
            assert np.max(np.abs(a - b)) < 1e-10, label
        tp, tc = best_of(py, fargs, args.repeat), best_of(cy, fargs, args.repeat)
        rows.append({"case": label, "python": tp, "cython": tc, "speedup": tp / tc})
        print(f"{label:<24}{tp:>14.3e}{tc:>14.3e}{tp / tc:>10.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
