"""Pure-Python/NumPy implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is not built or ``NONCANON_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import itertools
from collections import Counter

import numpy as np


def volterra_trapezoid(f, C, h):
    """March ``F' = -C (f * F)`` with trapezoid rules in time and convolution.

    ``f`` holds kernel samples ``f(j h)`` for ``j = 0..n``. Returns ``F`` on
    the same grid with ``F[0] = 1``.
    """
    f = np.ascontiguousarray(f, dtype=np.complex128)
    n = f.size - 1
    F = np.empty(n + 1, dtype=np.complex128)
    F[0] = 1.0
    if n == 0:
        return F
    a = 0.5 * C * h
    denom = 1.0 + a * 0.5 * h * f[0]
    G_prev = 0.0j
    for i in range(1, n + 1):
        # sum_{j=1}^{i-1} f[i-j] F[j]
        s = np.dot(f[i - 1:0:-1], F[1:i]) if i > 1 else 0.0j
        partial = h * (0.5 * f[i] * F[0] + s)
        F[i] = (F[i - 1] - a * (G_prev + partial)) / denom
        G_prev = partial + 0.5 * h * f[0] * F[i]
    return F


def coincidence_histogram(N, m):
    """Classify all ``N**m`` ordered index tuples by coincidence partition.

    Returns ``{partition: count}`` with partitions as non-increasing tuples.
    """
    if N < 1 or m < 1:
        raise ValueError("need N >= 1 and m >= 1")
    hist = Counter()
    for tup in itertools.product(range(N), repeat=m):
        parts = tuple(sorted(Counter(tup).values(), reverse=True))
        hist[parts] += 1
    return dict(hist)
