"""Coincidence classes over N oscillators and excitation statistics of
multi-oscillator coherent states.

Two related counting problems live here:

* ordered index tuples ``(A, ..., Z)`` in ``{1..N}^m`` classified by which
  coordinates coincide (vacuum averages of products of lifted projectors);
* non-decreasing tuples ``1 <= j_1 <= ... <= j_m <= N`` describing how ``m``
  excitations are shared among ``N`` oscillators.

Both are classified by integer partitions of ``m``. Probabilities are exact
``Fraction`` values.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Mapping

import numpy as np

from ._csvio import fmt, render
from .model import CoherentSpec, ModeSet

log = logging.getLogger(__name__)

__all__ = [
    "CoincidenceClass",
    "ClassProbabilityTable",
    "ExcitationDistribution",
    "integer_partitions",
    "set_partitions",
    "set_partition_type",
    "count_occupancy",
    "class_probabilities",
    "averaged_class_probabilities",
    "single_oscillator_distribution",
    "excitation_distribution",
    "boundary_conditional",
    "poisson_pmf",
    "total_variation",
    "bernoulli_parameter",
    "class_table_csv",
    "coincidence_csv",
    "distribution_csv",
]

GUARD_BAND = 8


@dataclass(frozen=True, order=True)
class CoincidenceClass:
    """Integer partition ``n_1 >= ... >= n_k >= 1``."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if not parts or any(p < 1 for p in parts):
            raise ValueError(f"invalid partition {self.parts!r}")
        if any(a < b for a, b in zip(parts, parts[1:])):
            raise ValueError(f"partition must be non-increasing: {self.parts!r}")
        object.__setattr__(self, "parts", parts)

    @property
    def m(self) -> int:
        return sum(self.parts)

    @property
    def k(self) -> int:
        return len(self.parts)

    @property
    def coincidences(self) -> int:
        """``j = m - k``: how many coordinates repeat an earlier one."""
        return self.m - self.k

    def multiplicities(self) -> Counter:
        return Counter(self.parts)

    def __str__(self):
        return "(" + ",".join(map(str, self.parts)) + ")"


def _as_class(partition) -> CoincidenceClass:
    if isinstance(partition, CoincidenceClass):
        return partition
    return CoincidenceClass(tuple(partition))


def integer_partitions(m: int) -> list[CoincidenceClass]:
    """All partitions of ``m`` in lexicographic order of their part tuples."""
    if m < 1:
        raise ValueError("m must be >= 1")

    def gen(n, largest):
        if n == 0:
            yield ()
            return
        for p in range(min(n, largest), 0, -1):
            for rest in gen(n - p, p):
                yield (p,) + rest

    return sorted(CoincidenceClass(p) for p in gen(m, m))


def set_partitions(m: int) -> Iterator[list[list[int]]]:
    """Set partitions of ``{0..m-1}`` as lists of blocks (restricted growth order)."""
    if m == 0:
        yield []
        return

    def rec(i, blocks):
        if i == m:
            yield [list(b) for b in blocks]
            return
        for b in blocks:
            b.append(i)
            yield from rec(i + 1, blocks)
            b.pop()
        blocks.append([i])
        yield from rec(i + 1, blocks)
        blocks.pop()

    yield from rec(0, [])


def set_partition_type(blocks) -> CoincidenceClass:
    return CoincidenceClass(tuple(sorted((len(b) for b in blocks), reverse=True)))


def _falling(N: int, k: int) -> int:
    return math.perm(N, k) if k <= N else 0


def _multiset_arrangements(cls: CoincidenceClass) -> int:
    """``k! / prod_v mult_v!``: distinct orderings of the part values."""
    out = math.factorial(cls.k)
    for mult in cls.multiplicities().values():
        out //= math.factorial(mult)
    return out


@lru_cache(maxsize=None)
def _set_partitions_of_type(parts: tuple) -> int:
    """Number of set partitions of ``{1..m}`` with block sizes ``parts``."""
    cls = CoincidenceClass(parts)
    out = math.factorial(cls.m)
    for p in parts:
        out //= math.factorial(p)
    for mult in cls.multiplicities().values():
        out //= math.factorial(mult)
    return out


def count_occupancy(N: int, partition) -> int:
    """Number of non-decreasing ``m``-tuples over ``N`` oscillators with occupation pattern ``partition``.

    Equals ``binomial(N, k)`` choices of the excited oscillators times the
    distinct assignments of the part values to them.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    cls = _as_class(partition)
    return math.comb(N, cls.k) * _multiset_arrangements(cls)


# ---------------------------------------------------------------------------
# ordered-tuple coincidence classes


@dataclass(frozen=True)
class ClassProbabilityTable:
    """Coincidence-class distribution of ordered ``m``-tuples.

    ``entries`` maps each partition to ``(count, probability)``. For averaged
    tables ``N`` is ``None``, counts are ``None`` and ``weights`` records the
    oscillator-number distribution.
    """

    N: int | None
    m: int
    entries: dict
    weights: dict = field(default_factory=dict)

    def probability(self, partition) -> Fraction:
        return self.entries[_as_class(partition)][1]

    def all_distinct(self) -> Fraction:
        return self.probability((1,) * self.m)

    def by_coincidences(self) -> dict[int, Fraction]:
        """Coarse grouping: ``j = m - (number of distinct coordinates)`` to total probability."""
        out: dict[int, Fraction] = {}
        for cls, (_, p) in self.entries.items():
            out[cls.coincidences] = out.get(cls.coincidences, 0) + p
        return dict(sorted(out.items()))

    def total(self):
        return sum(p for _, p in self.entries.values())


def class_probabilities(N: int, m: int) -> ClassProbabilityTable:
    """Exact distribution of coincidence classes over the ``N**m`` ordered tuples.

    A class with ``k`` blocks collects ``S(type) * N (N-1) ... (N-k+1)`` tuples,
    ``S(type)`` being the number of set partitions of the positions with those
    block sizes.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if N < 1:
        raise ValueError("N must be >= 1")
    total = N**m
    entries = {}
    for cls in integer_partitions(m):
        count = _set_partitions_of_type(cls.parts) * _falling(N, cls.k)
        entries[cls] = (count, Fraction(count, total))
    return ClassProbabilityTable(N, m, entries)


def averaged_class_probabilities(p: Mapping[int, object], m: int) -> ClassProbabilityTable:
    """Class probabilities averaged over an oscillator-number distribution ``p``.

    Every class probability is a polynomial in ``1/N``, so averaging replaces
    the powers ``1/N**j`` by the moments ``sum_N p_N / N**j``.
    """
    if not p:
        raise ValueError("empty oscillator-number distribution")
    exact = all(isinstance(v, (int, Fraction)) for v in p.values())
    total = sum(p.values()) if exact else math.fsum(float(v) for v in p.values())
    if (exact and total != 1) or (not exact and abs(total - 1.0) > 1e-12):
        raise ValueError(f"oscillator-number probabilities sum to {total}, not 1")
    acc: dict = {cls: 0 for cls in integer_partitions(m)}
    for N, pN in sorted(p.items()):
        if pN == 0:
            continue
        table = class_probabilities(int(N), m)
        for cls, (_, prob) in table.entries.items():
            acc[cls] += (Fraction(pN) if exact else float(pN)) * (prob if exact else float(prob))
    entries = {cls: (None, v) for cls, v in acc.items()}
    return ClassProbabilityTable(None, m, entries, weights=dict(p))


def inverse_moment(p: Mapping[int, object], j: int):
    """``<1/N**j> = sum_N p_N / N**j``."""
    return sum(Fraction(v) / Fraction(N) ** j for N, v in p.items())


# ---------------------------------------------------------------------------
# excitation statistics


def poisson_pmf(lam: float, n_max: int) -> np.ndarray:
    """Poisson probabilities for ``n = 0..n_max``, built by the stable recurrence."""
    out = np.empty(n_max + 1)
    out[0] = math.exp(-lam)
    for n in range(1, n_max + 1):
        out[n] = out[n - 1] * lam / n
    return out


def single_oscillator_distribution(modes: ModeSet, alpha: CoherentSpec, N: int, n_max: int) -> np.ndarray:
    """Excitation-number distribution of one oscillator in the scaled coherent state.

    Mixture over modes of Poisson laws with ``lambda_k = sum_s |alpha(k,s)|^2 / N``.
    """
    a = alpha.on(modes)
    lam = np.sum(np.abs(a) ** 2, axis=1) / N
    q = np.zeros(n_max + 1)
    for zk, lk in zip(modes.z, lam):
        q += zk * poisson_pmf(float(lk), n_max)
    return q


def _poly_mul(a: np.ndarray, b: np.ndarray, L: int) -> np.ndarray:
    return np.convolve(a, b)[: L + 1]


def _poly_pow(q: np.ndarray, N: int, L: int) -> np.ndarray:
    result = np.zeros(L + 1)
    result[0] = 1.0
    base = q[: L + 1].copy()
    while N:
        if N & 1:
            result = _poly_mul(result, base, L)
        N >>= 1
        if N:
            base = _poly_mul(base, base, L)
    return result


@dataclass(frozen=True)
class ExcitationDistribution:
    """``P(m excitations)`` for ``m = 0..m_max`` with the mass left beyond ``m_max``."""

    probabilities: np.ndarray
    N: int
    tail_mass: float

    @property
    def m_max(self) -> int:
        return self.probabilities.size - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probabilities.size), self.probabilities))


def excitation_distribution(modes: ModeSet, alpha: CoherentSpec, N: int, m_max: int) -> ExcitationDistribution:
    """Distribution of the total excitation number of ``N`` independent oscillators.

    The per-oscillator generating polynomial is truncated at degree
    ``m_max + GUARD_BAND`` and raised to the ``N``-th power by repeated
    squaring; truncation only drops terms of degree above the kept range,
    so the first ``m_max + 1`` coefficients are exact.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    L = m_max + GUARD_BAND
    q = single_oscillator_distribution(modes, alpha, N, L)
    P = _poly_pow(q, N, L)[: m_max + 1]
    tail = max(0.0, 1.0 - math.fsum(P))
    if tail > 1e-9:
        log.warning("m_max=%d leaves tail mass %.3g outside the distribution", m_max, tail)
    P.setflags(write=False)
    return ExcitationDistribution(P, N, tail)


def total_variation(P: np.ndarray, Q: np.ndarray, tail_P: float = 0.0, tail_Q: float = 0.0) -> float:
    """Total-variation distance; tails are treated as one extra lumped outcome."""
    return 0.5 * (float(np.sum(np.abs(np.asarray(P) - np.asarray(Q)))) + abs(tail_P - tail_Q))


def boundary_conditional(modes: ModeSet, alpha: CoherentSpec, N: int, m: int) -> float:
    """Probability that some oscillator holds two or more excitations, given ``m`` in total.

    ``1 - binomial(N, m) q1**m q0**(N-m) / P(X_m)``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if m < 2:
        raise ValueError("m must be >= 2")
    q = single_oscillator_distribution(modes, alpha, N, m)
    P_m = _poly_pow(q, N, m)[m]
    if P_m <= 0:
        raise ZeroDivisionError(f"P(X_{m}) vanishes; the conditional probability is undefined")
    if N < m:
        return 1.0
    interior = math.comb(N, m) * q[1] ** m * q[0] ** (N - m)
    return float(min(1.0, max(0.0, 1.0 - interior / P_m)))


def bernoulli_parameter(alpha_sq: float, N: int) -> float:
    """Success probability of the two-level reduction, ``p1 / (p0 + p1)``."""
    x = alpha_sq / N
    return x / (1.0 + x)


# ---------------------------------------------------------------------------
# CSV emitters


def class_table_csv(table: ClassProbabilityTable) -> str:
    """Columns: partition, count, probability (float) and the exact rational."""
    rows = []
    for cls in sorted(table.entries):
        count, p = table.entries[cls]
        exact = str(p) if isinstance(p, (int, Fraction)) else ""
        rows.append([" ".join(map(str, cls.parts)), "" if count is None else count, fmt(p), exact])
    return render(["partition", "count", "probability", "exact"], rows)


def coincidence_csv(table: ClassProbabilityTable) -> str:
    rows = [[j, fmt(p), str(p) if isinstance(p, Fraction) else ""] for j, p in table.by_coincidences().items()]
    return render(["j", "probability", "exact"], rows)


def distribution_csv(dist: ExcitationDistribution) -> str:
    return render(["m", "P"], [[m, fmt(p)] for m, p in enumerate(dist.probabilities)])
