"""Survival amplitude of an excited two-level atom coupled to a discrete set of modes.

Canonical (regularized) amplitude ``F`` and its non-canonical counterpart
``F'`` for a fixed number ``N`` of oscillators, computed three ways:

* the Volterra integro-differential equation with kernel
  ``f_Z(tau) = sum_k z_k exp(-i Delta_k tau) / omega_k``;
* the bordered matrix ``[[0, -c^T], [c, -i diag(Delta)]]`` with
  ``c_j = sqrt(C w_j / omega_j)``, whose exponential's top-left entry is the
  amplitude (its resolvent entry is ``1 / (z + sum_j c_j^2 / (z + i Delta_j))``);
* an exact or Monte Carlo average of per-tuple amplitudes with weights ``1/N``.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from ._csvio import fmt, render
from .model import ModeSet

log = logging.getLogger(__name__)

__all__ = [
    "CouplingModel",
    "AmplitudeSeries",
    "BorderedMatrix",
    "ConvergenceError",
    "CombinatorialCapError",
    "kernel_fZ",
    "default_step",
    "step_dividing",
    "solve_volterra",
    "richardson",
    "solve_resolvent",
    "canonical_amplitude",
    "noncanonical_amplitude_exact",
    "noncanonical_amplitude_mc",
    "flat_window_modes",
    "renormalization_sweep",
]


class ConvergenceError(RuntimeError):
    """Grid refinement does not show the expected second-order behaviour."""


class CombinatorialCapError(RuntimeError):
    """Exact tuple sum too large; use the Monte Carlo estimator."""


@dataclass(frozen=True)
class CouplingModel:
    C: float
    omega0: float
    modes: ModeSet

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"coupling constant must be positive, got {self.C}")
        if not np.isfinite(self.omega0):
            raise ValueError("omega0 must be finite")

    @property
    def detunings(self) -> np.ndarray:
        return self.modes.omega - self.omega0


@dataclass(frozen=True)
class AmplitudeSeries:
    t: np.ndarray
    values: np.ndarray
    method: str
    h: float | None = None
    error_estimate: float = 0.0
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def sup_distance(self, other: "AmplitudeSeries") -> float:
        if self.t.shape != other.t.shape or not np.allclose(self.t, other.t, rtol=0, atol=1e-12):
            raise ValueError("series live on different grids")
        return float(np.max(np.abs(self.values - other.values)))

    def to_csv(self) -> str:
        header = ["t", "re", "im", "abs"]
        if self.stderr is not None:
            header.append("stderr")
        rows = []
        for i, (t, v) in enumerate(zip(self.t, self.values)):
            row = [fmt(t), fmt(v.real), fmt(v.imag), fmt(abs(v))]
            if self.stderr is not None:
                row.append(fmt(self.stderr[i]))
            rows.append(row)
        return render(header, rows)


def kernel_fZ(model: CouplingModel, tau) -> np.ndarray:
    """``sum_k z_k exp(-i Delta_k tau) / omega_k``, vectorized over ``tau``."""
    tau = np.asarray(tau, dtype=float)
    w = model.modes.z / model.modes.omega
    phase = np.exp(-1j * np.multiply.outer(tau, model.detunings))
    return phase @ w


# ---------------------------------------------------------------------------
# Volterra route


def default_step(model: CouplingModel) -> float:
    """Largest step with ``sqrt(C * max(z / omega)) * h <= 0.02``."""
    return 0.02 / math.sqrt(model.C * float(np.max(model.modes.z / model.modes.omega)))


def step_dividing(model: CouplingModel, t_max: float) -> float:
    """Largest step not above :func:`default_step` that divides ``t_max``."""
    return t_max / math.ceil(t_max / default_step(model))


def _grid(t_max: float, h: float) -> tuple[np.ndarray, int]:
    if not h > 0:
        raise ValueError("step must be positive")
    n = int(round(t_max / h))
    if abs(n * h - t_max) > 1e-9 * max(1.0, t_max):
        raise ValueError(f"t_max={t_max} is not a multiple of h={h}")
    if n > 10**6:
        raise ValueError("more than 10**6 steps requested")
    return np.arange(n + 1) * h, n


def solve_volterra(model: CouplingModel, t_max: float, h: float | None = None) -> AmplitudeSeries:
    """Solve ``F(t) = 1 - C int_0^t dt1 int_0^t1 dt2 f_Z(t1 - t2) F(t2)``.

    Uses the equivalent ``F' = -C int_0^t f_Z(t - s) F(s) ds``: trapezoid
    rule for the convolution and implicit trapezoid in time, second order
    in ``h``.
    """
    h = default_step(model) if h is None else h
    t, _ = _grid(t_max, h)
    F = kernels.volterra_trapezoid(kernel_fZ(model, t), model.C, h)
    return AmplitudeSeries(t, F, "volterra", h, meta={"backend": kernels.BACKEND})


@dataclass(frozen=True)
class RichardsonReport:
    ratio: float
    order: float
    extrapolated: AmplitudeSeries
    coarse: AmplitudeSeries


def richardson(model: CouplingModel, t_max: float, h: float | None = None, check: bool = True) -> RichardsonReport:
    """Refine ``h -> h/2 -> h/4`` and extrapolate.

    ``ratio`` is ``|F_h - F_h/2| / |F_h/2 - F_h/4|`` (sup over the coarse grid),
    4 for a second-order scheme. Outside ``[3.5, 4.5]`` raises
    :class:`ConvergenceError` when ``check`` is set. ``h=None`` uses
    :func:`step_dividing`.
    """
    h = step_dividing(model, t_max) if h is None else h
    s1 = solve_volterra(model, t_max, h)
    s2 = solve_volterra(model, t_max, h / 2)
    s4 = solve_volterra(model, t_max, h / 4)
    F1, F2, F4 = s1.values, s2.values[::2], s4.values[::4]
    d12 = float(np.max(np.abs(F1 - F2)))
    d24 = float(np.max(np.abs(F2 - F4)))
    ratio = d12 / d24 if d24 > 0 else math.inf
    order = math.log2(ratio) if ratio > 0 else -math.inf
    if check and not 3.5 <= ratio <= 4.5:
        raise ConvergenceError(f"refinement ratio {ratio:.3f} outside [3.5, 4.5]")
    extrap = (4 * F4 - F2) / 3
    est = float(np.max(np.abs(extrap - (4 * F2 - F1) / 3)))
    series = AmplitudeSeries(s1.t, extrap, "volterra-richardson", h, est, meta={"backend": kernels.BACKEND})
    return RichardsonReport(ratio, order, series, s1)


# ---------------------------------------------------------------------------
# resolvent route


@dataclass(frozen=True)
class BorderedMatrix:
    couplings: np.ndarray
    detunings: np.ndarray

    def matrix(self) -> np.ndarray:
        c = np.asarray(self.couplings, dtype=float)
        n = c.size
        M = np.zeros((n + 1, n + 1), dtype=complex)
        M[0, 1:] = -c
        M[1:, 0] = c
        M[1:, 1:] = np.diag(-1j * np.asarray(self.detunings, dtype=float))
        return M

    def hermitian(self) -> np.ndarray:
        """``i M``; ``exp(M t) = exp(-i (i M) t)``."""
        return 1j * self.matrix()

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix())

    def max_real_part(self) -> float:
        """Largest ``|Re|`` of the poles relative to the matrix norm."""
        M = self.matrix()
        return float(np.max(np.abs(self.poles().real)) / max(np.linalg.norm(M, 2), 1e-300))


def _couplings(C: float, omegas: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.sqrt(C * weights / omegas)


def _hermitian_batch(c: np.ndarray, delta: np.ndarray) -> np.ndarray:
    B, n = c.shape
    H = np.zeros((B, n + 1, n + 1), dtype=complex)
    H[:, 0, 1:] = -1j * c
    H[:, 1:, 0] = 1j * c
    idx = np.arange(1, n + 1)
    H[:, idx, idx] = delta
    return H


def _amplitudes_batch(c: np.ndarray, delta: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Top-left entry of ``exp(M t)`` for a batch of bordered matrices, shape ``(B, T)``."""
    H = _hermitian_batch(c, delta)
    lam, V = np.linalg.eigh(H)
    w = np.abs(V[:, 0, :]) ** 2
    return np.einsum("bn,bnt->bt", w, np.exp(-1j * lam[:, :, None] * t[None, None, :]))


def solve_resolvent(C: float, omegas, weights, t, omega0: float) -> AmplitudeSeries:
    """Amplitude for couplings ``c_j = sqrt(C w_j / omega_j)`` and detunings ``omega_j - omega0``.

    Eigendecomposition of the Hermitian ``i M`` gives
    ``F(t) = sum_n |V_0n|^2 exp(-i lambda_n t)``, so ``|F| <= 1`` holds
    structurally. Falls back to ``scipy.linalg.expm`` if the eigensolver fails.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    t = np.asarray(t, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if np.any(omegas <= 0):
        raise ValueError("frequencies must be positive")
    c = _couplings(C, omegas, weights)
    delta = omegas - omega0
    method = "resolvent-eigh"
    try:
        F = _amplitudes_batch(c[None, :], delta[None, :], t)[0]
    except np.linalg.LinAlgError:
        log.warning("eigendecomposition failed; using scaling-and-squaring exponential")
        M = BorderedMatrix(c, delta).matrix()
        F = np.array([scipy.linalg.expm(M * ti)[0, 0] for ti in t])
        method = "resolvent-expm"
    return AmplitudeSeries(t, F, method)


def canonical_amplitude(model: CouplingModel, t) -> AmplitudeSeries:
    """Regularized canonical amplitude: resolvent with weights ``z_k`` over all modes."""
    s = solve_resolvent(model.C, model.modes.omega, model.modes.z, t, model.omega0)
    return AmplitudeSeries(s.t, s.values, "canonical-" + s.method)


# ---------------------------------------------------------------------------
# non-canonical amplitude for N oscillators


def noncanonical_amplitude_exact(model: CouplingModel, N: int, t, cap: int = 10**6, batch: int = 2048) -> AmplitudeSeries:
    """Average of per-tuple amplitudes over all ``M**N`` frequency tuples weighted by ``prod z``.

    The per-tuple amplitude is symmetric in the tuple, so tuples are grouped
    by multiset with multinomial multiplicities.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    M = model.modes.M
    if M**N > cap:
        raise CombinatorialCapError(f"M**N = {M}**{N} exceeds {cap}; use noncanonical_amplitude_mc")
    t = np.asarray(t, dtype=float)
    omega, z = model.modes.omega, model.modes.z
    multisets = list(itertools.combinations_with_replacement(range(M), N))
    total = np.zeros(t.size, dtype=complex)
    for start in range(0, len(multisets), batch):
        chunk = np.array(multisets[start:start + batch])
        weight = np.empty(len(chunk))
        for i, ms in enumerate(chunk):
            counts = np.bincount(ms, minlength=M)
            mult = math.factorial(N)
            for c in counts:
                mult //= math.factorial(int(c))
            weight[i] = mult * np.prod(z ** counts)
        om = omega[chunk]
        c = _couplings(model.C, om, np.full(om.shape, 1.0 / N))
        amps = _amplitudes_batch(c, om - model.omega0, t)
        total += weight @ amps
    return AmplitudeSeries(t, total, "noncanonical-exact", meta={"N": N, "tuples": M**N})


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("NONCANON_THREADS")
    return max(1, int(env)) if env else 1


def _tree_sum(parts: list) -> np.ndarray:
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def noncanonical_amplitude_mc(
    model: CouplingModel,
    N: int,
    samples: int,
    seed: int,
    t,
    workers: int | None = None,
    chunk: int = 500,
) -> AmplitudeSeries:
    """Monte Carlo estimate of ``F'_N(t)`` with per-``t`` standard errors.

    Frequency tuples are drawn i.i.d. from ``z``. Samples are split into
    fixed-size chunks; chunk ``i`` draws from the stream
    ``SeedSequence(seed, spawn_key=(N, i))`` and chunk sums are combined by
    a pairwise tree in chunk order, so the result depends only on
    ``(seed, samples, chunk)`` and not on the worker count.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    if N < 1:
        raise ValueError("N must be >= 1")
    t = np.asarray(t, dtype=float)
    omega, z = model.modes.omega, model.modes.z
    sizes = [chunk] * (samples // chunk) + ([samples % chunk] if samples % chunk else [])

    def run(i: int):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(N, i))))
        idx = rng.choice(omega.size, size=(sizes[i], N), p=z)
        om = omega[idx]
        c = _couplings(model.C, om, np.full(om.shape, 1.0 / N))
        amps = _amplitudes_batch(c, om - model.omega0, t)
        return np.stack([amps.sum(axis=0), (amps.real**2).sum(axis=0) + 1j * (amps.imag**2).sum(axis=0)])

    n_workers = _worker_count(workers)
    t0 = time.perf_counter()
    if n_workers == 1:
        parts = [run(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    total = _tree_sum(parts)
    mean = total[0] / samples
    var_re = (total[1].real - samples * mean.real**2) / (samples - 1)
    var_im = (total[1].imag - samples * mean.imag**2) / (samples - 1)
    stderr = np.sqrt(np.maximum(var_re + var_im, 0.0) / samples)
    meta = {"N": N, "samples": samples, "seed": seed, "chunk": chunk, "wall_time": time.perf_counter() - t0}
    return AmplitudeSeries(t, mean, "noncanonical-mc", stderr=stderr, error_estimate=float(stderr.max()), meta=meta)


# ---------------------------------------------------------------------------
# coupling renormalization


def flat_window_modes(lam1: float, width: float, spacing: float) -> ModeSet:
    """Equally spaced cavity modes filling ``[lam1, lam1 + width]`` with a flat profile.

    ``width < spacing`` gives a single mode at ``lam1``.
    """
    n = max(1, int(round(width / spacing)))
    omega = lam1 + spacing * (np.arange(n) + 0.5) if width >= spacing else np.array([lam1])
    return ModeSet(omega, np.ones(n), {"grid": "flat-window", "lam1": lam1, "width": width, "spacing": spacing})


@dataclass(frozen=True)
class SweepReport:
    widths: list
    plateau: list
    couplings: list
    amplitudes: list
    drifts: list

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.drifts, self.drifts[1:]))


def renormalization_sweep(
    omega0: float,
    lam1: float,
    width: float,
    spacing: float,
    coupling_times_plateau: float,
    t,
    doublings: int = 3,
) -> SweepReport:
    """Widen a flat window of modes while holding ``C * Z`` fixed.

    Each doubling halves the plateau ``Z = 1/n`` and doubles ``C``; ``drifts``
    lists ``sup_t |F_i - F_{i-1}|`` along the sequence.
    """
    t = np.asarray(t, dtype=float)
    widths, plateau, couplings, amps = [], [], [], []
    for i in range(doublings + 1):
        w = width * 2**i
        modes = flat_window_modes(lam1, w, spacing)
        Z = float(modes.z[0])
        C = coupling_times_plateau / Z
        amps.append(canonical_amplitude(CouplingModel(C, omega0, modes), t))
        widths.append(w)
        plateau.append(Z)
        couplings.append(C)
    drifts = [a.sup_distance(b) for a, b in zip(amps, amps[1:])]
    return SweepReport(widths, plateau, couplings, amps, drifts)
