"""Vacuum-smeared commutator function and radiation-field observables.

Isotropic profiles only. With the invariant measure
``dGamma = d^3k / ((2 pi)^3 2|k|)`` an isotropic integrand reduces to
``int_0^inf dk k / (4 pi^2) (...)`` after the angular integral, and

    D_Z(t, r) = 2 int dGamma Z(k) sin(|k| t - k.x)
              = 1 / (2 pi^2 r) int_0^inf Z(k) sin(k r) sin(k t) dk.

:class:`RadialProfile` owns the normalization ``int dGamma Z = 1``; every
integral below goes through :meth:`RadialProfile.z`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.special

from ._csvio import fmt, render
from .model import CurrentSpec, FlatCutoff, Gaussian, PowerExp, VacuumProfile

__all__ = [
    "QuadratureError",
    "FlatLandscapeError",
    "DivergenceError",
    "RadialProfile",
    "SpacetimePoint",
    "QuadratureResult",
    "panel_quadrature",
    "d_z",
    "d_z_quad",
    "d_z_flat_closed_form",
    "d_z_monte_carlo",
    "brute_force_d_z",
    "coincidence_value",
    "equal_time_commutator_check",
    "LightConeReport",
    "lightcone_deviation",
    "radiated_photon_number",
    "IRSweep",
    "ir_sweep",
    "cauchy_limit",
    "radiated_four_momentum",
    "d_z_csv",
    "ir_sweep_csv",
]

FOUR_PI2 = 4.0 * math.pi**2
_GL = {n: np.polynomial.legendre.leggauss(n) for n in (12, 20)}


class QuadratureError(RuntimeError):
    def __init__(self, msg: str, error_bound: float):
        super().__init__(f"{msg} (achieved error bound {error_bound:.3e})")
        self.error_bound = error_bound


class FlatLandscapeError(RuntimeError):
    """No peak of ``|D_Z|`` above the noise floor."""


class DivergenceError(ValueError):
    def __init__(self, msg: str, fit: "IRSweep | None" = None):
        super().__init__(msg)
        self.fit = fit


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    r: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"radial separation must be nonnegative, got {self.r}")


# ---------------------------------------------------------------------------
# normalization


def _gaussian_first_moment(k0: float, sigma: float, k: float = 0.0) -> float:
    """``int_k^inf x exp(-(x - k0)^2 / (2 sigma^2)) dx``."""
    u = (k - k0) / sigma
    return sigma**2 * math.exp(-0.5 * u * u) + k0 * sigma * math.sqrt(math.pi / 2) * math.erfc(u / math.sqrt(2))


@dataclass(frozen=True)
class RadialProfile:
    """Isotropic profile normalized so that ``int_0^inf k Z(k) dk / (4 pi^2) = 1``.

    ``k_max`` truncates the integrals where the neglected normalized mass
    drops below ``tail_mass``; the flat cutoff needs no truncation.
    """

    profile: VacuumProfile
    tail_mass: float = 1e-10
    norm: float = field(init=False)
    k_max: float = field(init=False)

    def __post_init__(self):
        p = self.profile
        if isinstance(p, FlatCutoff):
            norm = p.K**2 / 2
            k_max = p.K
        elif isinstance(p, PowerExp):
            norm = p.scale ** (p.p + 2) * math.gamma(p.p + 2)
            k_max = p.scale * float(scipy.special.gammainccinv(p.p + 2, self.tail_mass))
        elif isinstance(p, Gaussian):
            norm = _gaussian_first_moment(p.k0, p.sigma)
            f = lambda u: _gaussian_first_moment(p.k0, p.sigma, p.k0 + u * p.sigma) / norm - self.tail_mass
            k_max = p.k0 + p.sigma * scipy.optimize.brentq(f, -p.k0 / p.sigma, 60.0)
            k_max = max(k_max, 1e-300)
        else:
            raise TypeError(f"unsupported profile {type(p).__name__}")
        object.__setattr__(self, "norm", norm / FOUR_PI2)
        object.__setattr__(self, "k_max", float(k_max))

    @property
    def origin_order(self) -> float:
        return self.profile.origin_order

    def z(self, k) -> np.ndarray:
        """Normalized ``Z(k)``."""
        return np.asarray(self.profile(k), dtype=float) / self.norm

    def weight(self, k) -> np.ndarray:
        """Probability density of ``|k|`` under ``dGamma Z``."""
        k = np.asarray(k, dtype=float)
        return k * self.z(k) / FOUR_PI2

    def _smooth_at_origin(self) -> bool:
        return float(self.origin_order).is_integer()

    def to_dict(self) -> dict:
        return {**self.profile.to_dict(), "k_max": self.k_max, "tail_mass": self.tail_mass}


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureResult:
    value: np.ndarray
    error: float
    panels: int
    nodes: int


def _panel_edges(a: float, b: float, max_width: float, grade_from: float | None) -> np.ndarray:
    n = max(1, math.ceil((b - a) / max_width))
    edges = np.linspace(a, b, n + 1)
    if grade_from is not None and edges[1] > grade_from:
        # geometric grading towards the lower limit
        first = edges[1]
        levels = max(0, math.ceil(math.log2((first - a) / max(grade_from, 1e-300))))
        graded = a + (first - a) * 2.0 ** -np.arange(min(levels, 60), 0, -1)
        edges = np.concatenate([[a], graded, edges[1:]])
    return edges


def _fixed(g, edges: np.ndarray, order: int) -> np.ndarray:
    x, w = _GL[order]
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    k = (lo + half * (x[None, :] + 1)).ravel()
    ww = (half * w[None, :]).ravel()
    return g(k) @ ww


def panel_quadrature(g, a: float, b: float, max_width: float, *, rtol: float = 1e-12, atol: float = 1e-14,
                     grade_from: float | None = None, max_levels: int = 8, check: bool = True) -> QuadratureResult:
    """Composite Gauss-Legendre over panels no wider than ``max_width``.

    ``g`` maps a 1-D node array to ``(..., nodes)``. The error estimate is the
    difference between 20- and 12-point rules on the same panels; panels are
    bisected until it falls below ``max(atol, rtol * |value|)``.
    """
    if not b > a:
        z = np.asarray(g(np.array([a])))[..., 0] * 0.0
        return QuadratureResult(z, 0.0, 0, 0)
    edges = _panel_edges(a, b, max_width, grade_from)
    err = math.inf
    for _ in range(max_levels):
        hi = _fixed(g, edges, 20)
        lo = _fixed(g, edges, 12)
        err = float(np.max(np.abs(hi - lo)))
        if err <= max(atol, rtol * float(np.max(np.abs(hi)))):
            return QuadratureResult(hi, err, edges.size - 1, 20 * (edges.size - 1))
        mid = 0.5 * (edges[:-1] + edges[1:])
        edges = np.sort(np.concatenate([edges, mid]))
    if check:
        raise QuadratureError("panel quadrature did not converge", err)
    return QuadratureResult(hi, err, edges.size - 1, 20 * (edges.size - 1))


def _grade(rp: RadialProfile) -> float | None:
    return None if rp._smooth_at_origin() else 1e-14 * rp.k_max


# ---------------------------------------------------------------------------
# D_Z


def d_z_quad(rp: RadialProfile, t, r: float, chunk: int = 256) -> QuadratureResult:
    """``D_Z(t, r)`` over an array of times at fixed ``r``, with error bound."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.size)
    err, panels, nodes = 0.0, 0, 0
    for s in range(0, t.size, chunk):
        tt = t[s:s + chunk]
        rate = float(np.max(np.abs(tt))) + r
        width = rp.k_max if rate == 0 else min(rp.k_max, 1.5 * math.pi / rate)
        if r > 0:
            g = lambda k: rp.z(k)[None, :] * np.sin(k * r)[None, :] * np.sin(np.outer(tt, k)) / (2 * math.pi**2 * r)
        else:
            g = lambda k: (k * rp.z(k))[None, :] * np.sin(np.outer(tt, k)) / (2 * math.pi**2)
        res = panel_quadrature(g, 0.0, rp.k_max, width, grade_from=_grade(rp))
        out[s:s + chunk] = res.value
        err = max(err, res.error)
        panels, nodes = max(panels, res.panels), max(nodes, res.nodes)
    return QuadratureResult(out, err, panels, nodes)


def d_z(rp: RadialProfile, p: SpacetimePoint | tuple) -> float:
    """Smeared commutator function at a single point; ``r = 0`` uses the limit ``sin(kr)/r -> k``."""
    if not isinstance(p, SpacetimePoint):
        p = SpacetimePoint(*p)
    return float(d_z_quad(rp, [p.t], p.r).value[0])


def d_z_flat_closed_form(K: float, t, r: float) -> np.ndarray:
    """Closed form for the flat cutoff: ``(Z / (4 pi^2 r)) [S(r - t) - S(r + t)]`` with ``S(u) = sin(K u) / u``."""
    t = np.asarray(t, dtype=float)
    Z = 8 * math.pi**2 / K**2
    S = lambda u: K * np.sinc(K * u / math.pi)
    return Z / (FOUR_PI2 * r) * (S(r - t) - S(r + t))


def brute_force_d_z(rp: RadialProfile, t: float, r: float, n: int = 400_001) -> float:
    """Slow fine-grid Simpson oracle for ``D_Z``."""
    k = np.linspace(0.0, rp.k_max, n)
    f = rp.z(k) * np.sin(k * r) * np.sin(k * t) / (2 * math.pi**2 * r)
    return float(scipy.integrate.simpson(f, x=k))


def _radial_sampler(rp: RadialProfile, n_grid: int = 200_001):
    k = np.linspace(0.0, rp.k_max, n_grid)
    cdf = scipy.integrate.cumulative_trapezoid(rp.weight(k), k, initial=0.0)
    cdf /= cdf[-1]
    return lambda u: np.interp(u, cdf, k)


def d_z_monte_carlo(rp: RadialProfile, t: float, r: float, samples: int, seed: int) -> tuple[float, float]:
    """Direct 3-D estimate ``2 E[sin(|k| t - |k| r cos(theta))]`` with ``|k|`` drawn from the
    normalized radial weight and an isotropic direction. Returns (mean, stderr)."""
    rng = np.random.default_rng(seed)
    kk = _radial_sampler(rp)(rng.random(samples))
    c = rng.uniform(-1.0, 1.0, samples)
    vals = 2.0 * np.sin(kk * t - kk * r * c)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def coincidence_value(rp: RadialProfile) -> float:
    """UV scalar product at coinciding points, ``2 int dGamma Z``, by quadrature."""
    res = panel_quadrature(lambda k: rp.weight(k), 0.0, rp.k_max, rp.k_max / 16, grade_from=_grade(rp))
    return 2.0 * float(res.value)


def equal_time_commutator_check(rp: RadialProfile, r: float) -> float:
    """``|D_Z(0, r)|``; the scalar part of the equal-time commutator."""
    return abs(d_z(rp, SpacetimePoint(0.0, r)))


# ---------------------------------------------------------------------------
# light cone


@dataclass(frozen=True)
class LightConeReport:
    r: float
    peak_time: float
    peak_value: float
    width: float
    ambiguous: bool
    secondary_ratio: float


def _half_crossing(f, t0: float, half: float, step: float, lo: float, hi: float, direction: int) -> float:
    a = t0
    while True:
        b = min(max(a + direction * step, lo), hi)
        if f(b) < half:
            return scipy.optimize.brentq(lambda x: f(x) - half, min(a, b), max(a, b), xtol=1e-13)
        if b in (lo, hi):
            return b
        a = b


def lightcone_deviation(rp: RadialProfile, r: float, n_scan: int = 4001, floor: float = 1e-12) -> LightConeReport:
    """Peak of ``|D_Z(t, r)|`` over ``t in [0, 2r]`` and its full width at half maximum.

    ``ambiguous`` is set when another local maximum outside the half-maximum
    interval reaches 80% of the peak.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    t = np.linspace(0.0, 2 * r, n_scan)
    a = np.abs(d_z_quad(rp, t, r).value)
    i = int(np.argmax(a))
    if a[i] <= floor:
        raise FlatLandscapeError(f"max |D_Z| = {a[i]:.3e} below noise floor {floor:.1e}")
    dt = t[1] - t[0]
    f = lambda x: abs(d_z(rp, SpacetimePoint(x, r)))
    lo, hi = max(0.0, t[i] - dt), min(2 * r, t[i] + dt)
    opt = scipy.optimize.minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    tp, peak = (float(opt.x), -float(opt.fun)) if -opt.fun >= a[i] else (float(t[i]), float(a[i]))
    step = dt / 4
    left = _half_crossing(f, tp, peak / 2, step, 0.0, 2 * r, -1)
    right = _half_crossing(f, tp, peak / 2, step, 0.0, 2 * r, +1)
    inner = (a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:])
    maxima = np.flatnonzero(inner) + 1
    outside = maxima[(t[maxima] < left) | (t[maxima] > right)]
    second = float(a[outside].max() / peak) if outside.size else 0.0
    return LightConeReport(r, tp, peak, right - left, second >= 0.8, second)


# ---------------------------------------------------------------------------
# radiation


def _n_integrand(rp: RadialProfile, current: CurrentSpec, extra_power: int):
    return lambda k: k ** (1 + extra_power) * rp.z(k) * current.intensity(k) / FOUR_PI2


def _diverges(rp: RadialProfile, current: CurrentSpec, extra_power: int = 0) -> bool:
    return 1 + extra_power + current.ir_exponent + rp.origin_order <= -1


def _radial_observable(rp, current, ir_cutoff, extra_power) -> QuadratureResult:
    g = _n_integrand(rp, current, extra_power)
    lower = max(ir_cutoff, 0.0)
    grade = max(lower, 1e-14 * rp.k_max) if lower == 0 else lower
    if lower == 0:
        # start at a tiny positive node; the integrable remainder is below the tail tolerance
        lower = 1e-300
    return panel_quadrature(g, lower, rp.k_max, rp.k_max / 16, grade_from=grade, atol=1e-15, rtol=1e-13)


def radiated_photon_number(rp: RadialProfile, current: CurrentSpec, ir_cutoff: float = 0.0) -> float:
    """``sum_s int_{k > eps} dGamma Z |j|^2``.

    Refuses ``ir_cutoff == 0`` when the integrand behaves like ``k^q`` with
    ``q <= -1`` at the origin, and attaches the logarithmic fit.
    """
    if ir_cutoff < 0:
        raise ValueError("ir_cutoff must be nonnegative")
    if ir_cutoff == 0 and _diverges(rp, current):
        fit = ir_sweep(rp, current)
        raise DivergenceError(
            f"photon number diverges at zero cutoff: n(eps) ~ {fit.slope:.6g} ln(1/eps) + {fit.intercept:.6g}", fit)
    return float(_radial_observable(rp, current, ir_cutoff, 0).value)


@dataclass(frozen=True)
class IRSweep:
    eps: np.ndarray
    n: np.ndarray
    slope: float
    intercept: float
    r_squared: float


def ir_sweep(rp: RadialProfile, current: CurrentSpec, eps=None) -> IRSweep:
    """``<n>(eps)`` over ``eps`` (default 25 log-spaced points in ``[1e-6, 1e-2]``) and a fit ``a ln(1/eps) + b``."""
    eps = np.logspace(-6, -2, 25) if eps is None else np.asarray(eps, dtype=float)
    n = np.array([float(_radial_observable(rp, current, e, 0).value) for e in eps])
    x = np.log(1 / eps)
    a, b = np.polyfit(x, n, 1)
    resid = n - (a * x + b)
    ss = float(np.sum((n - n.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return IRSweep(eps, n, float(a), float(b), r2)


def cauchy_limit(rp: RadialProfile, current: CurrentSpec, eps0: float = 1e-2, tol: float = 1e-9,
                 max_halvings: int = 80) -> tuple[float, list]:
    """Halve ``eps`` from ``eps0`` until successive ``<n>(eps)`` differ by less than ``tol``.

    Returns the last value and the sequence of ``(eps, n)``; raises
    :class:`DivergenceError` if no convergence within ``max_halvings``.
    """
    eps = eps0
    seq = [(eps, radiated_photon_number(rp, current, eps))]
    for _ in range(max_halvings):
        eps /= 2
        seq.append((eps, radiated_photon_number(rp, current, eps)))
        if abs(seq[-1][1] - seq[-2][1]) < tol:
            return seq[-1][1], seq
    raise DivergenceError(f"no Cauchy convergence after {max_halvings} halvings")


def radiated_four_momentum(rp: RadialProfile, current: CurrentSpec, ir_cutoff: float = 0.0) -> tuple[float, float]:
    """Energy ``sum_s int dGamma k Z |j|^2`` and the momentum magnitude.

    For an isotropic current the momentum integrand carries ``cos(theta)``;
    its angular average is evaluated by Gauss-Legendre.
    """
    if ir_cutoff == 0 and _diverges(rp, current, 1):
        raise DivergenceError("radiated energy diverges at zero cutoff")
    energy = float(_radial_observable(rp, current, ir_cutoff, 1).value)
    x, w = _GL[20]
    angular = abs(float(np.dot(w, x))) / 2
    return energy, energy * angular


# ---------------------------------------------------------------------------
# CSV


def d_z_csv(t, r: float, values) -> str:
    return render(["t", "r", "D_Z"], [[fmt(a), fmt(r), fmt(v)] for a, v in zip(t, values)])


def ir_sweep_csv(sweep: IRSweep) -> str:
    return render(["eps", "n"], [[fmt(e), fmt(v)] for e, v in zip(sweep.eps, sweep.n)])
