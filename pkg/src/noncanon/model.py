"""Shared domain types: discretized mode sets, vacuum profiles, coherent and
current specifications, and the vacuum-weighted scalar product.

Conventions
-----------
Natural units (hbar = c = 1). Amplitude maps over (mode, helicity) are
complex arrays of shape ``(M, 2)``; column 0 is helicity ``+`` and column 1
is helicity ``-``.

The invariant measure on the light cone is ``d^3k / ((2 pi)^3 2|k|)``. For
an isotropic profile its radial reduction is ``k dk / (4 pi^2)``, so a mode
set built from a profile ``Z`` on a frequency grid carries weights
proportional to ``Z(omega) * omega * d omega``. Every weight is folded into
a single ``z_k`` with ``sum(z) == 1``; downstream code uses ``sum_k z_k``
wherever an integral over the measure weighted by ``Z`` appears.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

__all__ = [
    "Helicity",
    "ModeSet",
    "VacuumProfile",
    "FlatCutoff",
    "PowerExp",
    "Gaussian",
    "profile_from_dict",
    "CoherentSpec",
    "CurrentSpec",
    "build_mode_set",
    "z_inner_product",
    "as_amplitude_map",
]


class Helicity(enum.IntEnum):
    PLUS = 0
    MINUS = 1

    @property
    def symbol(self) -> str:
        return "+" if self is Helicity.PLUS else "-"


# ---------------------------------------------------------------------------
# vacuum profiles


class VacuumProfile:
    """Unnormalized isotropic vacuum profile ``Z(omega)``.

    Subclasses implement :meth:`__call__`. ``origin_order`` is the power with
    which ``Z`` vanishes at ``omega -> 0`` (0 when it does not vanish).
    """

    family: str = ""
    origin_order: float = 0.0

    def __call__(self, omega):
        raise NotImplementedError

    @property
    def vanishes_at_origin(self) -> bool:
        return self.origin_order > 0

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params()}


@dataclass(frozen=True)
class FlatCutoff(VacuumProfile):
    """``Z = 1`` on ``[0, K]`` and zero beyond."""

    K: float
    family = "flat-cutoff"
    origin_order = 0.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"cutoff K must be positive, got {self.K}")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.where((omega >= 0) & (omega <= self.K), 1.0, 0.0)

    def params(self):
        return {"K": self.K}


@dataclass(frozen=True)
class PowerExp(VacuumProfile):
    """``Z = omega**p * exp(-omega / scale)``."""

    p: float
    scale: float
    family = "power-exp"

    def __post_init__(self):
        if self.p < 0 or not self.scale > 0:
            raise ValueError(f"power-exp needs p >= 0 and scale > 0, got {self.p}, {self.scale}")

    @property
    def origin_order(self) -> float:  # type: ignore[override]
        return float(self.p)

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.zeros_like(omega)
        pos = omega > 0
        out[pos] = omega[pos] ** self.p * np.exp(-omega[pos] / self.scale)
        if self.p == 0:
            out[omega == 0] = 1.0
        return out

    def params(self):
        return {"p": self.p, "scale": self.scale}


@dataclass(frozen=True)
class Gaussian(VacuumProfile):
    """``Z = exp(-(omega - k0)**2 / (2 sigma**2))``."""

    k0: float
    sigma: float
    family = "gaussian"
    origin_order = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.exp(-0.5 * ((omega - self.k0) / self.sigma) ** 2)

    def params(self):
        return {"k0": self.k0, "sigma": self.sigma}


_FAMILIES = {"flat-cutoff": FlatCutoff, "power-exp": PowerExp, "gaussian": Gaussian}


def profile_from_dict(d: Mapping[str, Any]) -> VacuumProfile:
    d = dict(d)
    try:
        cls = _FAMILIES[d.pop("family")]
    except KeyError as exc:
        raise ValueError(f"unknown or missing profile family: {exc}") from None
    return cls(**d)


# ---------------------------------------------------------------------------
# mode sets


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModeSet:
    """Discrete quadrature of the photon continuum.

    ``omega`` must be positive and strictly increasing; ``z`` is rescaled so
    that it sums to one.
    """

    omega: np.ndarray
    z: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float).ravel()
        z = np.asarray(self.z, dtype=float).ravel()
        if omega.size == 0:
            raise ValueError("a mode set needs at least one mode")
        if omega.shape != z.shape:
            raise ValueError(f"omega and z lengths differ: {omega.size} vs {z.size}")
        if not np.all(np.isfinite(omega)) or np.any(omega <= 0):
            raise ValueError("all frequencies must be finite and positive")
        if np.any(np.diff(omega) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if not np.all(np.isfinite(z)) or np.any(z < 0):
            raise ValueError("weights must be finite and nonnegative")
        total = math.fsum(z)
        if total <= 0:
            raise ValueError("weights sum to zero")
        object.__setattr__(self, "omega", _frozen(omega))
        object.__setattr__(self, "z", _frozen(z / total))
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return self.omega.size

    @property
    def M(self) -> int:
        return self.omega.size

    def to_json(self) -> str:
        doc = {
            "modes": [{"omega": float(w), "z": float(z)} for w, z in zip(self.omega, self.z)],
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModeSet":
        doc = json.loads(text)
        modes = doc["modes"]
        omega = [m["omega"] for m in modes]
        z = [m["z"] for m in modes]
        if abs(math.fsum(z) - 1.0) > 1e-12:
            raise ValueError(f"stored weights sum to {math.fsum(z)!r}, not 1")
        return cls(omega, z, doc.get("meta", {}))


def build_mode_set(profile: VacuumProfile, omega_min: float, omega_max: float, M: int) -> ModeSet:
    """Discretize ``profile`` on a uniform midpoint grid over ``[omega_min, omega_max]``.

    Cell ``i`` gets weight ``Z(omega_i) * omega_i * h``: the profile times the
    radial light-cone measure, renormalized to sum to one.
    """
    if not (omega_min > 0 and omega_max > omega_min):
        raise ValueError(f"need 0 < omega_min < omega_max, got {omega_min}, {omega_max}")
    if M < 1:
        raise ValueError(f"mode count must be >= 1, got {M}")
    h = (omega_max - omega_min) / M
    omega = omega_min + (np.arange(M) + 0.5) * h
    w = np.asarray(profile(omega), dtype=float) * omega * h
    if not np.any(w > 0):
        raise ValueError("profile vanishes on the whole grid")
    meta = {
        "grid": "midpoint-uniform",
        "measure": "k dk / (4 pi^2)",
        "omega_min": omega_min,
        "omega_max": omega_max,
        "M": M,
        "profile": profile.to_dict(),
    }
    return ModeSet(omega, w, meta)


# ---------------------------------------------------------------------------
# amplitude maps


def as_amplitude_map(f, modes: ModeSet) -> np.ndarray:
    """Coerce ``f`` to a complex ``(M, 2)`` array, validating the domain."""
    a = np.asarray(f, dtype=complex)
    if a.shape != (modes.M, 2):
        raise ValueError(f"amplitude map has shape {a.shape}, expected {(modes.M, 2)}")
    if not np.all(np.isfinite(a)):
        raise ValueError("amplitude map has non-finite entries")
    return a


def z_inner_product(f, g, modes: ModeSet) -> complex:
    """``sum_s sum_k z_k conj(f(k, s)) g(k, s)``."""
    f = as_amplitude_map(f, modes)
    g = as_amplitude_map(g, modes)
    return complex(np.sum(modes.z[:, None] * np.conj(f) * g))


@dataclass(frozen=True)
class CoherentSpec:
    """Coherent amplitudes ``alpha(k, s)``; the ``1/sqrt(N)`` scaling is applied by consumers."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=complex)
        if a.ndim != 2 or a.shape[1] != 2:
            raise ValueError(f"alpha must have shape (M, 2), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("alpha has non-finite entries")
        object.__setattr__(self, "alpha", _frozen(a))

    @classmethod
    def constant(cls, value: complex, M: int) -> "CoherentSpec":
        return cls(np.full((M, 2), value, dtype=complex))

    @classmethod
    def zero(cls, M: int) -> "CoherentSpec":
        return cls(np.zeros((M, 2), dtype=complex))

    def on(self, modes: ModeSet) -> np.ndarray:
        return as_amplitude_map(self.alpha, modes)

    def mean_number(self, modes: ModeSet) -> float:
        return z_inner_product(self.alpha, self.alpha, modes).real

    def scaled(self, c: complex) -> "CoherentSpec":
        return CoherentSpec(self.alpha * c)


@dataclass(frozen=True)
class CurrentSpec:
    """Classical current amplitudes ``j(omega, s)`` of an isotropic source.

    ``amplitude`` maps an array of frequencies to an ``(..., 2)`` complex
    array. ``ir_exponent`` declares the small-frequency power of ``|j|^2``.
    """

    amplitude: Callable[[np.ndarray], np.ndarray]
    ir_exponent: float
    label: str = ""

    @classmethod
    def soft(cls, g: float) -> "CurrentSpec":
        """Both helicities with ``|j|^2 = g^2 / omega^2``."""
        def amp(omega):
            omega = np.asarray(omega, dtype=float)
            v = g / omega
            return np.stack([v, v], axis=-1).astype(complex)

        return cls(amp, -2.0, f"soft(g={g})")

    @classmethod
    def zero(cls) -> "CurrentSpec":
        def amp(omega):
            omega = np.asarray(omega, dtype=float)
            return np.zeros(omega.shape + (2,), dtype=complex)

        return cls(amp, 0.0, "zero")

    def intensity(self, omega) -> np.ndarray:
        """``sum_s |j(omega, s)|^2``."""
        return np.sum(np.abs(self.amplitude(omega)) ** 2, axis=-1)

    def on(self, modes: ModeSet) -> np.ndarray:
        return as_amplitude_map(self.amplitude(modes.omega), modes)

    def check_ir_exponent(self, omegas=(1e-6, 1e-5, 1e-4), rtol: float = 0.05) -> bool:
        """Spot-check the declared small-omega power by a log-log slope."""
        w = np.asarray(omegas, dtype=float)
        I = self.intensity(w)
        if np.all(I == 0):
            return True
        if np.any(I <= 0):
            return False
        slope = np.polyfit(np.log(w), np.log(I), 1)[0]
        return abs(slope - self.ir_exponent) <= rtol * max(1.0, abs(self.ir_exponent))
