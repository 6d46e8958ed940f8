"""Truncated single- and multi-oscillator representation of the non-CCR algebra.

Single-oscillator basis ``|k, n+, n-⟩`` with ``k`` a mode index and
``n+, n- = 0..n_max``. The flat index is ``(k * (n_max+1) + n+) * (n_max+1) + n-``.
Multi-oscillator spaces are Kronecker products, oscillator 1 outermost.

Discrete transcription (kets orthonormal, all vacuum weight in amplitudes)::

    a(k, s)              P_k (x) a_s                  P_k = |k⟩⟨k|
    I_k                  P_k (x) 1
    a(f)                 sum_{k,s} conj(f(k,s)) a(k,s)
    a(f)^dagger          sum_{k,s} f(k,s) a(k,s)^dagger
    |O⟩                  sum_k sqrt(z_k) |k, 0, 0⟩
    ⟨f|g⟩_Z              sum_{k,s} z_k conj(f) g
    lifted X             N**-1/2 sum_j 1 (x) ... X_j ... (x) 1

With these, ``⟨O|a(f) a(g)^dagger|O⟩ = ⟨f|g⟩_Z`` without double counting ``z``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import eval_genlaguerre, gammaln

from .combinatorics import class_probabilities, set_partition_type, set_partitions
from .model import CoherentSpec, Helicity, ModeSet, as_amplitude_map, z_inner_product

__all__ = [
    "TruncationSpec",
    "DimensionCapError",
    "TruncationError",
    "ModeOperator",
    "StateVector",
    "single_dim",
    "basis_index",
    "annihilator",
    "creator",
    "mode_projector",
    "number_operator",
    "smeared",
    "lift",
    "commutator",
    "compressed_commutator",
    "vacuum_state",
    "coherent_state",
    "displacement_operator",
    "ProductOperator",
    "vacuum_expectation",
    "vacuum_expectation_tensor",
    "vacuum_expectation_class_sum",
    "thermodynamic_expectation",
    "permanent",
    "uv_scalar_product",
    "coherent_field_average",
]

DEFAULT_DIM_CAP = 2**22


class DimensionCapError(RuntimeError):
    """Requested multi-oscillator space exceeds the configured dimension cap."""


class TruncationError(RuntimeError):
    """Truncated state or operator loses more norm than the tolerance allows."""


@dataclass(frozen=True)
class TruncationSpec:
    n_max: int = 4
    norm_tolerance: float = 1e-8
    dim_cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.norm_tolerance <= 0:
            raise ValueError("norm_tolerance must be positive")

    def padded(self, extra: int = 1) -> "TruncationSpec":
        return TruncationSpec(self.n_max + extra, self.norm_tolerance, self.dim_cap)


def single_dim(M: int, n_max: int) -> int:
    return M * (n_max + 1) ** 2


def basis_index(k: int, n_plus: int, n_minus: int, n_max: int) -> int:
    return (k * (n_max + 1) + n_plus) * (n_max + 1) + n_minus


def _check_dim(d: int, N: int, cap: int) -> int:
    total = d**N
    if total > cap:
        raise DimensionCapError(f"dimension {d}**{N} = {total} exceeds cap {cap}")
    return total


# ---------------------------------------------------------------------------
# single-oscillator operators


@dataclass(frozen=True)
class ModeOperator:
    """Sparse operator on the truncated single-oscillator space."""

    matrix: sp.csr_matrix
    kind: str
    mode: int | None = None
    helicity: Helicity | None = None

    def adjoint(self) -> "ModeOperator":
        flip = {"annihilate": "create", "create": "annihilate"}
        return ModeOperator(self.matrix.conj().T.tocsr(), flip.get(self.kind, self.kind), self.mode, self.helicity)

    @property
    def shape(self):
        return self.matrix.shape


def _ladder(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1, format="csr")


def _mode_proj(M: int, k: int) -> sp.csr_matrix:
    return sp.csr_matrix(([1.0], ([k], [k])), shape=(M, M))


def _on_helicity(op, s: Helicity, n_max: int) -> sp.csr_matrix:
    eye = sp.identity(n_max + 1, format="csr")
    return sp.kron(op, eye, format="csr") if Helicity(s) is Helicity.PLUS else sp.kron(eye, op, format="csr")


def _check_mode(modes: ModeSet, k: int):
    if not 0 <= k < modes.M:
        raise IndexError(f"mode index {k} out of range for {modes.M} modes")


def annihilator(modes: ModeSet, k: int, s: Helicity, trunc: TruncationSpec) -> ModeOperator:
    _check_mode(modes, k)
    s = Helicity(s)
    mat = sp.kron(_mode_proj(modes.M, k), _on_helicity(_ladder(trunc.n_max), s, trunc.n_max), format="csr")
    return ModeOperator(mat.astype(complex), "annihilate", k, s)


def creator(modes: ModeSet, k: int, s: Helicity, trunc: TruncationSpec) -> ModeOperator:
    return annihilator(modes, k, s, trunc).adjoint()


def mode_projector(modes: ModeSet, k: int, trunc: TruncationSpec) -> ModeOperator:
    _check_mode(modes, k)
    eye = sp.identity((trunc.n_max + 1) ** 2, format="csr")
    return ModeOperator(sp.kron(_mode_proj(modes.M, k), eye, format="csr").astype(complex), "projector", k)


def number_operator(modes: ModeSet, trunc: TruncationSpec) -> ModeOperator:
    n = np.arange(trunc.n_max + 1, dtype=float)
    per_mode = (n[:, None] + n[None, :]).ravel()
    return ModeOperator(sp.diags(np.tile(per_mode, modes.M).astype(complex), format="csr"), "number")


def smeared(f, kind: str, modes: ModeSet, trunc: TruncationSpec) -> ModeOperator:
    """``a(f)`` (kind ``"annihilate"``) or ``a(f)^dagger`` (kind ``"create"``)."""
    f = as_amplitude_map(f, modes)
    if kind not in ("annihilate", "create"):
        raise ValueError(f"kind must be 'annihilate' or 'create', got {kind!r}")
    d = single_dim(modes.M, trunc.n_max)
    mat = sp.csr_matrix((d, d), dtype=complex)
    for k in range(modes.M):
        for s in Helicity:
            if f[k, s] != 0:
                mat = mat + np.conj(f[k, s]) * annihilator(modes, k, s, trunc).matrix
    mat = mat.tocsr()
    if kind == "create":
        mat = mat.conj().T.tocsr()
    return ModeOperator(mat, kind)


def default_scaling(N: int) -> float:
    return 1.0 / math.sqrt(N)


def lift(
    op,
    N: int,
    scaling: Callable[[int], float] | float | None = None,
    dim_cap: int = DEFAULT_DIM_CAP,
) -> sp.csr_matrix:
    """``scaling(N) * sum_j 1^(j-1) (x) op (x) 1^(N-j)`` as a sparse matrix."""
    if N < 1:
        raise ValueError("N must be >= 1")
    mat = op.matrix if isinstance(op, ModeOperator) else sp.csr_matrix(op)
    d = mat.shape[0]
    _check_dim(d, N, dim_cap)
    c = default_scaling(N) if scaling is None else (scaling(N) if callable(scaling) else float(scaling))
    total = None
    for j in range(N):
        term = sp.kron(sp.identity(d**j, format="csr"), mat, format="csr")
        term = sp.kron(term, sp.identity(d ** (N - j - 1), format="csr"), format="csr")
        total = term if total is None else total + term
    return (c * total).tocsr()


def commutator(A, B):
    return A @ B - B @ A


def _kept_indices(M: int, n_from: int, n_to: int, N: int) -> np.ndarray:
    """Indices of the ``n_to`` truncated basis inside the ``n_from`` basis, N-fold."""
    one = np.array(
        [basis_index(k, a, b, n_from) for k in range(M) for a in range(n_to + 1) for b in range(n_to + 1)]
    )
    d = single_dim(M, n_from)
    idx = np.zeros(1, dtype=np.int64)
    for _ in range(N):
        idx = (idx[:, None] * d + one[None, :]).ravel()
    return idx


def compressed_commutator(
    make_A: Callable[[TruncationSpec], object],
    make_B: Callable[[TruncationSpec], object],
    modes: ModeSet,
    trunc: TruncationSpec,
    N: int = 1,
) -> sp.csr_matrix:
    """Commutator of the untruncated operators, compressed onto the truncated space.

    The factories build an operator for a given truncation. Products of two
    ladder operators only reach one level beyond ``n_max``, so one guard level
    makes the compression exact.
    """
    padded = trunc.padded(1)
    A, B = make_A(padded), make_B(padded)
    A = A.matrix if isinstance(A, ModeOperator) else A
    B = B.matrix if isinstance(B, ModeOperator) else B
    C = commutator(A, B).tocsr()
    keep = _kept_indices(modes.M, padded.n_max, trunc.n_max, N)
    return C[keep][:, keep].tocsr()


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    N: int
    M: int
    n_max: int
    norm_deficit: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (single_dim(self.M, self.n_max) ** self.N,):
            raise ValueError("amplitude vector has the wrong length for (M, n_max, N)")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite amplitudes")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def expectation(self, op) -> complex:
        mat = op.matrix if isinstance(op, ModeOperator) else op
        return complex(np.vdot(self.amplitudes, mat @ self.amplitudes))


def _kron_power(v: np.ndarray, N: int) -> np.ndarray:
    out = v
    for _ in range(N - 1):
        out = np.kron(out, v)
    return out


def _single_vacuum(modes: ModeSet, n_max: int) -> np.ndarray:
    v = np.zeros(single_dim(modes.M, n_max), dtype=complex)
    for k in range(modes.M):
        v[basis_index(k, 0, 0, n_max)] = math.sqrt(modes.z[k])
    return v


def vacuum_state(modes: ModeSet, N: int, trunc: TruncationSpec) -> StateVector:
    _check_dim(single_dim(modes.M, trunc.n_max), N, trunc.dim_cap)
    v = _single_vacuum(modes, trunc.n_max)
    return StateVector(_kron_power(v, N), N, modes.M, trunc.n_max)


def _coherent_coeffs(beta: complex, n_max: int) -> np.ndarray:
    c = np.empty(n_max + 1, dtype=complex)
    c[0] = math.exp(-0.5 * abs(beta) ** 2)
    for n in range(1, n_max + 1):
        c[n] = c[n - 1] * beta / math.sqrt(n)
    return c


def _single_coherent(modes: ModeSet, alpha_N: np.ndarray, n_max: int) -> tuple[np.ndarray, float]:
    """One oscillator in ``sum_k sqrt(z_k) |k⟩|alpha_N(k,+)⟩|alpha_N(k,-)⟩`` and its norm deficit."""
    blocks = []
    for k in range(modes.M):
        cp = _coherent_coeffs(alpha_N[k, 0], n_max)
        cm = _coherent_coeffs(alpha_N[k, 1], n_max)
        blocks.append(math.sqrt(modes.z[k]) * np.outer(cp, cm).ravel())
    v = np.concatenate(blocks)
    return v, max(0.0, 1.0 - float(np.vdot(v, v).real))


def coherent_state(modes: ModeSet, alpha: CoherentSpec, N: int, trunc: TruncationSpec) -> StateVector:
    """N-fold product of single-oscillator coherent states with amplitudes ``alpha / sqrt(N)``.

    ``norm_deficit`` is ``1 - ||psi||^2`` of the truncated product.
    """
    _check_dim(single_dim(modes.M, trunc.n_max), N, trunc.dim_cap)
    v, d1 = _single_coherent(modes, alpha.on(modes) / math.sqrt(N), trunc.n_max)
    deficit = 1.0 - (1.0 - d1) ** N
    if deficit > trunc.norm_tolerance:
        raise TruncationError(f"norm deficit {deficit:.3g} exceeds tolerance {trunc.norm_tolerance:g}; raise n_max")
    return StateVector(_kron_power(v, N), N, modes.M, trunc.n_max, deficit)


def _displacement_block(beta: complex, n_max: int) -> np.ndarray:
    """Matrix elements ``⟨m|exp(beta a^dagger - conj(beta) a)|n⟩`` of the untruncated operator."""
    x = abs(beta) ** 2
    D = np.empty((n_max + 1, n_max + 1), dtype=complex)
    pref = math.exp(-0.5 * x)
    for m in range(n_max + 1):
        for n in range(n_max + 1):
            if m >= n:
                lg = 0.5 * (gammaln(n + 1) - gammaln(m + 1))
                D[m, n] = pref * math.exp(lg) * beta ** (m - n) * eval_genlaguerre(n, m - n, x)
            else:
                lg = 0.5 * (gammaln(m + 1) - gammaln(n + 1))
                D[m, n] = pref * math.exp(lg) * (-np.conj(beta)) ** (n - m) * eval_genlaguerre(m, n - m, x)
    return D


def _single_displacement(modes: ModeSet, beta_N: np.ndarray, trunc: TruncationSpec) -> sp.csr_matrix:
    blocks = []
    worst = 0.0
    for k in range(modes.M):
        Dp = _displacement_block(beta_N[k, 0], trunc.n_max)
        Dm = _displacement_block(beta_N[k, 1], trunc.n_max)
        worst = max(worst, 1 - np.sum(np.abs(Dp[:, 0]) ** 2) * np.sum(np.abs(Dm[:, 0]) ** 2))
        blocks.append(np.kron(Dp, Dm))
    if worst > trunc.norm_tolerance:
        raise TruncationError(f"displaced vacuum loses {worst:.3g} of its norm; raise n_max")
    return sp.block_diag(blocks, format="csr")


class ProductOperator:
    """``U (x) U (x) ... (x) U`` (N factors) applied without forming the product."""

    def __init__(self, single, N: int, dim_cap: int = DEFAULT_DIM_CAP):
        self.single = sp.csr_matrix(single)
        self.N = N
        self.dim_cap = dim_cap
        d = self.single.shape[0]
        self.shape = (d**N, d**N)

    @property
    def H(self) -> "ProductOperator":
        return ProductOperator(self.single.conj().T, self.N, self.dim_cap)

    def __matmul__(self, x):
        x = np.asarray(x, dtype=complex)
        cols = x.ndim == 2
        d = self.single.shape[0]
        k = x.shape[1] if cols else 1
        t = x.reshape((d,) * self.N + (k,))
        U = self.single.toarray()
        for axis in range(self.N):
            t = np.moveaxis(np.tensordot(U, t, axes=([1], [axis])), 0, axis)
        out = t.reshape(d**self.N, k)
        return out if cols else out[:, 0]

    def to_sparse(self) -> sp.csr_matrix:
        nnz = self.single.nnz**self.N
        if nnz > self.dim_cap * 64:
            raise DimensionCapError(f"product operator would hold {nnz} nonzeros")
        out = self.single
        for _ in range(self.N - 1):
            out = sp.kron(out, self.single, format="csr")
        return out


def displacement_operator(beta: CoherentSpec, modes: ModeSet, N: int, trunc: TruncationSpec) -> ProductOperator:
    """Multi-oscillator displacement: N-fold product of ``sum_k P_k (x) D(beta_k+/sqrt N) (x) D(beta_k-/sqrt N)``.

    Entries are those of the untruncated operator, so the matrix is unitary
    only up to truncation. The product is applied factor by factor; call
    ``to_sparse()`` for an explicit matrix on small spaces.
    """
    _check_dim(single_dim(modes.M, trunc.n_max), N, trunc.dim_cap)
    single = _single_displacement(modes, beta.on(modes) / math.sqrt(N), trunc)
    return ProductOperator(single, N, trunc.dim_cap)


# ---------------------------------------------------------------------------
# vacuum expectation values of multi-photon products


def _check_lists(fs, gs, modes):
    if len(fs) != len(gs) or len(fs) == 0:
        raise ValueError("need equally many (m >= 1) annihilation and creation wavepackets")
    return [as_amplitude_map(f, modes) for f in fs], [as_amplitude_map(g, modes) for g in gs]


def vacuum_expectation_tensor(fs, gs, modes: ModeSet, N: int, trunc: TruncationSpec, dense: bool | None = None) -> complex:
    """``⟨O| a(f_1)..a(f_m) a(g_1)^dagger..a(g_m)^dagger |O⟩`` from the explicit operators.

    With ``dense`` the lifted operators act on the full N-oscillator vector.
    Otherwise the product of ``2m`` lifted sums is expanded over site
    assignments: operators on distinct oscillators commute and the vacuum
    is a product state, so an assignment contributes the product over
    occupied sites of single-site vacuum averages of the (ordered) operators
    placed there, and all assignments with the same site pattern (a set
    partition of the ``2m`` positions with ``b`` blocks) recur
    ``N (N-1) ... (N-b+1)`` times. ``dense=None`` picks the dense path when
    the dimension fits the cap.
    """
    fs, gs = _check_lists(fs, gs, modes)
    m = len(fs)
    if trunc.n_max < m:
        raise TruncationError(f"n_max={trunc.n_max} cannot hold {m} excitations of one helicity")
    d = single_dim(modes.M, trunc.n_max)
    if dense is None:
        dense = d**N <= trunc.dim_cap
    if dense:
        _check_dim(d, N, trunc.dim_cap)
        vac = vacuum_state(modes, N, trunc).amplitudes
        phi_f, phi_g = vac, vac
        for f in fs:
            phi_f = lift(smeared(f, "create", modes, trunc), N, dim_cap=trunc.dim_cap) @ phi_f
        for g in reversed(gs):
            phi_g = lift(smeared(g, "create", modes, trunc), N, dim_cap=trunc.dim_cap) @ phi_g
        return complex(np.vdot(phi_f, phi_g))

    ops = [smeared(f, "annihilate", modes, trunc).matrix.toarray() for f in fs]
    ops += [smeared(g, "create", modes, trunc).matrix.toarray() for g in gs]
    vac = _single_vacuum(modes, trunc.n_max)
    total = 0.0j
    for blocks in set_partitions(2 * m):
        b = len(blocks)
        if b > N:
            continue
        val = 1.0 + 0.0j
        for block in blocks:
            v = vac
            for i in reversed(block):
                v = ops[i] @ v
            val *= np.vdot(vac, v)
            if val == 0:
                break
        total += math.perm(N, b) * val
    return complex(total / N**m)


def _pattern_weights(N: int, m: int) -> dict:
    """Fraction of ordered m-tuples of oscillators realizing one given set partition of the positions."""
    table = class_probabilities(N, m)
    out = {}
    for cls, (count, _) in table.entries.items():
        n_sets = sum(1 for blocks in set_partitions(m) if set_partition_type(blocks) == cls)
        out[cls] = Fraction(count, n_sets * N**m)
    return out


def vacuum_expectation_class_sum(fs, gs, modes: ModeSet, N: int) -> complex:
    """Same expectation from the commutator algebra and the coincidence classes.

    Normal ordering leaves ``sum_sigma sum_k prod conj(f_i) g_sigma(i)``
    times ``⟨O| I_k1 .. I_km |O⟩`` (lifted projectors). A product of lifted
    projectors averages to ``N**-m sum`` over oscillator tuples; a tuple whose
    coincidence pattern is the set partition ``pi`` contributes
    ``prod_blocks delta(k's equal in block) z_k``.
    """
    fs, gs = _check_lists(fs, gs, modes)
    m = len(fs)
    weights = _pattern_weights(N, m)
    patterns = [(blocks, float(weights[set_partition_type(blocks)])) for blocks in set_partitions(m)]
    z = modes.z
    total = 0.0j
    for sigma in itertools.permutations(range(m)):
        # G[i, k] = sum_s conj(f_i(k,s)) g_sigma(i)(k,s)
        G = np.array([np.sum(np.conj(fs[i]) * gs[sigma[i]], axis=1) for i in range(m)])
        for blocks, w in patterns:
            if w == 0:
                continue
            val = 1.0 + 0.0j
            for block in blocks:
                val *= np.sum(z * np.prod(G[block], axis=0))
            total += w * val
    return complex(total)


def vacuum_expectation(fs, gs, modes: ModeSet, N: int, trunc: TruncationSpec, rtol: float = 1e-10) -> complex:
    """Class-sum value, cross-checked against the operator evaluation."""
    a = vacuum_expectation_class_sum(fs, gs, modes, N)
    b = vacuum_expectation_tensor(fs, gs, modes, N, trunc)
    if abs(a - b) > rtol * max(1.0, abs(a)):
        raise ArithmeticError(f"class-sum {a} and operator evaluation {b} disagree")
    return a


def permanent(A) -> complex:
    """Ryser's formula; exponential cost, meant for m <= 10 or so."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("permanent needs a square matrix")
    if n == 0:
        return 1.0 + 0j
    total = 0.0j
    for r in range(1, n + 1):
        for cols in itertools.combinations(range(n), r):
            total += (-1) ** r * np.prod(A[:, cols].sum(axis=1))
    return complex((-1) ** n * total)


def thermodynamic_expectation(fs, gs, modes: ModeSet) -> complex:
    """Large-N limit: permanent of the Gram matrix ``⟨f_i|g_j⟩_Z``."""
    fs, gs = _check_lists(fs, gs, modes)
    if len(fs) > 8:
        raise ValueError("m <= 8 supported")
    G = np.array([[z_inner_product(f, g, modes) for g in gs] for f in fs])
    return permanent(G)


# ---------------------------------------------------------------------------
# field quantities


def _time(x) -> float:
    if isinstance(x, (tuple, list, np.ndarray)):
        return float(x[0])
    return float(x)


def uv_scalar_product(modes: ModeSet, x, y) -> complex:
    """``2 sum_k z_k exp(i omega_k (t_x - t_y))``; points are ``t`` or ``(t, r)`` pairs."""
    dt = _time(x) - _time(y)
    return complex(2.0 * np.sum(modes.z * np.exp(1j * modes.omega * dt)))


@dataclass(frozen=True)
class FieldAverage:
    analytic: np.ndarray
    truncated: np.ndarray
    norm_deficit: float


def coherent_field_average(modes: ModeSet, alpha: CoherentSpec, N: int, t: float, trunc: TruncationSpec) -> FieldAverage:
    """Positive-frequency field amplitude per helicity in a multi-oscillator coherent state.

    Returns ``sum_k z_k alpha(k,s) exp(-i omega_k t)`` and the expectation of
    ``sum_k exp(-i omega_k t)`` times the lifted ``a(k, s)`` in the truncated
    coherent state.
    """
    a = alpha.on(modes)
    phase = np.exp(-1j * modes.omega * t)
    analytic = np.sum(modes.z[:, None] * a * phase[:, None], axis=0)
    psi = coherent_state(modes, alpha, N, trunc)
    truncated = np.empty(2, dtype=complex)
    for s in Helicity:
        d = single_dim(modes.M, trunc.n_max)
        op = sp.csr_matrix((d, d), dtype=complex)
        for k in range(modes.M):
            op = op + phase[k] * annihilator(modes, k, s, trunc).matrix
        truncated[s] = psi.expectation(lift(op, N, dim_cap=trunc.dim_cap))
    return FieldAverage(analytic, truncated, psi.norm_deficit)
