import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noncanon import amplitude as amp
from noncanon.model import FlatCutoff, ModeSet, PowerExp, build_mode_set

T = np.linspace(0.0, 10.0, 201)


def rabi_model(C=1.0, omega=1.0):
    return amp.CouplingModel(C, omega, ModeSet([omega], [1.0]))


def random_model(rng, M):
    omega = np.sort(rng.uniform(0.4, 2.0, M))
    while np.any(np.diff(omega) <= 0):
        omega = np.sort(rng.uniform(0.4, 2.0, M))
    return amp.CouplingModel(rng.uniform(0.1, 2.0), rng.uniform(0.5, 1.5), ModeSet(omega, rng.uniform(0.05, 1.0, M)))


def test_kernel_at_zero_is_weighted_inverse_frequency(three_modes):
    m = amp.CouplingModel(1.0, 1.0, three_modes)
    assert amp.kernel_fZ(m, 0.0) == pytest.approx(np.sum(three_modes.z / three_modes.omega))


def test_kernel_hermitian_symmetry(three_modes):
    m = amp.CouplingModel(1.0, 0.9, three_modes)
    tau = np.linspace(0, 5, 11)
    np.testing.assert_allclose(amp.kernel_fZ(m, -tau), np.conj(amp.kernel_fZ(m, tau)), atol=1e-15)


def test_kernel_bounded_by_value_at_zero(three_modes):
    m = amp.CouplingModel(1.0, 0.8, three_modes)
    f = amp.kernel_fZ(m, np.linspace(-20, 20, 401))
    assert np.all(np.abs(f) <= amp.kernel_fZ(m, 0.0).real * (1 + 1e-15))


def test_resonant_single_mode_kernel_is_constant():
    f = amp.kernel_fZ(rabi_model(omega=2.0), np.linspace(0, 10, 21))
    np.testing.assert_allclose(f, 0.5, atol=1e-15)


def test_resonant_single_mode_is_rabi_cosine():
    for C, w in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.7)]:
        m = rabi_model(C, w)
        r = amp.richardson(m, 10.0, 0.02)
        expect = np.cos(math.sqrt(C / w) * r.extrapolated.t)
        assert np.max(np.abs(r.extrapolated.values - expect)) < 1e-6
        np.testing.assert_allclose(canonical_amplitude_values(m, T), np.cos(math.sqrt(C / w) * T), atol=1e-12)


def canonical_amplitude_values(m, t):
    return amp.canonical_amplitude(m, t).values


def test_detuned_single_mode_closed_form():
    # two-level Rabi problem with detuning: |F|^2 = 1 - (c/Omega)^2 sin^2(Omega t)
    C, w, w0 = 0.8, 1.3, 1.0
    m = amp.CouplingModel(C, w0, ModeSet([w], [1.0]))
    c2, d = C / w, w - w0
    Om = math.sqrt(c2 + d * d / 4)
    expect = np.exp(-1j * d * T / 2) * (np.cos(Om * T) + 1j * d / (2 * Om) * np.sin(Om * T))
    np.testing.assert_allclose(canonical_amplitude_values(m, T), expect, atol=1e-12)
    s = amp.richardson(m, 10.0, 0.01).extrapolated
    np.testing.assert_allclose(s.values, np.exp(-1j * d * s.t / 2) * (np.cos(Om * s.t) + 1j * d / (2 * Om) * np.sin(Om * s.t)), atol=1e-6)


def test_volterra_matches_resolvent_on_random_models(rng):
    for _ in range(5):
        m = random_model(rng, int(rng.integers(1, 17)))
        s = amp.richardson(m, 10.0, 0.02).extrapolated
        assert s.sup_distance(amp.canonical_amplitude(m, s.t)) < 1e-6


def test_richardson_order_is_two(three_modes):
    r = amp.richardson(amp.CouplingModel(0.7, 1.0, three_modes), 8.0, 0.04)
    assert 1.8 <= r.order <= 2.2
    assert r.extrapolated.error_estimate < 1e-6


def test_richardson_flags_nonconvergent_refinement(three_modes):
    # a step far beyond the oscillation scale cannot show asymptotic behaviour
    with pytest.raises(amp.ConvergenceError):
        amp.richardson(amp.CouplingModel(50.0, 1.0, three_modes), 8.0, 1.0)


def test_grid_must_divide_t_max(three_modes):
    with pytest.raises(ValueError):
        amp.solve_volterra(amp.CouplingModel(1.0, 1.0, three_modes), 1.0, 0.3)


def test_default_step(three_modes):
    m = amp.CouplingModel(2.0, 1.0, three_modes)
    h = amp.default_step(m)
    assert math.sqrt(2.0 * np.max(three_modes.z / three_modes.omega)) * h == pytest.approx(0.02)


def test_bordered_resolvent_entry_symbolic():
    sympy = pytest.importorskip("sympy")
    z, c, d = sympy.symbols("z c Delta", positive=True)
    M = sympy.Matrix([[0, -c], [c, -sympy.I * d]])
    top_left = ((z * sympy.eye(2) - M).inv())[0, 0]
    assert sympy.simplify(top_left - 1 / (z + c**2 / (z + sympy.I * d))) == 0


def test_bordered_matrix_sign_agrees_with_volterra():
    m = amp.CouplingModel(0.6, 1.0, ModeSet([0.7, 1.6], [0.4, 0.6]))
    s = amp.richardson(m, 10.0, 0.02).extrapolated
    c = np.sqrt(m.C * m.modes.z / m.modes.omega)
    import scipy.linalg

    for sign in (+1, -1):
        M = amp.BorderedMatrix(c, sign * m.detunings).matrix()
        F = np.array([scipy.linalg.expm(M * t)[0, 0] for t in s.t[::20]])
        err = np.max(np.abs(F - s.values[::20]))
        assert (err < 1e-6) == (sign == +1)


def test_bordered_matrix_poles_are_imaginary(rng):
    for _ in range(5):
        m = random_model(rng, 6)
        b = amp.BorderedMatrix(np.sqrt(m.C * m.modes.z / m.modes.omega), m.detunings)
        assert b.max_real_part() < 1e-10
        H = b.hermitian()
        np.testing.assert_allclose(H, H.conj().T, atol=0)


@settings(max_examples=25, deadline=None)
@given(
    C=st.floats(0.01, 5.0),
    omegas=st.lists(st.floats(0.2, 3.0), min_size=1, max_size=8, unique=True),
    omega0=st.floats(0.2, 3.0),
)
def test_amplitude_bounded_by_one(C, omegas, omega0):
    omegas = sorted(omegas)
    if np.any(np.diff(omegas) <= 1e-9):
        return
    m = amp.CouplingModel(C, omega0, ModeSet(omegas, np.ones(len(omegas))))
    F = amp.canonical_amplitude(m, T).values
    assert np.all(np.abs(F) <= 1 + 1e-9)
    assert F[0] == pytest.approx(1.0, abs=1e-12)


def test_weight_and_coupling_trade_off(three_modes):
    a = amp.solve_resolvent(1.0, three_modes.omega, three_modes.z, T, 1.0)
    b = amp.solve_resolvent(2.0, three_modes.omega, three_modes.z / 2, T, 1.0)
    assert a.sup_distance(b) < 1e-10


def test_resolvent_rejects_bad_input():
    with pytest.raises(ValueError):
        amp.solve_resolvent(1.0, [1.0], [-1.0], T, 1.0)
    with pytest.raises(ValueError):
        amp.solve_resolvent(1.0, [0.0], [1.0], T, 1.0)
    with pytest.raises(ValueError):
        amp.CouplingModel(0.0, 1.0, ModeSet([1.0], [1.0]))


def test_short_time_expansion(three_modes):
    # F(t) = 1 - (C/2) f_Z(0) t^2 + O(t^3)
    m = amp.CouplingModel(0.9, 1.1, three_modes)
    t = np.array([1e-3, 2e-3])
    F = amp.canonical_amplitude(m, t).values
    f0 = float(np.sum(three_modes.z / three_modes.omega))
    np.testing.assert_allclose(F, 1 - 0.5 * m.C * f0 * t**2, atol=1e-8)


# ---------------------------------------------------------------------------
# non-canonical amplitude


def brute_force_noncanonical(m, N, t):
    import itertools

    total = np.zeros(t.size, dtype=complex)
    for tup in itertools.product(range(m.modes.M), repeat=N):
        om = m.modes.omega[list(tup)]
        w = float(np.prod(m.modes.z[list(tup)]))
        total += w * amp.solve_resolvent(m.C, om, np.full(N, 1.0 / N), t, m.omega0).values
    return total


def test_exact_noncanonical_matches_tuple_enumeration(three_modes):
    m = amp.CouplingModel(0.5, 1.0, three_modes)
    for N in (1, 2, 3):
        s = amp.noncanonical_amplitude_exact(m, N, T)
        np.testing.assert_allclose(s.values, brute_force_noncanonical(m, N, T), atol=1e-12)


def test_noncanonical_N1_averages_single_mode_amplitudes(three_modes):
    m = amp.CouplingModel(0.5, 1.0, three_modes)
    expect = sum(z * amp.solve_resolvent(m.C, [w], [1.0], T, 1.0).values for w, z in zip(three_modes.omega, three_modes.z))
    np.testing.assert_allclose(amp.noncanonical_amplitude_exact(m, 1, T).values, expect, atol=1e-13)


def test_noncanonical_single_mode_equals_canonical():
    m = rabi_model(0.8, 1.0)
    for N in (1, 3, 5):
        np.testing.assert_allclose(amp.noncanonical_amplitude_exact(m, N, T).values, np.cos(math.sqrt(0.8) * T), atol=1e-12)


def test_exact_cap():
    m = amp.CouplingModel(1.0, 1.0, ModeSet(np.arange(1, 11, dtype=float), np.ones(10)))
    with pytest.raises(amp.CombinatorialCapError):
        amp.noncanonical_amplitude_exact(m, 7, T)


def test_repeated_frequencies_collapse_to_single_mode():
    C, w, N = 0.7, 1.3, 5
    weights = np.full(N, 1.0 / N)
    many = amp.solve_resolvent(C, np.full(N, w), weights, T, 1.1)
    one = amp.solve_resolvent(C, [w], [weights.sum()], T, 1.1)
    assert many.sup_distance(one) < 1e-12


def test_joint_rescaling_invariance():
    # only C z_k / omega_k and Delta_k enter; shift omega and omega0 together, reweight z
    omega = np.array([0.7, 1.0, 1.6])
    z = np.array([0.2, 0.5, 0.3])
    base = amp.canonical_amplitude(amp.CouplingModel(0.4, 0.9, ModeSet(omega, z)), T)
    shifted = omega + 0.5
    zs = z * shifted / omega
    Cs = 0.4 * zs.sum()
    moved = amp.canonical_amplitude(amp.CouplingModel(Cs, 1.4, ModeSet(shifted, zs / zs.sum())), T)
    assert base.sup_distance(moved) < 1e-10


def test_flat_and_power_exp_envelopes_differ():
    flat = build_mode_set(FlatCutoff(2.0), 0.05, 2.0, 40)
    pexp = build_mode_set(PowerExp(1.0, 0.5), 0.05, 2.0, 40)
    a = amp.canonical_amplitude(amp.CouplingModel(0.3, 1.0, flat), T)
    b = amp.canonical_amplitude(amp.CouplingModel(0.3, 1.0, pexp), T)
    i = np.searchsorted(T, 5.0)
    assert abs(a.values[i] - b.values[i]) > 10 * 1e-6


def test_mc_agrees_with_exact_within_error(three_modes):
    m = amp.CouplingModel(0.5, 1.0, three_modes)
    exact = amp.noncanonical_amplitude_exact(m, 3, T)
    mc = amp.noncanonical_amplitude_mc(m, 3, 4000, seed=5, t=T)
    for ts in (2.0, 5.0, 8.0):
        i = np.searchsorted(T, ts)
        assert abs(mc.values[i] - exact.values[i]) < 3 * mc.stderr[i]


def test_mc_independent_of_worker_count(three_modes):
    m = amp.CouplingModel(0.5, 1.0, three_modes)
    a = amp.noncanonical_amplitude_mc(m, 4, 1700, seed=11, t=T, workers=1, chunk=300)
    b = amp.noncanonical_amplitude_mc(m, 4, 1700, seed=11, t=T, workers=4, chunk=300)
    assert a.to_csv() == b.to_csv()
    c = amp.noncanonical_amplitude_mc(m, 4, 1700, seed=12, t=T, workers=1, chunk=300)
    assert a.to_csv() != c.to_csv()


def test_mc_threads_from_environment(three_modes, monkeypatch):
    m = amp.CouplingModel(0.5, 1.0, three_modes)
    monkeypatch.setenv("NONCANON_THREADS", "3")
    a = amp.noncanonical_amplitude_mc(m, 2, 900, seed=1, t=T)
    monkeypatch.delenv("NONCANON_THREADS")
    b = amp.noncanonical_amplitude_mc(m, 2, 900, seed=1, t=T)
    np.testing.assert_array_equal(a.values, b.values)


def test_noncanonical_approaches_canonical():
    modes = ModeSet(np.linspace(0.6, 1.4, 8), np.ones(8))
    m = amp.CouplingModel(0.3, 1.0, modes)
    F = amp.canonical_amplitude(m, T).values
    d = [np.max(np.abs(amp.noncanonical_amplitude_mc(m, N, 2000, seed=3, t=T).values - F)) for N in (1, 4, 16)]
    assert d[0] > d[1] > d[2]


def test_tree_sum_order():
    parts = [np.array([float(i)]) for i in range(7)]
    assert amp._tree_sum(parts)[0] == 21.0


# ---------------------------------------------------------------------------
# renormalization


def test_flat_window_modes():
    modes = amp.flat_window_modes(0.5, 1.0, 0.05)
    assert modes.M == 20
    np.testing.assert_allclose(modes.z, 1 / 20)
    assert modes.omega[0] == pytest.approx(0.525) and modes.omega[-1] == pytest.approx(1.475)


def test_degenerate_window_gives_rabi_cosine():
    modes = amp.flat_window_modes(1.0, 0.0, 0.05)
    assert modes.M == 1
    m = amp.CouplingModel(0.4, 1.0, modes)
    np.testing.assert_allclose(amp.canonical_amplitude(m, T).values, np.cos(math.sqrt(0.4) * T), atol=1e-12)


def test_sweep_holds_product_fixed_and_drift_decreases():
    r = amp.renormalization_sweep(1.0, 0.5, 2.0, 0.05, 0.003, T)
    np.testing.assert_allclose(np.array(r.couplings) * np.array(r.plateau), 0.003, rtol=1e-12)
    assert r.widths == [2.0, 4.0, 8.0, 16.0]
    assert r.decreasing
    assert r.drifts[-1] < 0.05


def test_series_csv_shape(three_modes):
    s = amp.canonical_amplitude(amp.CouplingModel(1.0, 1.0, three_modes), T[:3])
    lines = s.to_csv().split("\r\n")
    assert lines[0] == "t,re,im,abs"
    assert len([x for x in lines if x]) == 4
