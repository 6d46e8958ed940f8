import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noncanon import propagator as pg
from noncanon.model import CurrentSpec, FlatCutoff, Gaussian, PowerExp

PROFILES = [FlatCutoff(20.0), PowerExp(1.0, 2.0), PowerExp(0.5, 1.5), PowerExp(2.0, 1.0), Gaussian(5.0, 1.0)]


@pytest.fixture(params=PROFILES, ids=lambda p: p.family + str(p.params()))
def rp(request):
    return pg.RadialProfile(request.param)


def test_normalization_against_numerical_integral(rp):
    import scipy.integrate

    val, _ = scipy.integrate.quad(lambda k: k * float(rp.profile(np.array([k]))[0]) / (4 * math.pi**2), 0, rp.k_max, limit=500)
    assert val / rp.norm == pytest.approx(1.0, abs=2e-10)


def test_coincidence_value_is_two(rp):
    assert abs(pg.coincidence_value(rp) - 2.0) < 1e-6


def test_tail_mass_below_tolerance():
    rp = pg.RadialProfile(PowerExp(1.0, 1.0))
    import scipy.special

    assert scipy.special.gammaincc(3.0, rp.k_max) == pytest.approx(1e-10, rel=1e-6)
    g = pg.RadialProfile(Gaussian(3.0, 0.5))
    assert pg._gaussian_first_moment(3.0, 0.5, g.k_max) / (g.norm * 4 * math.pi**2) == pytest.approx(1e-10, rel=1e-6)


def test_equal_time_vanishes(rp):
    for r in (1.0, 5.0):
        assert pg.equal_time_commutator_check(rp, r) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.0, 8.0), r=st.floats(0.1, 8.0))
def test_odd_in_time(t, r):
    rp = pg.RadialProfile(PowerExp(1.0, 2.0))
    a = pg.d_z(rp, (t, r))
    b = pg.d_z(rp, (-t, r))
    assert a == pytest.approx(-b, abs=1e-14)


def test_flat_closed_form():
    K = 30.0
    rp = pg.RadialProfile(FlatCutoff(K))
    for r in (0.5, 3.0, 10.0):
        t = np.linspace(0.0, 2 * r, 41)
        np.testing.assert_allclose(pg.d_z_quad(rp, t, r).value, pg.d_z_flat_closed_form(K, t, r), atol=1e-13)


@pytest.mark.parametrize("profile,t,r", [
    (FlatCutoff(20.0), 1.3, 1.0),
    (PowerExp(1.0, 2.0), 0.7, 2.0),
    (PowerExp(0.5, 1.5), 2.5, 1.5),
    (Gaussian(5.0, 1.0), 1.0, 0.8),
    (Gaussian(2.0, 0.3), 4.0, 3.5),
])
def test_fine_grid_oracle(profile, t, r):
    rp = pg.RadialProfile(profile)
    assert pg.d_z(rp, (t, r)) == pytest.approx(pg.brute_force_d_z(rp, t, r), abs=1e-9)


@pytest.mark.parametrize("profile,t,r", [(PowerExp(1.0, 2.0), 0.7, 0.5), (Gaussian(1.0, 0.5), 1.5, 1.0)])
def test_radial_reduction_matches_3d_monte_carlo(profile, t, r):
    rp = pg.RadialProfile(profile)
    mean, se = pg.d_z_monte_carlo(rp, t, r, 400_000, seed=7)
    assert abs(pg.d_z(rp, (t, r)) - mean) < 5 * se


def test_origin_limit_branch():
    rp = pg.RadialProfile(PowerExp(1.0, 2.0))
    for t in (0.3, 1.0, 2.0):
        assert pg.d_z(rp, (t, 0.0)) == pytest.approx(pg.d_z(rp, (t, 1e-6)), rel=1e-6, abs=1e-12)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        pg.SpacetimePoint(0.0, -1.0)


def test_doubling_panels_reduces_error_estimate():
    rp = pg.RadialProfile(PowerExp(1.0, 2.0))
    g = lambda k: rp.z(k) * np.sin(3 * k) * np.sin(2 * k)
    errs = []
    for width in (8.0, 4.0, 2.0, 1.0):
        edges = pg._panel_edges(0.0, rp.k_max, width, None)
        errs.append(abs(pg._fixed(g, edges, 20) - pg._fixed(g, edges, 12)))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_quadrature_error_reports_bound():
    with pytest.raises(pg.QuadratureError) as info:
        pg.panel_quadrature(lambda k: np.sin(1e4 * k), 0.0, 10.0, 10.0, max_levels=2, atol=0, rtol=1e-15)
    assert info.value.error_bound > 0


# ---------------------------------------------------------------------------
# light cone


def test_lightcone_peak_and_width_scaling():
    a = pg.lightcone_deviation(pg.RadialProfile(FlatCutoff(50.0)), 10.0)
    b = pg.lightcone_deviation(pg.RadialProfile(FlatCutoff(100.0)), 10.0)
    assert abs(a.peak_time - 10.0) <= 0.2 and abs(b.peak_time - 10.0) <= 0.2
    assert 0.4 <= b.width / a.width <= 0.6
    assert not a.ambiguous
    # sinc main lobe: half maximum at K |r - t| = 1.8955
    assert a.width == pytest.approx(2 * 1.895494267 / 50.0, rel=1e-3)


def test_narrow_profile_is_ambiguous():
    rep = pg.lightcone_deviation(pg.RadialProfile(Gaussian(5.0, 0.01)), 10.0)
    assert rep.ambiguous


def test_flat_landscape_error():
    with pytest.raises(pg.FlatLandscapeError):
        pg.lightcone_deviation(pg.RadialProfile(FlatCutoff(5.0)), 1.0, floor=1e3)


# ---------------------------------------------------------------------------
# radiation


def test_zero_current():
    rp = pg.RadialProfile(FlatCutoff(10.0))
    assert pg.radiated_photon_number(rp, CurrentSpec.zero(), 0.0) == 0.0
    assert pg.radiated_four_momentum(rp, CurrentSpec.zero()) == (0.0, 0.0)


def test_flat_soft_current_log_divergence():
    K, g = 10.0, 1.3
    rp = pg.RadialProfile(FlatCutoff(K))
    cur = CurrentSpec.soft(g)
    sweep = pg.ir_sweep(rp, cur)
    assert sweep.r_squared > 0.999
    a = 2 * g * g * (8 * math.pi**2 / K**2) / (4 * math.pi**2)
    assert sweep.slope == pytest.approx(a, rel=1e-10)
    assert sweep.intercept == pytest.approx(a * math.log(K), rel=1e-10)
    with pytest.raises(pg.DivergenceError) as info:
        pg.radiated_photon_number(rp, cur, 0.0)
    assert info.value.fit.r_squared > 0.999


def test_power_exp_soft_current_converges():
    rp = pg.RadialProfile(PowerExp(1.0, 1.0))
    cur = CurrentSpec.soft(1.0)
    limit, seq = pg.cauchy_limit(rp, cur)
    assert abs(seq[-1][1] - seq[-2][1]) < 1e-9
    # int_0^inf k^{-1} k e^{-k} dk / (4 pi^2) * 2 / norm, norm = Gamma(3)/(4 pi^2)
    assert limit == pytest.approx(1.0, abs=1e-8)
    assert pg.radiated_photon_number(rp, cur, 0.0) == pytest.approx(1.0, abs=1e-9)


def test_energy_finite_for_both_profiles():
    cur = CurrentSpec.soft(1.0)
    e_flat, p_flat = pg.radiated_four_momentum(pg.RadialProfile(FlatCutoff(10.0)), cur)
    # flat: 2 int_0^K k^{-2} k^2 dk / (4 pi^2) * 8 pi^2 / K^2 = 4 / K
    assert e_flat == pytest.approx(0.4, rel=1e-12)
    e_pe, p_pe = pg.radiated_four_momentum(pg.RadialProfile(PowerExp(1.0, 1.0)), cur)
    assert math.isfinite(e_pe) and e_pe > 0
    assert p_flat < 1e-15 and p_pe < 1e-15


@settings(max_examples=20, deadline=None)
@given(g=st.floats(0.0, 3.0), eps=st.floats(1e-6, 1e-1))
def test_observables_nonnegative(g, eps):
    rp = pg.RadialProfile(Gaussian(2.0, 0.7))
    cur = CurrentSpec.soft(g)
    assert pg.radiated_photon_number(rp, cur, eps) >= 0
    assert pg.radiated_four_momentum(rp, cur, eps)[0] >= 0


def test_negative_cutoff_rejected():
    with pytest.raises(ValueError):
        pg.radiated_photon_number(pg.RadialProfile(FlatCutoff(1.0)), CurrentSpec.soft(1.0), -1.0)


def test_csv_outputs():
    text = pg.d_z_csv([0.0, 1.0], 2.0, [0.0, 0.5])
    assert text == "t,r,D_Z\r\n0,2,0\r\n1,2,0.5\r\n"
    sweep = pg.ir_sweep(pg.RadialProfile(FlatCutoff(10.0)), CurrentSpec.soft(1.0), eps=[1e-3, 1e-2])
    assert pg.ir_sweep_csv(sweep).startswith("eps,n\r\n0.001,")
