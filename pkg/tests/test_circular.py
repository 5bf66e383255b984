import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from panorm.circular import (
    MAX_ELL,
    AngleMeasurement,
    CircularDistribution,
    bayes_update,
    ell_to_fwhm,
    fwhm_to_ell,
    interval_mass,
    pdf,
    product,
    wrap_angle,
)
from panorm.errors import InvalidArgument

from oracles import density_mp, mass_mp

angles = st.floats(-math.pi, math.pi)
ells = st.floats(0.08, 3.0)


def test_wrap_angle_range():
    x = np.array([-math.pi, math.pi, 3 * math.pi, -0.5, 7.0])
    w = wrap_angle(x)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert w[0] == pytest.approx(math.pi)
    np.testing.assert_allclose(np.exp(1j * w), np.exp(1j * x), atol=1e-12)


@pytest.mark.parametrize("fwhm_deg, ell", [(90.22, 0.6515), (60.0, 0.4396)])
def test_fwhm_anchor_values(fwhm_deg, ell):
    assert fwhm_to_ell(math.radians(fwhm_deg)) == pytest.approx(ell, abs=5e-4)


def test_full_circle_dispersion():
    assert fwhm_to_ell(2 * math.pi) == pytest.approx(math.sqrt(2 / math.log(2)), abs=1e-9)
    assert MAX_ELL == pytest.approx(fwhm_to_ell(2 * math.pi), abs=1e-15)


@given(st.floats(1e-6, 2 * math.pi))
def test_fwhm_round_trip(f):
    assert ell_to_fwhm(fwhm_to_ell(f)) == pytest.approx(f, abs=1e-12, rel=1e-12)


@given(angles, st.floats(0.05, 6.2))
def test_half_maximum_at_half_width(mu, f):
    d = CircularDistribution.from_fwhm(mu, f)
    ratio = d.pdf(mu + f / 2) / d.pdf(mu)
    assert ratio == pytest.approx(0.5, rel=1e-9)


@pytest.mark.parametrize("bad", [0.0, -1.0, 7.0, float("nan")])
def test_fwhm_rejects_out_of_range(bad):
    with pytest.raises(InvalidArgument):
        fwhm_to_ell(bad)


@pytest.mark.parametrize("bad", [0.0, -0.3, float("nan")])
def test_distribution_rejects_bad_dispersion(bad):
    with pytest.raises(InvalidArgument):
        CircularDistribution(0.0, bad)


def test_distribution_rejects_nonfinite_mean():
    with pytest.raises(InvalidArgument):
        CircularDistribution(float("inf"), 0.5)
    with pytest.raises(InvalidArgument):
        AngleMeasurement(float("nan"), 0.5)


@pytest.mark.parametrize("mu, ell, theta", [(0.0, 0.5, 0.3), (1.2, 1.7, -2.0), (-3.0, 0.1, 3.1)])
def test_pdf_matches_arbitrary_precision(mu, ell, theta):
    d = CircularDistribution(mu, ell)
    assert d.pdf(theta) == pytest.approx(float(density_mp(theta, d.mu, ell)), rel=1e-12)


@given(angles, ells)
def test_pdf_integrates_to_one(mu, ell):
    d = CircularDistribution(mu, ell)
    val, _ = integrate.quad(d.pdf, mu - math.pi, mu + math.pi, points=[mu], limit=200)
    assert val == pytest.approx(1.0, abs=1e-9)


def test_pdf_rejects_nonfinite_theta():
    with pytest.raises(InvalidArgument):
        pdf(CircularDistribution(0, 1), [0.0, float("nan")])


@pytest.mark.parametrize("deg, expected", [(90, 0.609), (45, 0.332), (30, 0.225)])
def test_interval_mass_full_width(deg, expected):
    d = CircularDistribution.from_fwhm(0.0, 2 * math.pi)
    assert interval_mass(d, math.radians(deg)) == pytest.approx(expected, abs=2e-3)


def test_interval_mass_listening_window():
    d = CircularDistribution.from_degrees(0.0, 90.22)
    assert interval_mass(d, math.pi / 2) == pytest.approx(0.95, abs=5e-3)


def test_interval_mass_matches_high_precision_quadrature(rng):
    for _ in range(100):
        ell = float(rng.uniform(0.02, 3.0))
        a = float(rng.uniform(0.0, math.pi))
        d = CircularDistribution(float(rng.uniform(-3, 3)), ell)
        assert interval_mass(d, a) == pytest.approx(mass_mp(ell, a), abs=1e-8)


def test_interval_mass_edges():
    d = CircularDistribution(0.4, 0.7)
    assert interval_mass(d, 0.0) == 0.0
    assert interval_mass(d, math.pi) == 1.0
    assert interval_mass(CircularDistribution(0, math.inf), 1.0) == pytest.approx(1 / math.pi)
    with pytest.raises(InvalidArgument):
        interval_mass(d, -0.1)
    with pytest.raises(InvalidArgument):
        interval_mass(d, 4.0)


@given(ells, st.floats(0.0, math.pi), st.floats(0.0, math.pi))
def test_interval_mass_monotone(ell, a, b):
    d = CircularDistribution(0.0, ell)
    lo, hi = sorted((a, b))
    assert interval_mass(d, lo) <= interval_mass(d, hi) + 1e-12


def _normalized_product(a, b, theta):
    f = lambda t: a.pdf(t) * b.pdf(t)
    z, _ = integrate.quad(f, -math.pi, math.pi, points=[a.mu, b.mu], limit=400,
                          epsabs=0, epsrel=1e-13)
    return f(theta) / z


def test_product_conjugacy_random_pairs(rng):
    for _ in range(100):
        a = CircularDistribution(rng.uniform(-math.pi, math.pi), rng.uniform(0.2, 2.5))
        b = CircularDistribution(rng.uniform(-math.pi, math.pi), rng.uniform(0.2, 2.5))
        c = product(a, b)
        theta = rng.uniform(-math.pi, math.pi, 5)
        np.testing.assert_allclose(_normalized_product(a, b, theta), c.pdf(theta),
                                   rtol=1e-9, atol=1e-12)


def test_product_closed_form_dispersion():
    a = CircularDistribution(0.3, 0.6)
    b = CircularDistribution(-1.1, 0.9)
    c = product(a, b)
    la2, lb2 = a.ell**2, b.ell**2
    expected = la2 * lb2 / math.sqrt(la2**2 + 2 * math.cos(a.mu - b.mu) * la2 * lb2 + lb2**2)
    assert c.ell**2 == pytest.approx(expected, rel=1e-12)


def test_product_of_opposite_equal_components_is_uniform():
    c = product(CircularDistribution(0.0, 1.0), CircularDistribution(math.pi, 1.0))
    assert math.isinf(c.ell) or c.ell > 1e7


@given(angles, ells, angles, ells, angles, ells)
def test_bayes_update_order_invariant(m0, l0, m1, l1, m2, l2):
    prior = CircularDistribution(m0, l0)
    a, b = AngleMeasurement(m1, l1), AngleMeasurement(m2, l2)
    ab = bayes_update(bayes_update(prior, a), b)
    ba = bayes_update(bayes_update(prior, b), a)
    k_ab, k_ba = ab.concentration, ba.concentration
    assert k_ab == pytest.approx(k_ba, rel=1e-9, abs=1e-9)
    if k_ab > 1e-6:
        dmu = abs(wrap_angle(ab.mu - ba.mu))
        assert k_ab * dmu == pytest.approx(0.0, abs=1e-9 * max(1.0, k_ab))


def test_bayes_update_uniform_prior_returns_measurement():
    post = bayes_update(CircularDistribution(0.0, math.inf), AngleMeasurement(1.0, 0.4))
    assert post.mu == pytest.approx(1.0)
    assert post.ell == pytest.approx(0.4)


def test_large_dispersion_is_uniform():
    d = CircularDistribution(0.7, 1e6)
    np.testing.assert_allclose(d.pdf(np.linspace(-3, 3, 7)), 1 / (2 * math.pi), atol=1e-6)


@given(ells, st.floats(0, math.pi))
def test_pdf_symmetric_about_mean(ell, t):
    d = CircularDistribution(0.0, ell)
    assert d.pdf(t) == pytest.approx(d.pdf(-t), rel=1e-14)


def test_product_of_identical_halves_squared_dispersion():
    a = CircularDistribution(0.4, 0.8)
    c = product(a, a)
    assert c.mu == pytest.approx(0.4, abs=1e-14)
    assert c.ell**2 == pytest.approx(0.8**2 / 2, rel=1e-12)


def test_product_is_commutative():
    a, b = CircularDistribution(0.4, 0.8), CircularDistribution(-2.0, 0.3)
    assert product(a, b).mu == pytest.approx(product(b, a).mu, abs=1e-15)
    assert product(a, b).ell == pytest.approx(product(b, a).ell, rel=1e-15)


def test_first_calibration_step_lands_halfway():
    prior = CircularDistribution.from_degrees(0.0, 90.22)
    meas = AngleMeasurement.from_degrees(-60.0, 90.0)
    assert meas.ell == pytest.approx(0.6500, abs=5e-4)
    assert math.degrees(bayes_update(prior, meas).mu) == pytest.approx(-30.1, abs=0.1)


def test_antipodal_product_is_widest():
    a = CircularDistribution(0.0, 0.7)
    aligned = product(a, CircularDistribution(0.0, 0.9))
    opposed = product(a, CircularDistribution(math.pi, 0.9))
    assert opposed.ell >= aligned.ell


def test_posterior_dispersion_depends_on_mean_offset():
    prior = CircularDistribution(0.0, 0.7)
    ells = [bayes_update(prior, AngleMeasurement(d, 0.7)).ell for d in (0.0, 1.0, 2.0, 3.0)]
    assert np.all(np.diff(ells) > 0)


def test_calibration_sequence_approaches_true_angle():
    post = CircularDistribution.from_degrees(0.0, 90.22)
    means, widths = [], [post.fwhm]
    for theta, fwhm in ((-60, 90), (75, 45), (90, 30)):
        post = bayes_update(post, AngleMeasurement.from_degrees(theta, fwhm))
        means.append(math.degrees(post.mu))
        widths.append(post.fwhm)
    assert np.all(np.diff(np.abs(90.0 - np.array(means))) < 0)
    assert widths[3] < widths[2] < widths[1]


def test_extreme_measurements():
    prior = CircularDistribution(0.5, 0.7)
    sharp = bayes_update(prior, AngleMeasurement(-1.0, 1e-6))
    assert sharp.mu == pytest.approx(-1.0, abs=1e-6)
    flat = bayes_update(prior, AngleMeasurement(-1.0, 1e6))
    assert flat.mu == pytest.approx(prior.mu, abs=1e-6)
    assert flat.ell == pytest.approx(prior.ell, rel=1e-6)
