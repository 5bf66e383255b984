import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from panorm.circular import CircularDistribution
from panorm.errors import InvalidArgument, NearNullError
from panorm.normalize import (
    DistanceModel,
    build_normalization,
    distance_gain,
    estimate_delay,
    quotient_deterministic,
    quotient_power,
    quotient_wls,
    windowed_average,
)
from panorm.speaker_field import (
    Isotropic,
    Layout,
    Loudspeaker,
    ParametricDirectivity,
    Wavenumber,
    log_frequency_grid,
    transfer_function,
)

from oracles import trapezoid_average, wls_scan

MODEL = ParametricDirectivity()
AXIAL = CircularDistribution.from_degrees(0.0, 60.0)


def test_windowed_average_of_constant_is_exact():
    w = CircularDistribution.from_degrees(20.0, 70.0)
    assert windowed_average(Isotropic(), w, 1000.0) == pytest.approx(1.0, abs=1e-14)
    assert windowed_average(Isotropic(), w, 1000.0, "power") == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(InvalidArgument):
        windowed_average(Isotropic(), w, 1000.0, kind="phase")


@pytest.mark.parametrize("nu", [300.0, 4000.0, 15000.0])
@pytest.mark.parametrize("mu_deg, fwhm_deg", [(0.0, 60.0), (50.0, 90.0), (170.0, 200.0)])
def test_windowed_average_matches_trapezoid(nu, mu_deg, fwhm_deg):
    w = CircularDistribution.from_degrees(mu_deg, fwhm_deg)
    val = windowed_average(MODEL, w, nu)
    ref = trapezoid_average(lambda th: MODEL.acoustic(nu, th), w.mu, w.ell)
    assert val == pytest.approx(ref, abs=1e-7)
    pwr = windowed_average(MODEL, w, nu, "power")
    ref = trapezoid_average(lambda th: np.abs(MODEL.acoustic(nu, th)) ** 2, w.mu, w.ell)
    assert pwr == pytest.approx(ref, abs=1e-7)


def test_windowed_average_uniform_window():
    w = CircularDistribution(0.0, math.inf)
    ref = trapezoid_average(lambda th: MODEL.acoustic(5000.0, th), 0.0, math.inf)
    assert windowed_average(MODEL, w, 5000.0) == pytest.approx(ref, abs=1e-7)


@pytest.mark.parametrize("nu", [500.0, 9000.0])
def test_wls_quotient_is_least_squares_minimizer(nu):
    listener = CircularDistribution.from_degrees(35.0, 50.0)
    target = windowed_average(MODEL, AXIAL, nu)
    X = quotient_wls(MODEL, AXIAL, listener, nu)
    ref = wls_scan(lambda th: MODEL.acoustic(nu, th), target, listener.mu, listener.ell)
    assert abs(X - ref) < 1e-4


def test_wls_reduces_to_deterministic_in_dirac_limit():
    nu = log_frequency_grid(12, 100, 16000)
    theta = math.radians(40.0)
    dirac0 = CircularDistribution(0.0, 1e-6)
    dirac = CircularDistribution(theta, 1e-6)
    np.testing.assert_allclose(quotient_wls(MODEL, dirac0, dirac, nu),
                               quotient_deterministic(MODEL, theta, nu), rtol=1e-5)


def test_deterministic_quotient_on_axis_is_one():
    nu = log_frequency_grid(20)
    np.testing.assert_allclose(quotient_deterministic(MODEL, 0.0, nu), 1.0, atol=1e-12)


def test_deterministic_quotient_rejects_null():
    null_model = ParametricDirectivity(a=0.0, lobe=0.0)
    with pytest.raises(NearNullError):
        quotient_deterministic(null_model, math.pi / 2, 10000.0)


def test_power_quotient_applies_window_floor():
    nu = np.array([2000.0, 12000.0])
    narrow = CircularDistribution.from_degrees(60.0, 20.0)
    floor = CircularDistribution.from_degrees(60.0, 45.0)
    np.testing.assert_allclose(quotient_power(MODEL, AXIAL, narrow, nu),
                               quotient_power(MODEL, AXIAL, floor, nu), rtol=1e-12)
    wide = CircularDistribution.from_degrees(60.0, 80.0)
    assert not np.allclose(quotient_power(MODEL, AXIAL, wide, nu),
                           quotient_power(MODEL, AXIAL, floor, nu))
    q = quotient_power(MODEL, AXIAL, wide, nu)
    assert np.all(np.isreal(q)) and np.all(q > 0)


# -- distance model -------------------------------------------------------------

@given(st.floats(0.1, 20), st.floats(0.01, 100), st.floats(-6, 0))
def test_distance_gain_unity_at_reference(D, dc, gamma):
    assert distance_gain(DistanceModel(dc, gamma), D, D) == 1.0


def test_distance_gain_limits():
    r = np.array([0.5, 1.0, 2.0, 7.0])
    np.testing.assert_allclose(distance_gain(DistanceModel.anechoic(), r, 2.0), r / 2.0, rtol=1e-6)
    np.testing.assert_allclose(distance_gain(DistanceModel(1e-9, 0.0), r, 2.0), 1.0, rtol=1e-6)


@given(st.floats(0.1, 10), st.floats(0.05, 20), st.floats(-6, 0), st.floats(0.1, 10),
       st.floats(0.1, 10))
def test_distance_gain_increases_with_distance(D, dc, gamma, r1, r2):
    if abs(r1 - r2) < 1e-6 * max(r1, r2):
        return
    lo, hi = sorted((r1, r2))
    m = DistanceModel(dc, gamma)
    assert distance_gain(m, hi, D) > distance_gain(m, lo, D)


def test_distance_model_validation():
    with pytest.raises(InvalidArgument):
        DistanceModel(d_c=0.0)
    with pytest.raises(InvalidArgument):
        DistanceModel(gamma=1.0)
    with pytest.raises(InvalidArgument):
        distance_gain(DistanceModel(), 1.0)
    with pytest.raises(InvalidArgument):
        distance_gain(DistanceModel(), -1.0, 1.0)


def test_estimate_delay_of_pure_delay():
    f = log_frequency_grid(64)
    assert estimate_delay(np.exp(-2j * np.pi * f * 5e-5), f) == pytest.approx(5e-5, rel=1e-9)
    assert estimate_delay(np.ones(1), f[:1]) == 0.0


# -- assembly -------------------------------------------------------------------

def _layout():
    return Layout([
        Loudspeaker.polar(math.radians(0.0), 1.5),
        Loudspeaker.polar(math.radians(100.0), 2.0, orientation=math.radians(100.0 + 180.0 + 15.0)),
        Loudspeaker.polar(math.radians(-120.0), 2.5, orientation=math.radians(60.0 - 20.0)),
    ])


@pytest.fixture(scope="module")
def det_result():
    grid = log_frequency_grid(80)
    return build_normalization(_layout(), MODEL, mode="deterministic", grid=grid,
                               distance_model=DistanceModel.anechoic(), order=(16, 16), lawson=5)


def test_normalized_direct_paths_share_common_target(det_result):
    res = det_result
    grid = res.grid
    k = Wavenumber(grid)
    H = np.vstack([transfer_function(s, MODEL, k) for s in _layout()]) * res.response()
    target = (MODEL.acoustic(grid, 0.0) * np.exp(-1j * k.kappa * res.common_distance)
              / res.reference_distance / res.common_allpass())
    tol = 20 * max(s.fit_residual for s in res.speakers) + 1e-9
    for row in H:
        assert np.max(np.abs(row / target - 1)) < max(tol, 1e-3)


def test_headroom_is_reciprocal_gain(det_result):
    np.testing.assert_allclose(det_result.headroom * np.abs(det_result.response()), 1.0, rtol=1e-12)


def test_all_pass_parts_have_unit_magnitude(det_result):
    dense = np.linspace(1.0, 23999.0, 5000)
    np.testing.assert_allclose(np.abs(det_result.common_allpass(dense)), 1.0, atol=1e-9)
    for s in det_result.speakers:
        np.testing.assert_allclose(np.abs(s.factorization.stable_allpass.response(dense)), 1.0,
                                   atol=1e-9)
        np.testing.assert_allclose(np.abs(s.remainder.response(dense)), 1.0, atol=1e-9)


def test_normalization_filters_are_stable(det_result):
    for s in det_result.speakers:
        f = s.factorization
        assert all(abs(p) < 1 for p in f.min_phase.poles)
        assert all(abs(p) < 1 for p in f.stable_allpass.poles)
        # 1 / remainder has poles at 1/conj(p) of the unstable remainder factors
        assert all(abs(p) > 1 for p in s.remainder.poles)


def test_power_mode_builds_with_distributions():
    lay = _layout()
    dists = [CircularDistribution.from_degrees(a, 90.22) for a in (0.0, -15.0, 20.0)]
    res = build_normalization(lay, MODEL, dists=dists, mode="power", order=(8, 8))
    assert res.mode == "power"
    assert res.response().shape == (3, res.grid.size)
    assert all(s.fit_residual < 1e-2 for s in res.speakers)


def test_build_rejects_bad_arguments():
    lay = _layout()
    with pytest.raises(InvalidArgument):
        build_normalization(lay, MODEL, mode="wls")
    with pytest.raises(InvalidArgument):
        build_normalization(lay, MODEL, mode="magic")
    with pytest.raises(InvalidArgument):
        build_normalization(lay, MODEL, dists=[CircularDistribution(0, 1)], mode="power")


def test_build_reports_failing_speaker():
    null_model = ParametricDirectivity(a=0.0, lobe=0.0)
    dists = [CircularDistribution(0.0, 0.5), CircularDistribution(math.pi / 2, 0.5),
             CircularDistribution(0.0, 0.5)]
    with pytest.raises(NearNullError, match="speaker 1"):
        build_normalization(_layout(), null_model, dists=dists, mode="deterministic")


def test_dirac_window_sifts():
    w = CircularDistribution(math.radians(50), 1e-6)
    for nu in (500.0, 12000.0):
        s = MODEL.acoustic(nu, w.mu)
        assert windowed_average(MODEL, w, nu) == pytest.approx(s, rel=1e-8)
        assert windowed_average(MODEL, w, nu, "power") == pytest.approx(abs(s) ** 2, rel=1e-8)


def test_deterministic_quotient_direct_ratio():
    q = quotient_deterministic(MODEL, math.pi / 2, 8000.0)
    assert q == pytest.approx(MODEL.acoustic(8000.0, 0.0) / MODEL.acoustic(8000.0, math.pi / 2),
                              rel=1e-14)
    np.testing.assert_allclose(quotient_deterministic(Isotropic(), 1.3, log_frequency_grid(5)), 1)


def test_wls_self_window_obeys_cauchy_schwarz():
    real_model = ParametricDirectivity(lobe=0.0, a=0.6)   # b > 0 everywhere: S real-positive
    w = CircularDistribution.from_degrees(0.0, 60.0)
    nu = np.array([100.0, 3000.0, 15000.0])
    q = quotient_wls(real_model, w, w, nu)
    assert np.all(q.real <= 1 + 1e-12) and np.allclose(q.imag, 0)
    assert q[0] == pytest.approx(1.0, abs=1e-9)  # exponent 0 at 100 Hz: S constant
    assert q[-1] < 1
    assert quotient_wls(Isotropic(), w, w, 1000.0) == pytest.approx(1.0)


def test_wls_quotient_on_random_table(rng):
    from panorm.speaker_field import TabulatedDirectivity
    th = np.linspace(-math.pi, math.pi, 25)[:-1]
    vals = (1.0 + 0.5 * rng.standard_normal((2, th.size))
            + 0.3j * rng.standard_normal((2, th.size)))
    table = TabulatedDirectivity(np.array([100.0, 10000.0]), th, vals)
    listener = CircularDistribution(rng.uniform(-3, 3), rng.uniform(0.3, 1.2))
    axial = CircularDistribution(0.0, 0.4396)
    nu = 4000.0
    target = windowed_average(table, axial, nu)
    X = quotient_wls(table, axial, listener, nu)
    ref = wls_scan(lambda t: table.acoustic(nu, t), target, listener.mu, listener.ell)
    assert abs(X - ref) < 1e-4


def test_power_quotient_self_window_is_one():
    w = CircularDistribution.from_degrees(0.0, 60.0)
    np.testing.assert_allclose(quotient_power(MODEL, w, w, log_frequency_grid(8)), 1.0, rtol=1e-12)


def test_calibration_quotients_sharpen():
    from panorm.bench.scenarios import ScenarioConfig, run_bayes_walkthrough
    _, curves = run_bayes_walkthrough(ScenarioConfig(grid_points=32))
    hf = [r for r in curves.rows if r["freq_hz"] > 5000]
    for row in hf[:3]:
        q = [row[f"q_{t}"] for t in range(4)]
        assert np.all(np.diff(q) > 0)


def test_single_isotropic_speaker_is_identity():
    lay = Layout([Loudspeaker.polar(0.0, 1.0)])
    res = build_normalization(lay, Isotropic(), mode="deterministic",
                              distance_model=DistanceModel.anechoic(), order=(2, 2))
    np.testing.assert_allclose(res.response(), 1.0, atol=1e-9)
    np.testing.assert_allclose(res.headroom, 1.0, atol=1e-9)


def test_two_isotropic_speakers_delay_and_headroom():
    lay = Layout([Loudspeaker.polar(0.3, 1.0), Loudspeaker.polar(-1.0, 2.0)])
    res = build_normalization(lay, Isotropic(), mode="deterministic",
                              distance_model=DistanceModel.anechoic(D=1.5), order=(2, 2))
    G = res.response()
    k = Wavenumber(res.grid)
    np.testing.assert_allclose(G[0], (1 / 1.5) * np.exp(-1j * k.kappa * 1.0), rtol=1e-9)
    np.testing.assert_allclose(G[1], 2 / 1.5, rtol=1e-9)
    np.testing.assert_allclose(res.headroom[0] / res.headroom[1], 2.0, rtol=1e-9)


def test_identical_geometry_gives_identical_filters():
    a = Loudspeaker.polar(0.5, 1.7, orientation=0.5 + math.pi + 0.2)
    lay = Layout([a, Loudspeaker(a.position, a.orientation)])
    res = build_normalization(lay, MODEL, mode="deterministic", order=(8, 8))
    np.testing.assert_array_equal(res.response()[0], res.response()[1])
    np.testing.assert_array_equal(res.headroom[0], res.headroom[1])
