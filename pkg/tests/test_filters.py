import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import signal

from panorm.errors import AmbiguousRootError, ClusteringError, FitError, InvalidArgument
from panorm.filters import (
    AllPassFactorSet,
    RationalFilter,
    factorize,
    fit_rational,
    lcm_allpass,
    lcm_remainder,
    pole_distance,
)

FS = 48000.0
FREQS = np.geomspace(20.0, 20000.0, 200)


def freqz_response(filt, freqs):
    b = filt.gain * np.poly(filt.zeros) if filt.zeros else np.array([filt.gain])
    a = np.poly(filt.poles) if filt.poles else np.array([1.0])
    _, h = signal.freqz(b, a, worN=freqs, fs=filt.sample_rate)
    return h * np.exp(-2j * np.pi * freqs * filt.delay)


def random_filter(rng, nz, np_, radius=(0.3, 1.6)):
    def roots(n):
        out = []
        while len(out) < n:
            r = rng.uniform(*radius)
            if abs(r - 1) < 0.05:
                continue
            if n - len(out) >= 2 and rng.random() < 0.7:
                z = r * np.exp(1j * rng.uniform(0.05, 3.0))
                out += [z, np.conj(z)]
            else:
                out.append(r * rng.choice([-1.0, 1.0]))
        return out
    return RationalFilter(rng.uniform(0.5, 2.0), roots(nz), roots(np_), 0.0, FS)


def test_response_matches_freqz(rng):
    for _ in range(10):
        f = random_filter(rng, 4, 4)
        np.testing.assert_allclose(f.response(FREQS), freqz_response(f, FREQS), rtol=1e-9)


def test_fit_recovers_known_filter(rng):
    for _ in range(5):
        true = random_filter(rng, 4, 4, radius=(0.3, 0.9))
        fit = fit_rational(true.response(FREQS), FREQS, order=(4, 4), sample_rate=FS)
        assert fit.residual < 1e-8
        np.testing.assert_allclose(freqz_response(fit, FREQS), true.response(FREQS), rtol=1e-6)


def test_fit_fir_and_strictly_proper_orders(rng):
    true = RationalFilter(1.0, [0.5, -0.3, 0.2 + 0.4j, 0.2 - 0.4j], (), 0.0, FS)
    fir = fit_rational(true.response(FREQS), FREQS, order=(4, 0))
    assert fir.residual < 1e-10
    # the (n-1, n) class is strictly proper in z: one sample of delay
    true = RationalFilter(0.7, [0.4, -0.6], [0.8, 0.5 + 0.3j, 0.5 - 0.3j], 1 / FS, FS)
    fit = fit_rational(true.response(FREQS), FREQS, order=(2, 3))
    assert fit.residual < 1e-8
    assert fit.delay == pytest.approx(1 / FS)


def test_fit_is_deterministic(rng):
    target = random_filter(rng, 3, 3).response(FREQS) * (1 + 0.01 * np.sin(FREQS / 300))
    a = fit_rational(target, FREQS, order=(6, 6))
    b = fit_rational(target, FREQS, order=(6, 6))
    assert a == b


def test_lawson_does_not_raise_peak_error(rng):
    target = 1.0 + 0.3 * np.cos(np.log(FREQS)) + 0.1j * np.sin(2 * np.log(FREQS))
    plain = fit_rational(target, FREQS, order=(6, 6))
    mm = fit_rational(target, FREQS, order=(6, 6), lawson=10)
    peak = lambda f: np.max(np.abs(f.response(FREQS) - target) / np.abs(target))
    assert peak(mm) <= peak(plain) * (1 + 1e-12)


def test_fit_input_validation():
    y = np.ones(FREQS.size, dtype=complex)
    with pytest.raises(InvalidArgument):
        fit_rational(y, FREQS, order=(5, 3))
    with pytest.raises(InvalidArgument):
        fit_rational(y[:4], FREQS[:4], order=(4, 4))
    with pytest.raises(InvalidArgument):
        fit_rational(y, FREQS * 10, order=(2, 2))
    with pytest.raises(InvalidArgument):
        fit_rational(np.zeros_like(y), FREQS, order=(2, 2))


def test_fit_raises_on_residual_bound():
    y = np.exp(-2j * np.pi * FREQS * 0.01)  # 10 ms pure delay: far beyond order 2
    with pytest.raises(FitError) as info:
        fit_rational(y, FREQS, order=(2, 2), max_residual=1e-3)
    assert info.value.residual > 1e-3


def test_factorization_reconstructs_filter_and_all_passes_are_unit(rng):
    for _ in range(20):
        f = random_filter(rng, 6, 6)
        fac = factorize(f)
        np.testing.assert_allclose(fac.response(FREQS), freqz_response(f, FREQS), rtol=1e-9)
        dense = np.linspace(1.0, FS / 2 - 1.0, 4001)
        np.testing.assert_allclose(np.abs(fac.stable_allpass.response(dense)), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.abs(fac.unstable_allpass.response(dense)), 1.0, atol=1e-9)
        assert all(abs(z) < 1 for z in fac.min_phase.zeros)
        assert all(abs(p) < 1 for p in fac.min_phase.poles)
        assert all(abs(p) > 1 for p in fac.unstable_allpass.poles)
        assert all(abs(p) < 1 for p in fac.stable_allpass.poles)


def test_unstable_allpass_is_causal_and_anti_stable():
    p = 1.25 + 0.2j
    ap = AllPassFactorSet(((p, 1),))
    # (z^-1 - p*)/(1 - p z^-1) has its pole at z = p
    b = np.array([-np.conj(p), 1.0])
    a = np.array([1.0, -p])
    _, h = signal.freqz(b, a, worN=FREQS, fs=FS)
    np.testing.assert_allclose(ap.response(FREQS), h, rtol=1e-12)


def test_factorize_rejects_roots_on_circle():
    f = RationalFilter(1.0, [np.exp(0.3j), np.exp(-0.3j)], [0.5, 0.2])
    with pytest.raises(AmbiguousRootError):
        factorize(f)


def test_pole_distance_metrics():
    assert pole_distance(1.5, 1.5 + 1e-3) == pytest.approx(1e-3)
    near = [1 + 1e-5, (1 + 1e-5) * np.exp(5e-5j)]
    assert pole_distance(*near) < 1e-4 < pole_distance(*near, metric="hyperbolic")
    with pytest.raises(InvalidArgument):
        pole_distance(1.5, 1.6, metric="taxicab")


def test_lcm_takes_max_multiplicity_and_remainders_are_stable():
    a = AllPassFactorSet(((1.5, 2), (1.2 + 0.5j, 1), (1.2 - 0.5j, 1)))
    b = AllPassFactorSet(((1.5 + 1e-6, 1), (2.0, 1)))
    lcm = lcm_allpass([a, b])
    mult = sorted(k for _, k in lcm.factors)
    assert mult == [1, 1, 1, 2]
    for own in (a, b):
        rem = lcm_remainder(own, lcm)
        # own / lcm == 1 / rem: the remainder all-pass is divided out
        np.testing.assert_allclose(own.response(FREQS) * rem.response(FREQS),
                                   lcm.response(FREQS), rtol=1e-4)
        assert sum(k for _, k in rem.factors) == sum(k for _, k in lcm.factors) - sum(
            k for _, k in own.factors)


def test_lcm_rejects_ambiguous_clusters():
    a = AllPassFactorSet(((1.5, 1), (1.5 + 1e-6, 1)))
    with pytest.raises(ClusteringError):
        lcm_allpass([a])


@given(st.lists(st.tuples(st.floats(1.05, 3.0), st.floats(0.0, 3.1), st.integers(1, 3)),
                min_size=0, max_size=4))
def test_lcm_of_single_set_is_itself(entries):
    facs = []
    for r, t, k in entries:
        p = complex(r * np.exp(1j * t))
        if all(abs(p - q) > 1e-2 for q, _ in facs):
            facs.append((p, k))
    s = AllPassFactorSet(tuple(facs))
    lcm = lcm_allpass([s])
    np.testing.assert_allclose(lcm.response(FREQS), s.response(FREQS), rtol=1e-12)
    assert len(lcm_remainder(s, lcm)) == 0


def test_constant_fit_has_no_roots():
    f = fit_rational(np.full(FREQS.size, 0.7 + 0j), FREQS, order=(0, 0))
    assert f.gain == pytest.approx(0.7) and f.order == (0, 0)


def test_two_pole_two_zero_roots_recovered():
    true = RationalFilter(1.3, [0.6 + 0.5j, 0.6 - 0.5j], [0.9 * np.exp(0.4j), 0.9 * np.exp(-0.4j)])
    fit = fit_rational(true.response(FREQS), FREQS, order=(2, 2))
    for mine, ref in ((fit.zeros, true.zeros), (fit.poles, true.poles)):
        np.testing.assert_allclose(sorted(mine, key=np.angle), sorted(ref, key=np.angle), atol=1e-6)


def test_minimum_phase_filter_has_identity_all_passes():
    f = RationalFilter(2.0, [0.5, -0.2 + 0.3j, -0.2 - 0.3j], [0.7, 0.1])
    fac = factorize(f)
    assert fac.stable_allpass.zeros == () and len(fac.unstable_allpass) == 0
    np.testing.assert_allclose(fac.stable_allpass.response(FREQS), 1.0)


def test_zero_outside_is_reflected_into_first_order_all_pass():
    fac = factorize(RationalFilter(1.0, [2.0], []))
    assert fac.min_phase.zeros == (0.5 + 0j,)
    # the reflected zero leaves a first-order all-pass with its pole at 0.5
    assert fac.stable_allpass.zeros == (2 + 0j,) and fac.stable_allpass.poles == (0.5 + 0j,)
    assert len(fac.unstable_allpass) == 0
    fac = factorize(RationalFilter(1.0, [], [2.0]))
    assert fac.min_phase.poles == (0.5 + 0j,)
    assert fac.unstable_allpass.factors == ((2 + 0j, 1),)


def test_random_sixth_order_reconstruction_dense(rng):
    dense = np.linspace(10.0, FS / 2 - 10.0, 512)
    for _ in range(10):
        f = random_filter(rng, 6, 6)
        rel = np.abs(factorize(f).response(dense) / f.response(dense) - 1)
        assert rel.max() < 1e-8


def test_lcm_examples():
    p1, p2 = 1.5 + 0.5j, -2.0
    lcm = lcm_allpass([AllPassFactorSet(((p1, 1),)), AllPassFactorSet(((p2, 1),))])
    assert sorted(lcm.factors, key=lambda f: abs(f[0])) == [(p1, 1), (p2, 1)]
    lcm = lcm_allpass([AllPassFactorSet(((p1, 2),)), AllPassFactorSet(((p1, 1),))])
    assert lcm.factors == ((p1, 2),)


def test_lcm_quotients_are_stable_for_random_sets(rng):
    base = [1.2 * np.exp(0.3j), 1.6 * np.exp(-1.1j), 2.5]
    sets = []
    for _ in range(3):
        pick = [(complex(p), int(rng.integers(1, 3))) for p in base if rng.random() < 0.7]
        sets.append(AllPassFactorSet(tuple(pick)))
    lcm = lcm_allpass(sets)
    for s in sets:
        rem = lcm_remainder(s, lcm)
        # own / lcm = 1 / rem: poles of 1/rem are the zeros 1/conj(p) of rem, inside the circle
        assert all(abs(1 / np.conj(p)) < 1 for p in rem.poles)
