import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from biphoton_eraser.amplitudes import Detector
from biphoton_eraser.errors import FitDegenerateError, InvalidParameterError
from biphoton_eraser.fringe_model import (BRANCH_WEIGHTS, FringeFit, apply_detector_aperture,
                                          apply_pump_divergence, channel_rates, envelope,
                                          expected_visibility_factor, fit_fringe,
                                          oracle_crosscheck, phase_shift_error, rate_r01,
                                          rate_r02, rate_r03, rate_r04, sinc, wrap_phase)
from biphoton_eraser.params import ApparatusGeometry


def _quad_sinc(u):
    # sin(u)/u as the mean of cos(u t) over [0, 1]
    return quad(lambda t: math.cos(u * t), 0.0, 1.0)[0]


def pure_fringe(g, periods=12, per_period=512, phase=0.0):
    lam = g.fringe_period
    x = (np.arange(periods * per_period) - periods * per_period / 2) * lam / per_period
    return x, 1.0 + np.cos(2 * math.pi * x / lam + phase)


def fit_interior(g, x, y, margin_periods=3):
    keep = np.abs(x) <= np.max(np.abs(x)) - margin_periods * g.fringe_period
    return fit_fringe(x[keep], y[keep], g, envelope_curve=np.ones(keep.sum()),
                      sigma=np.ones(keep.sum()), min_counts=0)


def test_first_fringe_zero_and_envelope_null(geometry):
    # lambda f / 2d and lambda f / a for 702.2 nm, 0.5 m, d = 0.7 mm, a = 0.3 mm
    assert geometry.fringe_period / 2 == pytest.approx(0.2508e-3, abs=1e-7)
    assert geometry.envelope_null == pytest.approx(1.1703e-3, abs=1e-7)
    assert rate_r01(geometry.fringe_period / 2, geometry) < 1e-28
    assert envelope(geometry.envelope_null, geometry) < 1e-28


def test_r02_at_half_period_matches_quadrature(geometry):
    x = geometry.fringe_period / 2
    u = math.pi * x * geometry.slit_width_a / (geometry.lambda_signal * geometry.focal_f)
    expected = _quad_sinc(u) ** 2
    assert expected == pytest.approx(0.8577733027, abs=1e-9)
    assert rate_r02(x, geometry) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("u", [0.0, 1e-9, 1e-5, 1e-4, 0.3, 2.0, 17.5])
def test_sinc_against_quadrature(u):
    assert sinc(u) == pytest.approx(_quad_sinc(u), rel=1e-13, abs=1e-15)


@settings(max_examples=200)
@given(st.floats(-5e-3, 5e-3))
def test_eraser_pair_sums_to_which_path_pair(x):
    g = ApparatusGeometry()
    # raw R01 + R02 is the envelope; R03, R04 are each the envelope
    lhs = rate_r01(x, g) + rate_r02(x, g)
    rhs = 0.5 * (rate_r03(x, g) + rate_r04(x, g))
    assert abs(lhs - rhs) <= 1e-15
    assert abs(lhs - envelope(x, g)) <= 1e-15


@settings(max_examples=100)
@given(st.floats(-5e-3, 5e-3))
def test_rates_even_and_fringe_periodic(x):
    g = ApparatusGeometry()
    for fn in (rate_r01, rate_r02, rate_r03):
        assert fn(x, g) == pytest.approx(fn(-x, g), rel=1e-12, abs=1e-300)
    lam = g.fringe_period
    env, env2 = envelope(x, g), envelope(x + lam, g)
    if env > 1e-6 and env2 > 1e-6:
        assert rate_r01(x, g) / env == pytest.approx(rate_r01(x + lam, g) / env2, abs=1e-9)


def test_offsets_shift_which_path_channels():
    g = ApparatusGeometry(offset_d3=20e-6)
    assert rate_r03(20e-6, g) == pytest.approx(1.0)
    assert rate_r04(0.0, g) == pytest.approx(1.0)


def test_channel_rates_branch_weighted_sum(geometry):
    x = np.linspace(-1.25e-3, 1.25e-3, 101)
    r = channel_rates(x, geometry)
    np.testing.assert_allclose(sum(r.values()), envelope(x, geometry), atol=1e-15)
    assert BRANCH_WEIGHTS[Detector.D3] == 0.25


def test_channel_rates_with_corrections_keep_the_identity(geometry):
    x = np.arange(-1250, 1251, 50) * 1e-6
    r = channel_rates(x, geometry, corrections=True)
    np.testing.assert_allclose(r[Detector.D1] + r[Detector.D2], r[Detector.D3] + r[Detector.D4],
                               atol=1e-14)


def test_aperture_visibility_factor(geometry):
    x, y = pure_fringe(geometry)
    w = geometry.fringe_period / 4
    fit = fit_interior(geometry, x, apply_detector_aperture(x, y, w))
    assert fit.visibility == pytest.approx(_quad_sinc(math.pi / 4), abs=2e-3)
    assert fit.visibility == pytest.approx(0.9003, abs=2e-3)


def test_divergence_visibility_factor(geometry):
    x, y = pure_fringe(geometry)
    sigma = geometry.fringe_period / (2 * math.pi)
    fit = fit_interior(geometry, x, apply_pump_divergence(x, y, sigma))
    assert fit.visibility == pytest.approx(math.exp(-0.5), abs=2e-3)


def test_wide_divergence_washes_out(geometry):
    x, y = pure_fringe(geometry, periods=40, per_period=64)
    out = apply_pump_divergence(x, y, geometry.fringe_period)
    fit = fit_interior(geometry, x, out, margin_periods=12)
    assert fit.visibility < 1e-8


def test_corrections_commute(geometry):
    x, y = pure_fringe(geometry, periods=8, per_period=256)
    w, s = geometry.detector_aperture_w, geometry.pump_divergence_sigma
    a = apply_pump_divergence(x, apply_detector_aperture(x, y, w), s)
    b = apply_detector_aperture(x, apply_pump_divergence(x, y, s), w)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_aperture_preconditions(geometry):
    x, y = pure_fringe(geometry, periods=4, per_period=8)
    with pytest.raises(InvalidParameterError):
        apply_detector_aperture(x, y, 4 * (x[1] - x[0]))
    np.testing.assert_array_equal(apply_detector_aperture(x, y, x[1] - x[0]), y)
    np.testing.assert_array_equal(apply_pump_divergence(x, y, 0.0), y)


def test_expected_factor(geometry):
    assert expected_visibility_factor(geometry, False) == 1.0
    lam = geometry.fringe_period
    expected = (_quad_sinc(math.pi * geometry.detector_aperture_w / lam)
                * math.exp(-2 * math.pi ** 2 * (geometry.pump_divergence_sigma / lam) ** 2))
    assert expected_visibility_factor(geometry) == pytest.approx(expected, rel=1e-12)


def test_fit_recovers_analytic_phases(geometry):
    x = np.arange(-1250, 1251, 10) * 1e-6
    f1 = fit_fringe(x, 1e5 * rate_r01(x, geometry), geometry)
    f2 = fit_fringe(x, 1e5 * rate_r02(x, geometry), geometry)
    assert f1.visibility == pytest.approx(1.0, abs=1e-9)
    assert f2.visibility == pytest.approx(1.0, abs=1e-9)
    assert abs(wrap_phase(f1.phase)) < 1e-9
    assert abs(abs(f2.phase) - math.pi) < 1e-9
    assert phase_shift_error(f1.phase, f2.phase) < 1e-9
    f3 = fit_fringe(x, 1e5 * rate_r03(x, geometry), geometry)
    assert f3.visibility < 1e-9


def test_fit_poisson_fringe(geometry):
    rng = np.random.default_rng(7)
    x = np.arange(-1250, 1251, 25) * 1e-6
    mean = rate_r01(x, geometry)
    counts = rng.poisson(1e6 * mean / mean.sum())
    fit = fit_fringe(x, counts, geometry)
    assert fit.visibility == pytest.approx(1.0, abs=0.01)
    assert 0.5 < fit.chi2 / fit.dof < 1.6
    assert fit.visibility_err < 0.01


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-3.0, 3.0))
def test_fit_recovers_synthetic_visibility(v, phi):
    g = ApparatusGeometry()
    x = np.arange(-1250, 1251, 25) * 1e-6
    k = 2 * math.pi / g.fringe_period
    y = 1e4 * envelope(x, g) * (1 + v * np.cos(k * x + phi))
    fit = fit_fringe(x, y, g, sigma=np.ones_like(x))
    assert fit.visibility == pytest.approx(v, abs=1e-9)
    if v > 1e-3:
        assert abs(wrap_phase(fit.phase - phi)) < 1e-6


def test_fit_degenerate_inputs(geometry):
    x = np.arange(-1250, 1251, 50) * 1e-6
    with pytest.raises(FitDegenerateError, match="insufficient counts"):
        fit_fringe(x, np.zeros(x.size), geometry)
    with pytest.raises(FitDegenerateError):
        fit_fringe(x[:5], np.full(5, 1e4), geometry)
    narrow = np.linspace(0, 0.5e-3, 20)
    with pytest.raises(FitDegenerateError) as err:
        fit_fringe(narrow, np.full(20, 1e4), geometry)
    assert err.value.diagnostics["bins"] == 20


def test_fringe_fit_validation():
    with pytest.raises(InvalidParameterError):
        FringeFit(visibility=1.5, phase=0.0, period=1e-3, envelope_scale=1.0, residual_rms=0.0)


def test_wrap_phase_range():
    assert wrap_phase(-math.pi) == math.pi
    assert wrap_phase(3 * math.pi) == pytest.approx(math.pi)
    assert phase_shift_error(0.1, 0.1 + math.pi + 2 * math.pi) == pytest.approx(0.0, abs=1e-12)


def test_oracle_agrees_with_closed_forms(geometry, packet):
    assert oracle_crosscheck(geometry, packet, n_points=32) < 1e-9
