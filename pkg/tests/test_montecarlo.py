import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from biphoton_eraser.amplitudes import Detector
from biphoton_eraser.errors import InvalidParameterError, SamplingError
from biphoton_eraser.events import format_events
from biphoton_eraser.montecarlo import (ScanSpec, SimConfig, branch_probabilities,
                                        rejection_sample_indices, sample_pair, simulate)
from biphoton_eraser.params import ApparatusGeometry


def noiseless(**kw):
    base = dict(pairs=20_000, jitter_sigma=0.0, dark_rate_per_detector=0.0)
    base.update(kw)
    return SimConfig(**base)


def test_branch_probabilities_at_center(geometry):
    p = branch_probabilities(geometry, 0.0)
    assert p[Detector.D1] == pytest.approx(0.5, abs=1e-15)
    assert p[Detector.D2] == pytest.approx(0.0, abs=1e-15)
    assert p[Detector.D3] == pytest.approx(0.25, abs=1e-15)
    assert p[Detector.D4] == pytest.approx(0.25, abs=1e-15)


@settings(max_examples=100)
@given(st.floats(-3e-3, 3e-3), st.booleans())
def test_branch_probabilities_normalized(x, corrections):
    p = branch_probabilities(ApparatusGeometry(), x, corrections)
    values = np.array(list(p.values()))
    assert np.all(values >= -1e-15)
    assert values.sum() == pytest.approx(1.0, abs=1e-12)
    assert p[Detector.D3] == pytest.approx(0.25, abs=1e-12)


def test_branch_probabilities_on_envelope_null(geometry):
    p = branch_probabilities(geometry, geometry.envelope_null)
    assert sum(p.values()) == pytest.approx(1.0)


def test_determinism():
    cfg = SimConfig(pairs=30_000, seed=11)
    a, _ = simulate(cfg)
    b, _ = simulate(cfg)
    digest = [hashlib.sha256(format_events(s).encode()).hexdigest() for s in (a, b)]
    assert digest[0] == digest[1]
    c, _ = simulate(SimConfig(pairs=30_000, seed=12))
    assert hashlib.sha256(format_events(c).encode()).hexdigest() != digest[0]


def test_workers_do_not_change_output():
    cfg = SimConfig(pairs=30_000, seed=5)
    a, _ = simulate(cfg, workers=1)
    b, _ = simulate(cfg, workers=4)
    assert format_events(a) == format_events(b)


def test_scan_bookkeeping():
    cfg = noiseless(pairs=51 * 20_000)
    events, summary = simulate(cfg)
    assert len(summary.pairs_per_step) == 51
    assert summary.clicks["D0"] == 1_020_000
    assert sum(summary.clicks[f"D{j}"] for j in range(1, 5)) == 1_020_000
    settings_um = set(cfg.scan.settings_um().tolist())
    assert set(np.unique(events.x_um[events.detector == 0]).tolist()) <= settings_um


def test_stream_is_time_ordered():
    events, _ = simulate(SimConfig(pairs=20_000))
    t = events.time_ps
    assert np.all(np.diff(t) >= 0)
    ties = np.diff(t) == 0
    assert np.all(np.diff(events.event_id.astype(np.int64))[ties] > 0)


def test_d2_dark_at_center_fixed_position():
    cfg = SimConfig(pairs=1_000_000, scan=ScanSpec.fixed(0.0))
    _, summary = simulate(cfg)
    # only dark counts reach D2 at x = 0
    assert summary.clicks["D2"] == summary.dark_clicks["D2"]
    assert summary.clicks["D2"] / sum(summary.clicks.values()) <= 1e-3


def test_branch_fractions_multinomial_at_fixed_x(geometry):
    x = 0.1e-3
    cfg = noiseless(pairs=1_000_000, scan=ScanSpec.fixed(x))
    _, summary = simulate(cfg)
    p = branch_probabilities(geometry, x)
    n = cfg.pairs
    for det, pj in p.items():
        sd = math.sqrt(n * pj * (1 - pj))
        assert abs(summary.clicks[det.name] - n * pj) <= 3 * sd + 1


def test_gap_distribution_is_gaussian():
    sigma = 1e-9
    events, _ = simulate(SimConfig(pairs=100_000, jitter_sigma=sigma, dark_rate_per_detector=0.0))
    order = np.argsort(events.event_id)
    t = events.time_ps[order].astype(float)
    gaps = t[1::2] - t[0::2]
    delay_ps = round(ApparatusGeometry().delay * 1e12)
    res = stats.kstest(gaps, "norm", args=(delay_ps, math.sqrt(2) * sigma * 1e12))
    assert res.pvalue > 0.01


def test_noiseless_gap_is_exact():
    events, _ = simulate(noiseless(pairs=5_000))
    order = np.argsort(events.event_id)
    t = events.time_ps[order]
    gaps = t[1::2] - t[0::2]
    assert np.all(gaps == round(ApparatusGeometry().delay * 1e12))


def test_efficiency_thins_clicks():
    cfg = noiseless(pairs=50_000, efficiency=(0.5, 1.0, 1.0, 1.0, 1.0))
    _, summary = simulate(cfg)
    assert abs(summary.clicks["D0"] - 25_000) < 5 * math.sqrt(12_500)
    assert sum(summary.clicks[f"D{j}"] for j in range(1, 5)) == 50_000


def test_dark_counts_poisson():
    cfg = SimConfig(pairs=10_000, dark_rate_per_detector=1e4)
    _, summary = simulate(cfg)
    expected = 1e4 * summary.duration_ps * 1e-12
    for n in summary.dark_clicks.values():
        assert abs(n - expected) < 5 * math.sqrt(expected)


def test_sample_pair():
    cfg = SimConfig(jitter_sigma=0.0)
    rng = np.random.Generator(np.random.Philox(3))
    d0, idler, t_emit = sample_pair(rng, cfg, pair_index=4)
    assert d0.event_id == 8 and idler.event_id == 9
    assert idler.time_ps - d0.time_ps == round(cfg.geometry.delay * 1e12)
    assert d0.x_um in set(cfg.scan.settings_um().tolist())
    d0, idler, _ = sample_pair(rng, cfg, x_setting=0.0, t_prev=t_emit)
    assert d0.x_um == 0 and idler.detector != Detector.D2


def test_rejection_sampler_matches_weights():
    rng = np.random.Generator(np.random.Philox(1))
    w = np.array([1.0, 2.0, 3.0, 4.0])
    idx = rejection_sample_indices(rng, w, 100_000, 4.04)
    freq = np.bincount(idx, minlength=4) / idx.size
    np.testing.assert_allclose(freq, w / w.sum(), atol=0.005)


def test_rejection_sampler_budget():
    rng = np.random.Generator(np.random.Philox(1))
    with pytest.raises(SamplingError):
        rejection_sample_indices(rng, np.array([1e-9, 0.0]), 10, 1.0, max_proposals=100)
    with pytest.raises(SamplingError):
        rejection_sample_indices(rng, np.array([2.0]), 10, 1.0)


def test_zero_pairs_without_darks_is_empty():
    events, summary = simulate(noiseless(pairs=0))
    assert len(events) == 0
    assert summary.pairs_emitted == 0 and summary.duration_ps == 0
    assert set(summary.clicks.values()) == {0}


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        SimConfig(pairs=-1)
    with pytest.raises(InvalidParameterError):
        SimConfig(jitter_sigma=-1.0)
    with pytest.raises(InvalidParameterError):
        ScanSpec(1e-3, -1e-3, 50e-6)
    assert SimConfig().steps == 51
