import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microgrid_fopid.stochastic import (REPLICATE_STRIDE, Scenario, SwitchingSignal,
                                        export_csv, gamma_value, generate, load_profile,
                                        noise_factor, replicate_seed, solar_profile,
                                        standard_profiles, time_grid, wind_profile)


def test_wind_schedule_values():
    g = wind_profile().gamma
    assert gamma_value(g, 100.0) == pytest.approx(0.24)
    assert gamma_value(g, 150.0) == pytest.approx(0.20)


def test_solar_schedule_value():
    assert gamma_value(solar_profile().gamma, 200.0) == pytest.approx(0.07)
    assert solar_profile().gamma.onsets == [0.0, 180.0]


def test_load_schedule_divides_by_chi():
    g = load_profile().gamma
    assert gamma_value(g, 120.0, chi=1.0) == pytest.approx(0.95)
    assert gamma_value(g, 120.0, chi=2.0) == pytest.approx(0.93 / 2 + 0.02)
    with pytest.raises(ValueError):
        gamma_value(g, 120.0, chi=0.0)


def test_unsorted_onsets_rejected():
    with pytest.raises(ValueError):
        SwitchingSignal(((1.0, 5.0), (1.0, 2.0)))


def test_filters():
    w, s, l = standard_profiles()
    assert w.G.dc_gain() == pytest.approx(1.0)
    assert s.G.dc_gain() == pytest.approx(1.0)
    # parallel sum of 300/(300s+1) and 1/(1800s+1)
    for z in (0.01j, 0.3 + 1j, 2.0):
        assert l.G(z) == pytest.approx(300 / (300 * z + 1) + 1 / (1800 * z + 1))


def test_grid_length():
    assert time_grid(220.0, 0.01).size == 22001
    assert generate(wind_profile(), 220.0, 0.01, 0).size == 22001


def test_noise_off_equals_schedules_exactly():
    t = time_grid(220.0, 0.01)
    wind = generate(wind_profile(), 220.0, 0.01, 0, noise=False)
    assert np.all(wind[t < 140] == 0.24)
    assert np.all(wind[t >= 140] == 0.24 - 0.04)
    load = generate(load_profile(), 220.0, 0.01, 0, noise=False)
    seg = (t >= 110) & (t < 130)
    assert np.allclose(load[seg], 0.95, atol=1e-15)


def test_noise_off_jumps_only_at_onsets():
    t = time_grid(220.0, 0.01)
    for prof in standard_profiles():
        p = generate(prof, 220.0, 0.01, 0, noise=False)
        jumps = t[1:][np.abs(np.diff(p)) > 1e-12]
        assert set(np.round(jumps, 6)) <= set(prof.gamma.onsets)


def test_chi_mean_over_warmup_window():
    t = time_grid(220.0, 0.01)
    for seed in range(5):
        chi = noise_factor(wind_profile(), 220.0, 0.01, seed)
        assert abs(chi[t <= 100].mean() - 1.0) < 0.05


def test_chi_unbiased_across_seeds():
    means = [noise_factor(wind_profile(), 220.0, 0.01, s).mean() for s in range(100)]
    assert abs(np.mean(means) - 1.0) < 0.01


def test_chi_amplitude():
    # phi ~ U(-1, 1) scaled by eta*sqrt(beta)/beta; the slow G barely removes any of it
    chi = noise_factor(wind_profile(), 220.0, 0.01, 3)
    bound = 0.8 * np.sqrt(10) / 10
    assert np.max(np.abs(chi - 1)) <= bound * 1.01
    assert np.std(chi) == pytest.approx(bound / np.sqrt(3), rel=0.05)


def test_reproducible_and_distinct():
    a = generate(wind_profile(), 220.0, 0.01, 7)
    b = generate(wind_profile(), 220.0, 0.01, 7)
    c = generate(wind_profile(), 220.0, 0.01, 8)
    assert np.array_equal(a, b)
    digest = lambda x: hashlib.sha256(x.tobytes()).hexdigest()
    assert digest(a) != digest(c)


def test_replicate_seed_layout():
    assert replicate_seed(3, 7) == 3 * REPLICATE_STRIDE + 7 == 3_000_007


def test_scenario_streams_are_independent_and_frozen():
    w, s, l = Scenario().inputs(11)
    assert not w.flags.writeable
    cw = np.corrcoef(w[:10000] - w[:10000].mean(), l[:10000] - l[:10000].mean())[0, 1]
    assert abs(cw) < 0.05
    w2, _, _ = Scenario().inputs(11)
    assert np.array_equal(w, w2)


def test_rejects_bad_grid():
    with pytest.raises(ValueError):
        generate(wind_profile(), 0.0, 0.01, 0)


def test_export_csv(tmp_path):
    t = time_grid(1.0, 0.5)
    export_csv(tmp_path / "p.csv", t, [1, 2, 3], [4, 5, 6], [7, 8, 9])
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "t,P_wind,P_solar,P_load"
    assert len(rows) == 4


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 220), st.floats(0.5, 1.5))
def test_load_gamma_consistent_with_generated_series(t, chi):
    g = load_profile().gamma
    assert gamma_value(g, t, chi) * chi == pytest.approx(float(g.schedule(t)) + 0.02 * chi)
