import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tiny_profile
from oracles import utc
from specdemand.features import build_panel, correlation_report, kpi_table
from specdemand.quality import cleanse_kpis
from specdemand.schema import KPI_NAMES, REGULATORY_COLUMNS, SAMPLE_COLUMNS, ConfigError
from specdemand.spatial import aggregate, aggregate_proxy
from specdemand.synthgen import (CouplingSpec, RegionProfile, builtin_profiles,
                                 default_coupling, generate_region, get_coupling, get_profile,
                                 proxy_from_drivers, radial_density, validate_samples)
from specdemand.pipeline import window_spec


def test_same_inputs_give_identical_streams():
    p = tiny_profile()
    a = generate_region(p, default_coupling(), 11)
    b = generate_region(p, default_coupling(), 11)
    pd.testing.assert_frame_equal(a.samples, b.samples)
    pd.testing.assert_frame_equal(a.regulatory, b.regulatory)
    assert a.samples.to_csv(index=False) == b.samples.to_csv(index=False)


def test_worker_count_does_not_change_output():
    p = tiny_profile()
    a = generate_region(p, default_coupling(), 5, jobs=1)
    b = generate_region(p, default_coupling(), 5, jobs=2)
    pd.testing.assert_frame_equal(a.samples, b.samples)
    pd.testing.assert_frame_equal(a.regulatory, b.regulatory)


def test_different_seeds_differ():
    p = tiny_profile()
    a = generate_region(p, default_coupling(), 1)
    b = generate_region(p, default_coupling(), 2)
    assert not a.samples["ul_mbps"].equals(b.samples["ul_mbps"])


def test_csv_columns_are_exact():
    g = generate_region(tiny_profile(), default_coupling(), 0)
    assert tuple(g.samples.columns) == SAMPLE_COLUMNS
    assert tuple(g.regulatory.columns) == REGULATORY_COLUMNS


def test_zero_coupling_gives_constant_bandwidth():
    flat = CouplingSpec(noise_sigma=0.0, seasonal_amplitude=0.0, trend_per_quarter=0.0)
    p = tiny_profile()
    g = generate_region(p, flat, 4)
    assert np.all(g.proxy == g.proxy[:, :1])
    proxy = aggregate_proxy(g.regulatory, p.grid(), window_spec(p), p.n_windows)
    spread = proxy.groupby(["row", "col"])["deployed_bw_mhz"].agg(np.ptp)
    assert (spread < 1e-9).all()


def test_lag1_only_traffic_coupling_shows_up_at_lag1():
    c = CouplingSpec(weights_lag1={"traffic_volume": 10.0}, noise_sigma=1.0,
                     seasonal_amplitude=0.0, trend_per_quarter=0.0)
    p = tiny_profile(n=5, years=(2019, 2022))
    g = generate_region(p, c, 8)
    ws = window_spec(p)
    cells = aggregate(g.samples, p.grid(), ws)
    kpis, _ = cleanse_kpis(kpi_table(cells), p.n_windows)
    panel = build_panel(kpis, aggregate_proxy(g.regulatory, p.grid(), ws, p.n_windows))
    rep = correlation_report(panel)
    assert rep.coefficient("traffic_volume", 1) > rep.coefficient("traffic_volume", 0)


def test_noiseless_proxy_recovers_coupling_weights():
    c = CouplingSpec(weights_lag0={"signal_strength": 1.5, "tx_rx_ratio": -0.7},
                     weights_lag1={"traffic_volume": 10.0, "latency_ratio": 2.0},
                     weights_lag2={"jitter_variability": 3.0},
                     noise_sigma=0.0, seasonal_amplitude=0.8, trend_per_quarter=0.3)
    g = generate_region(tiny_profile(n=4, years=(2019, 2023)), c, 2)
    T = g.proxy.shape[1]
    t = np.arange(T)
    rows, ys = [], []
    for d, p in zip(g.drivers, g.proxy):
        X = np.column_stack([d[2 - lag:2 - lag + T] for lag in range(3)] +
                            [np.sin(2 * np.pi * t / 4), t, np.ones(T)])
        rows.append(X)
        ys.append(p)
    beta, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(ys), rcond=None)
    want = np.concatenate([c.weight_matrix().ravel(), [0.8, 0.3, c.base_bw_mhz]])
    np.testing.assert_allclose(beta, want, atol=1e-6)


def test_proxy_from_drivers_formula():
    c = CouplingSpec(weights_lag0={"traffic_volume": 1.0}, weights_lag2={"signal_strength": 2.0},
                     noise_sigma=0.5, seasonal_amplitude=1.0, trend_per_quarter=0.25,
                     base_bw_mhz=100.0)
    rng = np.random.default_rng(0)
    d = rng.standard_normal((8, len(KPI_NAMES)))
    noise = rng.standard_normal(6)
    got = proxy_from_drivers(d, c, noise)
    for t in range(6):
        want = (100.0 + d[t + 2, 0] + 2.0 * d[t, 4] + np.sin(np.pi * t / 2) + 0.25 * t
                + 0.5 * noise[t])
        assert got[t] == pytest.approx(want, abs=1e-12)


def test_samples_within_ranges_and_years():
    p = tiny_profile()
    g = generate_region(p, default_coupling(), 9)
    validate_samples(g.samples, p)
    ts = g.samples["timestamp"]
    assert ts.min() >= utc(2019, 1, 1) and ts.max() < utc(2021, 1, 1)
    assert (g.regulatory["deployed_bw_mhz"] > 0).all()


def test_builtin_presets():
    names = [p.name for p in builtin_profiles()]
    assert "ottawa-like" in names and "toronto-like" in names
    ott, tor = get_profile("ottawa-like"), get_profile("toronto-like")
    assert tor.density_map.sum() > ott.density_map.sum()
    assert tor.expected_sample_count() >= 4 * ott.expected_sample_count()


def test_toronto_generates_at_least_four_times_the_samples():
    ott = generate_region(get_profile("ottawa-like"), default_coupling(), 0)
    tor = generate_region(get_profile("toronto-like"), default_coupling(), 0)
    assert len(tor.samples) / len(ott.samples) >= 4


def test_sample_counts_scale_with_density():
    p = RegionProfile("split", (45.0, 45.01, -76.0, -75.98), [[0.1, 1.0]],
                      samples_per_window=200.0, years=(2019, 2020))
    g = generate_region(p, default_coupling(), 0)
    col = np.floor((g.samples["lon"] + 76.0) / 0.01).astype(int)
    counts = col.value_counts()
    assert counts[1] > 5 * counts[0]


def test_unknown_presets_raise():
    with pytest.raises(ConfigError):
        get_profile("atlantis")
    with pytest.raises(ConfigError):
        get_coupling("quadratic")


@pytest.mark.parametrize("kwargs, field", [
    (dict(bbox=(45.0, 45.0, -76.0, -75.9)), "bbox"),
    (dict(bbox=(45.0, 45.1, -75.9, -76.0)), "bbox"),
    (dict(density_map=[[1.5]]), "density_map"),
    (dict(density_map=[[0.5, 0.5]]), "density_map"),
    (dict(bands=()), "bands"),
    (dict(years=(2023, 2019)), "years"),
])
def test_invalid_profiles_rejected(kwargs, field):
    base = dict(name="x", bbox=(45.0, 45.1, -76.0, -75.9), density_map=[[0.5]])
    base.update(kwargs)
    with pytest.raises(ConfigError) as err:
        RegionProfile(**base)
    assert err.value.field == field


def test_invalid_coupling_rejected():
    with pytest.raises(ConfigError):
        CouplingSpec(noise_sigma=-1.0)
    with pytest.raises(ConfigError):
        CouplingSpec(seasonal_amplitude=-0.1)
    with pytest.raises(ConfigError):
        CouplingSpec(weights_lag0={"not_a_kpi": 1.0})


def test_profile_dict_round_trip():
    p = get_profile("toronto-like")
    q = RegionProfile.from_dict(p.to_dict())
    assert q.to_dict() == p.to_dict()
    r = RegionProfile.from_dict({"name": "r", "bbox": [45.0, 45.03, -76.0, -75.97],
                                 "density_map": {"radial": {"n_rows": 3, "n_cols": 3,
                                                            "spread": 1.0}}})
    np.testing.assert_array_equal(r.density_map, radial_density(3, 3, spread=1.0))
    c = default_coupling()
    assert CouplingSpec.from_dict(c.to_dict()) == c


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 3),
       st.floats(0.0, 1.0), st.floats(0.0, 20.0), st.floats(-5.0, 5.0),
       st.sampled_from([("n78",), ("n41", "n78"), ("b7", "n41", "n78")]))
def test_random_configs_stay_in_range(seed, rows, cols, floor, noise, trend, bands):
    dm = np.clip(np.random.default_rng(seed).uniform(size=(rows, cols)), floor, 1.0)
    p = RegionProfile("r", (45.0, 45.0 + 0.01 * rows, -76.0, -76.0 + 0.01 * cols), dm,
                      bands=bands, samples_per_window=10.0, years=(2020, 2020))
    c = CouplingSpec(weights_lag1={"traffic_volume": 8.0}, noise_sigma=noise,
                     trend_per_quarter=trend)
    g = generate_region(p, c, seed)
    validate_samples(g.samples, p)
    assert (g.regulatory["deployed_bw_mhz"] > 0).all()
    assert set(g.samples["band"]) <= set(bands)
