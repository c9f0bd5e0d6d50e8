import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from oracles import month_windows, utc
from specdemand.schema import CELL_COLUMNS, ConfigError, OutOfExtentError
from specdemand.spatial import (GridSpec, TileId, WindowSpec, aggregate, aggregate_proxy,
                                assign_tile, assign_tiles, assign_window)

GRID = GridSpec(45.0, -76.0, 0.01, 10, 10)


def sample(device="d1", ts=None, lat=45.005, lon=-75.995, band="n78", **kw):
    row = dict(device_id=device, timestamp=ts or utc(2019, 2, 1), lat=lat, lon=lon, band=band,
               ul_mbps=10.0, dl_mbps=50.0, latency_ms=20.0, jitter_ms=2.0, bytes_tx=1000.0,
               bytes_rx=4000.0, signal_dbm=-90.0, connections=3)
    row.update(kw)
    return row


@pytest.mark.parametrize("lat, lon, want", [
    (45.005, -75.995, (0, 0)),
    (45.01, -75.99, (1, 1)),
    (45.037, -75.974, (3, 2)),
])
def test_assign_tile_examples(lat, lon, want):
    assert assign_tile(lat, lon, GRID) == TileId(*want)


def test_assign_tile_outside_extent():
    with pytest.raises(OutOfExtentError):
        assign_tile(44.999, -75.995, GRID)
    with pytest.raises(OutOfExtentError):
        assign_tile(45.1, -75.995, GRID)


def test_grid_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        GridSpec(45.0, -76.0, 0.0, 1, 1)
    with pytest.raises(ConfigError):
        GridSpec(45.0, -76.0, 0.01, 0, 1)


@given(st.integers(0, 9), st.integers(0, 9), st.floats(0, 0.999), st.floats(0, 0.999))
def test_tile_matches_floor(r, c, fr, fc):
    lat = 45.0 + (r + fr) * 0.01
    lon = -76.0 + (c + fc) * 0.01
    rows, cols, ok = assign_tiles([lat], [lon], GRID)
    assert ok[0]
    # within float noise of an edge either side is acceptable; otherwise exact floor
    assert abs(rows[0] - r) <= 1 and abs(cols[0] - c) <= 1
    if 1e-6 < fr < 1 - 1e-6:
        assert rows[0] == r
    if 1e-6 < fc < 1 - 1e-6:
        assert cols[0] == c


def test_assign_window_examples():
    q = WindowSpec("2019-01-01", 3, 3)
    assert assign_window(utc(2019, 2, 15), q) == [0]
    assert assign_window(utc(2019, 4, 1), q) == [1]
    rolling = WindowSpec("2019-01-01", 3, 1)
    assert assign_window(utc(2019, 5, 10), rolling) == [2, 3, 4]
    with pytest.raises(ValueError):
        assign_window(utc(2018, 12, 31), q)


def test_window_spec_validation():
    with pytest.raises(ConfigError):
        WindowSpec("2019-01-15")
    with pytest.raises(ConfigError):
        WindowSpec("2019-01-01", 2, 3)
    with pytest.raises(ConfigError):
        WindowSpec("2019-01-01", 0, 0)


@settings(max_examples=300)
@given(st.integers(utc(2019, 1, 1), utc(2024, 12, 31)), st.integers(1, 6), st.integers(1, 6),
       st.integers(1, 12))
def test_windows_match_month_stepping(ts, span, stride, month):
    if stride > span:
        span, stride = stride, span
    epoch_year = 2019 if month == 1 else 2018
    spec = WindowSpec(utc(epoch_year, month, 1), span, stride)
    assert assign_window(ts, spec) == month_windows(ts, epoch_year, month, span, stride)


@given(st.integers(utc(2019, 1, 1), utc(2024, 12, 31)), st.integers(1, 6))
def test_stride_equal_span_partitions_time(ts, span):
    assert len(assign_window(ts, WindowSpec("2019-01-01", span, span))) == 1


def test_aggregate_examples():
    q = WindowSpec("2019-01-01")
    two = aggregate([sample(latency_ms=20.0), sample("d2", latency_ms=40.0)], GRID, q)
    assert len(two) == 1
    assert two["min_latency"][0] == 20.0 and two["mean_latency"][0] == 30.0

    one = aggregate([sample(ul_mbps=7.5, dl_mbps=33.0, jitter_ms=1.25)], GRID, q)
    r = one.iloc[0]
    assert (r.avg_ul, r.avg_dl, r.avg_jitter, r.min_jitter, r.sample_count) == \
        (7.5, 33.0, 1.25, 1.25, 1)

    three = aggregate([sample("a", connections=2), sample("b", connections=5),
                       sample("a", connections=4)], GRID, q)
    r = three.iloc[0]
    assert r.unique_devices == 2 and r.connection_count == 11 and r.sample_count == 3
    assert r.sum_bytes_tx == 3000.0 and r.sum_bytes_rx == 12000.0
    assert tuple(three.columns) == CELL_COLUMNS


def test_aggregate_keeps_bands_and_windows_apart():
    q = WindowSpec("2019-01-01")
    cells = aggregate([sample(band="a"), sample(band="b"), sample(ts=utc(2019, 5, 1)),
                       sample(lat=45.015)], GRID, q)
    keys = set(zip(cells["row"], cells["col"], cells["band"], cells["window"]))
    assert keys == {(0, 0, "a", 0), (0, 0, "b", 0), (0, 0, "n78", 1), (1, 0, "n78", 0)}


def test_aggregate_drops_out_of_extent():
    cells = aggregate([sample(), sample(lat=50.0)], GRID, WindowSpec("2019-01-01"))
    assert cells["sample_count"].sum() == 1


def random_samples(seed, n=200):
    rng = np.random.default_rng(seed)
    return pd.DataFrame(dict(
        device_id=[f"d{i}" for i in rng.integers(0, 15, n)],
        timestamp=rng.integers(utc(2019, 1, 1), utc(2020, 12, 31), n),
        lat=45.0 + rng.uniform(0, 0.1, n), lon=-76.0 + rng.uniform(0, 0.1, n),
        band=rng.choice(["n41", "n78"], n),
        ul_mbps=rng.uniform(1, 100, n), dl_mbps=rng.uniform(1, 500, n),
        latency_ms=rng.uniform(5, 80, n), jitter_ms=rng.uniform(0.1, 10, n),
        bytes_tx=rng.uniform(1e3, 1e6, n), bytes_rx=rng.uniform(1e3, 1e6, n),
        signal_dbm=rng.uniform(-120, -60, n), connections=rng.integers(1, 20, n)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_aggregate_is_permutation_invariant(seed):
    df = random_samples(seed)
    q = WindowSpec("2019-01-01")
    a = aggregate(df, GRID, q)
    b = aggregate(df.sample(frac=1.0, random_state=seed), GRID, q)
    pd.testing.assert_frame_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_aggregate_conserves_samples(seed):
    df = random_samples(seed)
    df.loc[df.index[:7], "lat"] = 46.0
    cells = aggregate(df, GRID, WindowSpec("2019-01-01"))
    assert cells["sample_count"].sum() == len(df) - 7
    assert (cells["min_latency"] <= cells["mean_latency"]).all()


def test_rolling_windows_count_each_sample_span_over_stride_times():
    df = random_samples(1)
    df["timestamp"] = df["timestamp"].clip(lower=utc(2019, 3, 1))
    cells = aggregate(df, GRID, WindowSpec("2019-01-01", 3, 1))
    assert cells["sample_count"].sum() == 3 * len(df)


def reg(site, bw, eff, lat=45.005, lon=-75.995, band="n78"):
    return dict(site_id=site, lat=lat, lon=lon, band=band, deployed_bw_mhz=bw,
                effective_from=eff)


def test_proxy_examples():
    q = WindowSpec("2019-01-01")
    p = aggregate_proxy([reg("s1", 20.0, utc(2019, 1, 1))], GRID, q, 6)
    assert (p["deployed_bw_mhz"] >= 20.0).all() and len(p) == 6

    both = aggregate_proxy([reg("s1", 10.0, utc(2019, 1, 1)), reg("s2", 15.0, utc(2019, 1, 1),
                                                                  lat=45.008)], GRID, q, 2)
    assert list(both["deployed_bw_mhz"]) == [25.0, 25.0]

    mid = aggregate_proxy([reg("s1", 20.0, utc(2019, 8, 15))], GRID, q, 4)
    assert list(mid["deployed_bw_mhz"]) == [0.0, 0.0, 20.0, 20.0]


def test_proxy_sums_bands_and_applies_supersession():
    q = WindowSpec("2019-01-01")
    recs = [reg("s1", 20.0, utc(2019, 1, 1)), reg("s1", 40.0, utc(2019, 1, 1), band="n41"),
            reg("s1", 60.0, utc(2019, 4, 1)), reg("far", 5.0, utc(2019, 1, 1), lat=45.05)]
    p = aggregate_proxy(recs, GRID, q, 3)
    home = p[(p["row"] == 0) & (p["col"] == 0)]["deployed_bw_mhz"].tolist()
    # the upgrade takes effect exactly at the start of window 1, not in window 0
    assert home == [60.0, 100.0, 100.0]
    far = p[p["row"] == 5]["deployed_bw_mhz"].tolist()
    assert far == [5.0, 5.0, 5.0]
