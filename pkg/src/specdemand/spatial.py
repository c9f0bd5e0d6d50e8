"""Projection onto the tile grid and per (tile, band, window) aggregation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import NamedTuple

import numpy as np
import pandas as pd

from .schema import CELL_COLUMNS, PROXY_COLUMNS, SAMPLE_COLUMNS, ConfigError, OutOfExtentError

log = logging.getLogger(__name__)

# offsets closer than this (in tile units) to a tile edge snap onto the edge,
# so decimal boundary coordinates land in the upper tile despite float error
_EDGE_SNAP = 1e-9


class TileId(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class GridSpec:
    origin_lat: float
    origin_lon: float
    tile_size_deg: float = 0.01
    n_rows: int = 1
    n_cols: int = 1

    def __post_init__(self):
        if not self.tile_size_deg > 0:
            raise ConfigError("grid.tile_size_deg", "must be positive")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ConfigError("grid", "n_rows and n_cols must be positive")

    def covers(self, bbox):
        lat_min, lat_max, lon_min, lon_max = bbox
        top = self.origin_lat + self.n_rows * self.tile_size_deg
        right = self.origin_lon + self.n_cols * self.tile_size_deg
        eps = _EDGE_SNAP * self.tile_size_deg
        return (self.origin_lat <= lat_min + eps and top >= lat_max - eps
                and self.origin_lon <= lon_min + eps and right >= lon_max - eps)


def _tile_index(offset, size):
    q = np.asarray(offset, dtype=float) / size
    near = np.rint(q)
    q = np.where(np.abs(q - near) < _EDGE_SNAP, near, q)
    return np.floor(q).astype(np.int64)


def assign_tiles(lat, lon, grid):
    """Vectorised tile assignment; returns (rows, cols, in_extent)."""
    rows = _tile_index(np.asarray(lat, dtype=float) - grid.origin_lat, grid.tile_size_deg)
    cols = _tile_index(np.asarray(lon, dtype=float) - grid.origin_lon, grid.tile_size_deg)
    ok = (rows >= 0) & (rows < grid.n_rows) & (cols >= 0) & (cols < grid.n_cols)
    return rows, cols, ok


def assign_tile(lat, lon, grid):
    rows, cols, ok = assign_tiles([lat], [lon], grid)
    if not ok[0]:
        raise OutOfExtentError(f"point ({lat}, {lon}) outside grid")
    return TileId(int(rows[0]), int(cols[0]))


def _to_epoch_seconds(value):
    if isinstance(value, str):
        dt = datetime.fromisoformat(value)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    return int(value)


@dataclass(frozen=True)
class WindowSpec:
    """Windows of ``span_months`` starting every ``stride_months`` from ``epoch``.

    ``epoch`` is UTC seconds (or an ISO date) and must fall on 00:00 of the
    first day of a month.
    """

    epoch: int
    span_months: int = 3
    stride_months: int = 3

    def __post_init__(self):
        object.__setattr__(self, "epoch", _to_epoch_seconds(self.epoch))
        if self.span_months < 1 or self.stride_months < 1:
            raise ConfigError("windows", "span_months and stride_months must be >= 1")
        if self.stride_months > self.span_months:
            raise ConfigError("windows", "stride_months must not exceed span_months")
        ep = np.datetime64(self.epoch, "s")
        if ep != ep.astype("datetime64[M]").astype("datetime64[s]"):
            raise ConfigError("windows.epoch", "must be the start of a month")

    def _epoch_month(self):
        return np.datetime64(self.epoch, "s").astype("datetime64[M]")

    def bounds(self, w):
        """(start, end) UTC seconds of window ``w``; the interval is half-open."""
        m0 = self._epoch_month() + np.timedelta64(int(w) * self.stride_months, "M")
        m1 = m0 + np.timedelta64(self.span_months, "M")
        return (int(m0.astype("datetime64[s]").astype(np.int64)),
                int(m1.astype("datetime64[s]").astype(np.int64)))

    def month_index(self, timestamps):
        ts = np.asarray(timestamps, dtype=np.int64).astype("datetime64[s]")
        return (ts.astype("datetime64[M]") - self._epoch_month()).astype(np.int64)

    def window_range(self, timestamps):
        """First and last window index covering each timestamp."""
        m = self.month_index(timestamps)
        last = m // self.stride_months
        first = np.maximum(0, -((self.span_months - 1 - m) // self.stride_months))
        return first, last


def assign_window(timestamp, spec):
    if timestamp < spec.epoch:
        raise ValueError("timestamp precedes the window epoch")
    first, last = spec.window_range([timestamp])
    return list(range(int(first[0]), int(last[0]) + 1))


def _explode_windows(df, spec):
    first, last = spec.window_range(df["timestamp"].to_numpy())
    reps = last - first + 1
    out = df.loc[df.index.repeat(reps)].copy()
    offsets = np.arange(len(out)) - np.repeat(np.cumsum(reps) - reps, reps)
    out["window"] = np.repeat(first, reps) + offsets
    return out


def aggregate(samples, grid, windows):
    """Average raw samples per (tile, band, window) into CellAggregates."""
    df = pd.DataFrame(samples)
    missing = set(SAMPLE_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"samples lack columns {sorted(missing)}")
    if len(df) == 0:
        return pd.DataFrame(columns=list(CELL_COLUMNS))
    if (df["timestamp"] < windows.epoch).any():
        raise ValueError("samples precede the window epoch")
    # canonical row order keeps the float accumulation order input-independent
    df = df.sort_values(list(SAMPLE_COLUMNS), kind="mergesort").reset_index(drop=True)
    rows, cols, ok = assign_tiles(df["lat"], df["lon"], grid)
    if not ok.all():
        log.warning("dropping %d out-of-extent samples", int((~ok).sum()))
    df["row"], df["col"] = rows, cols
    df = df[ok]
    df = _explode_windows(df, windows)
    g = df.groupby(["row", "col", "band", "window"], sort=True)
    cells = g.agg(
        avg_ul=("ul_mbps", "mean"),
        avg_dl=("dl_mbps", "mean"),
        min_latency=("latency_ms", "min"),
        mean_latency=("latency_ms", "mean"),
        avg_jitter=("jitter_ms", "mean"),
        min_jitter=("jitter_ms", "min"),
        sum_bytes_tx=("bytes_tx", "sum"),
        sum_bytes_rx=("bytes_rx", "sum"),
        mean_signal=("signal_dbm", "mean"),
        connection_count=("connections", "sum"),
        unique_devices=("device_id", "nunique"),
        sample_count=("device_id", "size"),
    ).reset_index()
    # a mean of equal values can land one ulp off the min
    cells["mean_latency"] = np.maximum(cells["mean_latency"], cells["min_latency"])
    cells["avg_jitter"] = np.maximum(cells["avg_jitter"], cells["min_jitter"])
    return cells[list(CELL_COLUMNS)]


def aggregate_proxy(records, grid, windows, n_windows=None):
    """Deployed bandwidth per (tile, window), summed over sites and bands.

    A record states a (site, band) bandwidth effective from its timestamp and
    holds until a later record for the same (site, band) supersedes it. A
    window counts every record effective before its end. Tiles report every
    window in ``range(n_windows)``, with 0 MHz before their first activation.
    """
    df = pd.DataFrame(records)
    if len(df) == 0:
        return pd.DataFrame(columns=list(PROXY_COLUMNS))
    rows, cols, ok = assign_tiles(df["lat"], df["lon"], grid)
    if not ok.all():
        log.warning("dropping %d out-of-extent regulatory records", int((~ok).sum()))
    df = df.assign(row=rows, col=cols)[ok]
    df = df.sort_values(["effective_from", "site_id", "band"], kind="mergesort")
    if n_windows is None:
        n_windows = int(windows.window_range([df["effective_from"].max()])[1][0]) + 1
    tiles = df[["row", "col"]].drop_duplicates().sort_values(["row", "col"])
    eff = df["effective_from"].to_numpy()
    out = []
    for w in range(n_windows):
        _, end = windows.bounds(w)
        active = df[eff < end]
        latest = active.groupby(["site_id", "band"], sort=True).tail(1)
        bw = latest.groupby(["row", "col"], sort=True)["deployed_bw_mhz"].sum()
        frame = tiles.copy()
        frame["window"] = w
        frame["deployed_bw_mhz"] = [float(bw.get((r, c), 0.0))
                                    for r, c in zip(frame["row"], frame["col"])]
        out.append(frame)
    proxy = pd.concat(out, ignore_index=True)
    proxy = proxy.sort_values(["row", "col", "window"], kind="mergesort").reset_index(drop=True)
    return proxy[list(PROXY_COLUMNS)]
