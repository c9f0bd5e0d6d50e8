"""Engineered KPIs, lagged panels, per-window standardisation and correlation analysis."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, fields, replace

import numpy as np
import pandas as pd

from .schema import KPI_NAMES, lag_column

log = logging.getLogger(__name__)

DEFAULT_LAGS = (0, 1, 2)
RX_FLOOR_BYTES = 1.0


@dataclass(frozen=True)
class CellAggregate:
    row: int
    col: int
    band: str
    window: int
    avg_ul: float
    avg_dl: float
    min_latency: float
    mean_latency: float
    avg_jitter: float
    min_jitter: float
    sum_bytes_tx: float
    sum_bytes_rx: float
    mean_signal: float
    connection_count: float
    unique_devices: int
    sample_count: int

    def __post_init__(self):
        if self.min_latency > self.mean_latency or self.min_jitter > self.avg_jitter:
            raise ValueError("minimum exceeds mean")
        if self.sample_count < 1 or self.unique_devices < 1:
            raise ValueError("cell needs at least one sample and one device")


@dataclass(frozen=True)
class KpiVector:
    traffic_volume: float
    latency_ratio: float
    tx_rx_ratio: float
    norm_connections: float
    signal_strength: float
    jitter_variability: float
    sum_throughput: float

    def as_tuple(self):
        return tuple(getattr(self, f.name) for f in fields(self))


def _kpi_formulas(get):
    rx = get("sum_bytes_rx")
    if np.any(np.asarray(rx) <= 0):
        log.info("sum_bytes_rx of 0 floored at %g byte", RX_FLOOR_BYTES)
    return {
        "traffic_volume": get("avg_ul") + get("avg_dl"),
        "latency_ratio": get("min_latency") / get("mean_latency"),
        "tx_rx_ratio": get("sum_bytes_tx") / np.maximum(rx, RX_FLOOR_BYTES),
        "norm_connections": get("connection_count") / get("unique_devices"),
        "signal_strength": get("mean_signal") + 0.0,
        "jitter_variability": get("avg_jitter") - get("min_jitter"),
        "sum_throughput": get("sum_bytes_tx") + get("sum_bytes_rx"),
    }


def compute_kpis(cell):
    """The seven engineered KPIs of one cell."""
    vals = _kpi_formulas(lambda name: float(getattr(cell, name)))
    return KpiVector(**{k: float(v) for k, v in vals.items()})


def kpi_table(cells):
    """Vectorised :func:`compute_kpis` over a cells table.

    Keeps the (row, col, band, window) keys and ``sample_count``.
    """
    cells = pd.DataFrame(cells)
    out = cells[["row", "col", "band", "window"]].copy()
    vals = _kpi_formulas(lambda name: cells[name].to_numpy(dtype=float))
    for k in KPI_NAMES:
        out[k] = vals[k]
    out["sample_count"] = cells["sample_count"].to_numpy(dtype=float)
    return out.reset_index(drop=True)


@dataclass
class FeaturePanel:
    """Lagged KPI matrix keyed by (row, col, window) with the aligned target.

    ``stats`` holds per (window, column) standardisation metadata once the
    panel has been standardised.
    """

    frame: pd.DataFrame
    lags: tuple = DEFAULT_LAGS
    kpis: tuple = KPI_NAMES
    stats: pd.DataFrame | None = None

    @property
    def feature_columns(self):
        return [lag_column(k, lag) for lag in self.lags for k in self.kpis]

    @property
    def windows(self):
        return np.unique(self.frame["window"].to_numpy())

    def X(self):
        return self.frame[self.feature_columns].to_numpy(dtype=float)

    def y(self):
        return self.frame["target"].to_numpy(dtype=float)

    def keys(self):
        return self.frame[["row", "col", "window"]].reset_index(drop=True)

    def __len__(self):
        return len(self.frame)

    def subset(self, mask):
        return replace(self, frame=self.frame[np.asarray(mask)].reset_index(drop=True))

    def to_csv(self, path):
        cols = ["row", "col", "window"] + self.feature_columns + ["target"]
        self.frame[cols].to_csv(path, index=False)

    @classmethod
    def from_frame(cls, frame):
        pat = re.compile(r"^(.*)_lag(\d+)$")
        lags, kpis = [], []
        for c in frame.columns:
            m = pat.match(c)
            if m:
                if m.group(1) not in kpis:
                    kpis.append(m.group(1))
                if int(m.group(2)) not in lags:
                    lags.append(int(m.group(2)))
        return cls(frame.reset_index(drop=True), tuple(sorted(lags)), tuple(kpis))


def collapse_bands(kpis):
    """Sample-count weighted mean of each KPI across bands per (tile, window)."""
    if "band" not in kpis.columns:
        return kpis.copy()
    df = kpis.sort_values(["row", "col", "window", "band"], kind="mergesort").copy()
    keys = ["row", "col", "window"]
    total = df.groupby(keys, sort=False)["sample_count"].transform("sum").to_numpy(dtype=float)
    # normalised weights keep a single-band cell's values bit-exact
    share = df["sample_count"].to_numpy(dtype=float) / total
    for k in KPI_NAMES:
        df[k] = df[k].to_numpy(dtype=float) * share
    out = df.groupby(keys, sort=True)[list(KPI_NAMES) + ["sample_count"]].sum()
    return out.reset_index()


def build_panel(kpis, proxy, lags=DEFAULT_LAGS):
    """Pair each (tile, t) target with KPI values from windows t - k, k in ``lags``.

    Rows missing any lagged antecedent or the target are dropped.
    """
    lags = tuple(int(v) for v in lags)
    if not lags or any(v < 0 for v in lags) or list(lags) != sorted(set(lags)):
        raise ValueError("lags must be non-empty, non-negative, sorted and distinct")
    base = collapse_bands(pd.DataFrame(kpis))
    n_windows = base["window"].nunique()
    if n_windows < max(lags) + 2:
        raise ValueError(f"{n_windows} windows cannot form lag-{max(lags)} training pairs")
    keys = ["row", "col", "window"]
    panel = pd.DataFrame(proxy)[keys + ["deployed_bw_mhz"]].rename(
        columns={"deployed_bw_mhz": "target"})
    for lag in lags:
        shifted = base[keys + list(KPI_NAMES)].copy()
        shifted["window"] = shifted["window"] + lag
        shifted = shifted.rename(columns={k: lag_column(k, lag) for k in KPI_NAMES})
        panel = panel.merge(shifted, on=keys, how="inner")
    feature_cols = [lag_column(k, lag) for lag in lags for k in KPI_NAMES]
    panel = panel.dropna(subset=feature_cols + ["target"])
    panel = panel.sort_values(keys, kind="mergesort").reset_index(drop=True)
    return FeaturePanel(panel[keys + feature_cols + ["target"]], lags, KPI_NAMES)


def window_stats(panel):
    """Per (window, column) mean and population std of the feature columns."""
    rows = []
    for w, grp in panel.frame.groupby("window", sort=True):
        if len(grp) < 2:
            raise ValueError(f"window {w} has fewer than two rows")
        for c in panel.feature_columns:
            v = grp[c].to_numpy(dtype=float)
            mean = float(v.mean())
            std = float(v.std())
            rows.append((int(w), c, mean, std, bool(std <= 1e-12 * max(1.0, abs(mean)))))
    return pd.DataFrame(rows, columns=["window", "column", "mean", "std", "degenerate"])


def apply_standardization(panel, stats, window_map=None):
    """Standardise ``panel`` with precomputed ``stats``.

    ``window_map`` maps a panel window to the stats window whose mean/std it
    borrows; identity by default. Degenerate columns map to 0.
    """
    frame = panel.frame.copy()
    table = stats.set_index(["window", "column"])
    win = frame["window"].to_numpy()
    src = np.array([window_map.get(int(w), int(w)) if window_map else int(w) for w in win])
    for c in panel.feature_columns:
        sub = table.xs(c, level="column")
        mean = sub["mean"].reindex(src).to_numpy()
        std = sub["std"].reindex(src).to_numpy()
        degen = sub["degenerate"].reindex(src).to_numpy(dtype=bool)
        if np.isnan(mean).any():
            raise ValueError(f"no standardisation statistics for some windows of {c}")
        v = frame[c].to_numpy(dtype=float)
        frame[c] = np.where(degen, 0.0, (v - mean) / np.where(degen, 1.0, std))
    return replace(panel, frame=frame, stats=stats)


def standardize_per_window(panel):
    """Zero mean, unit population variance per feature column within each window.

    The target is left as is.
    """
    stats = window_stats(panel)
    if stats["degenerate"].any():
        log.info("%d zero-variance (window, column) groups set to 0",
                 int(stats["degenerate"].sum()))
    return apply_standardization(panel, stats)


class UndefinedCorrelation(ValueError):
    pass


def pearson(x, y):
    """Sample Pearson correlation; 0 if exactly one input is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("need two equal-length series of at least two values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 and syy == 0.0:
        raise UndefinedCorrelation("both series are constant")
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    prod = sxx * syy
    denom = np.sqrt(prod)
    # overflow or subnormal product loses digits; split the root instead
    if not np.isfinite(prod) or prod < np.finfo(float).tiny:
        denom = np.sqrt(sxx) * np.sqrt(syy)
    r = float(dx @ dy) / denom
    return float(min(1.0, max(-1.0, r)))


@dataclass
class CorrelationReport:
    table: pd.DataFrame  # kpi, lag, pearson, n; ranked by |pearson|
    alignment: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(
        columns=["kpi", "pearson", "n_tiles"]))

    def coefficient(self, kpi, lag):
        t = self.table
        return float(t.loc[(t["kpi"] == kpi) & (t["lag"] == lag), "pearson"].iloc[0])


def correlation_report(panel, lags=None):
    """Pooled Pearson of every (KPI, lag) column with the target.

    Also reports the tile-level alignment between each KPI's mean lag-0
    value and the tile's mean target.
    """
    if len(panel) == 0:
        raise ValueError("empty panel")
    lags = panel.lags if lags is None else tuple(lags)
    y = panel.y()
    rows = []
    for kpi in panel.kpis:
        for lag in lags:
            x = panel.frame[lag_column(kpi, lag)].to_numpy(dtype=float)
            rows.append((kpi, int(lag), pearson(x, y), len(x)))
    table = pd.DataFrame(rows, columns=["kpi", "lag", "pearson", "n"])
    order = np.argsort(-table["pearson"].abs().to_numpy(), kind="stable")
    table = table.iloc[order].reset_index(drop=True)

    align = []
    if 0 in panel.lags:
        tiles = panel.frame.groupby(["row", "col"], sort=True)
        target = tiles["target"].mean().to_numpy()
        for kpi in panel.kpis:
            x = tiles[lag_column(kpi, 0)].mean().to_numpy()
            if len(x) < 2:
                continue
            try:
                align.append((kpi, pearson(x, target), len(x)))
            except UndefinedCorrelation:
                continue
    return CorrelationReport(table, pd.DataFrame(align, columns=["kpi", "pearson", "n_tiles"]))


def acf_pacf(series, max_lag):
    """Sample ACF (lags 0..max_lag) and PACF by Durbin-Levinson recursion."""
    x = np.asarray(series, dtype=float)
    if len(x) <= max_lag + 1:
        raise ValueError("series too short for the requested lag")
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise ValueError("constant series has no autocorrelation")
    n = len(x)
    acf = np.array([float(x[: n - k] @ x[k:]) / denom for k in range(max_lag + 1)])
    pacf = np.zeros(max_lag + 1)
    pacf[0] = 1.0
    if max_lag == 0:
        return acf, pacf
    phi = np.zeros(max_lag + 1)
    phi[1] = pacf[1] = acf[1]
    for k in range(2, max_lag + 1):
        prev = phi[1:k].copy()
        num = acf[k] - prev @ acf[k - 1:0:-1]
        den = 1.0 - prev @ acf[1:k]
        pk = num / den
        phi[1:k] = prev - pk * prev[::-1]
        phi[k] = pk
        pacf[k] = pk
    return acf, pacf
