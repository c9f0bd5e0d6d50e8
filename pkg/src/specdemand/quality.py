"""Gap imputation and outlier treatment of per-tile window series."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .schema import CLEANSING_LOG_COLUMNS, KPI_NAMES, ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeriesView:
    """Values of one (tile, band, field) series by window; NaN marks a gap."""

    key: tuple
    windows: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.int64)
        v = np.asarray(self.values, dtype=float)
        if w.shape != v.shape or w.ndim != 1:
            raise ValueError("windows and values must be aligned 1-D arrays")
        if len(w) > 1 and not np.all(np.diff(w) > 0):
            raise ValueError("window indices must be strictly increasing")
        object.__setattr__(self, "windows", w)
        object.__setattr__(self, "values", v)

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=float))


@dataclass(frozen=True)
class CleansePolicy:
    max_short_gap: int = 1
    ma_window: int = 3
    iqr_k: float = 1.5
    z_thresh: float = 3.0
    winsor_limits: tuple = (5.0, 95.0)
    # detect/winsorize repeats until nothing is flagged or the values stop
    # moving, at most this often
    max_passes: int = 200
    settle_tol: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "winsor_limits", tuple(float(v) for v in self.winsor_limits))
        for name in ("max_short_gap", "ma_window", "iqr_k", "z_thresh", "max_passes",
                     "settle_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"cleanse.{name}", "must be positive")
        lo, hi = self.winsor_limits
        if not 0.0 < lo < hi <= 100.0:
            raise ConfigError("cleanse.winsor_limits", "need 0 < lower_pct < upper_pct <= 100")


def _gap_runs(missing):
    """(start, stop) index pairs of consecutive missing entries."""
    runs, i, n = [], 0, len(missing)
    while i < n:
        if missing[i]:
            j = i
            while j < n and missing[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def _fill(series, policy):
    v = series.values.copy()
    w = series.windows.astype(float)
    missing = np.isnan(v)
    if missing.all():
        raise ValueError(f"series {series.key} has no observed values")
    present = np.flatnonzero(~missing)
    half = max(1, policy.ma_window // 2)
    actions = []
    for start, stop in _gap_runs(missing):
        before = present[present < start][-half:]
        after = present[present >= stop][:half]
        edge = len(before) == 0 or len(after) == 0
        if stop - start <= policy.max_short_gap:
            if edge:
                v[start:stop] = series.values[before[-1] if len(before) else after[0]]
                action = "fill_edge"
            else:
                lo, hi = before[-1], after[0]
                v[start:stop] = np.interp(w[start:stop], [w[lo], w[hi]],
                                          [series.values[lo], series.values[hi]])
                action = "interpolate_short"
        else:
            # long gap: mean of the present values flanking it
            v[start:stop] = series.values[np.concatenate([before, after])].mean()
            action = "interpolate_long"
        actions.extend((int(series.windows[i]), action, np.nan, float(v[i]))
                       for i in range(start, stop))
    return v, actions


def interpolate_gaps(series, policy=CleansePolicy()):
    """Close gaps: short ones linearly (edge fill at the ends), long ones by
    the mean of up to ``ma_window // 2`` present values on each side."""
    v, _ = _fill(series, policy)
    return series.with_values(v)


def detect_outliers(series, policy=CleansePolicy()):
    """Flag values outside the IQR fences or with |z| above ``z_thresh``.

    Quartiles interpolate linearly between order statistics; z uses the
    population standard deviation.
    """
    v = series.values
    if np.isnan(v).any():
        raise ValueError("detect_outliers needs a gap-free series")
    if len(v) == 0:
        return np.zeros(0, dtype=bool)
    q1, q3 = percentiles(v, [25.0, 75.0])
    iqr = q3 - q1
    mask = (v < q1 - policy.iqr_k * iqr) | (v > q3 + policy.iqr_k * iqr)
    sd = v.std()
    if sd > 0:
        mask |= np.abs(v - v.mean()) / sd > policy.z_thresh
    return mask


def percentiles(values, qs):
    """Linear interpolation between order statistics, lower point plus fraction.

    numpy interpolates back from the upper point when the fraction is above
    one half, which lands an ulp away from the hand-computed value.
    """
    s = np.sort(np.asarray(values, dtype=float))
    pos = (len(s) - 1) * np.asarray(qs, dtype=float) / 100.0
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def winsorize(series, mask, policy=CleansePolicy()):
    """Clamp flagged values to percentiles of the unflagged ones."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != series.values.shape:
        raise ValueError("mask not aligned with series")
    if not mask.any():
        return series
    kept = series.values[~mask]
    if kept.size == 0:
        raise ValueError(f"series {series.key}: every value flagged")
    lo, hi = percentiles(kept, policy.winsor_limits)
    v = series.values.copy()
    v[mask] = np.clip(v[mask], lo, hi)
    return series.with_values(v)


def cleanse_series(series, policy=CleansePolicy(), treat_outliers=True):
    """Full pipeline on one series; returns (series, log entries).

    Log entries are (window, action, before, after) tuples.
    """
    v, actions = _fill(series, policy)
    out = series.with_values(v)
    if not treat_outliers:
        return out, actions
    for _ in range(policy.max_passes):
        mask = detect_outliers(out, policy)
        if not mask.any():
            break
        new = winsorize(out, mask, policy)
        # tied data can creep towards the bulk geometrically without ever
        # leaving the fences; a pass that barely moves anything is dropped,
        # which also makes a second cleanse return its input unchanged
        step = np.abs(new.values - out.values).max()
        if step <= policy.settle_tol * (1.0 + np.abs(out.values).max()):
            break
        actions.extend((int(out.windows[i]), "winsorize", float(out.values[i]),
                        float(new.values[i]))
                       for i in np.flatnonzero(mask) if new.values[i] != out.values[i])
        out = new
    else:
        log.warning("series %s: outlier treatment did not settle in %d passes",
                    series.key, policy.max_passes)
    return out, actions


def cleanse_table(table, fields, n_windows, policy=CleansePolicy(),
                  group_keys=("row", "col", "band"), passthrough=("sample_count",)):
    """Cleanse every (tile, band, field) series of a long table.

    Each group is expanded to windows ``0..n_windows-1``; gap rows are
    imputed and marked ``imputed``. ``passthrough`` fields are gap-filled
    but exempt from outlier treatment. Returns (table, cleansing log).
    """
    group_keys = list(group_keys)
    windows = np.arange(n_windows)
    frames, log_rows = [], []
    for key, grp in table.groupby(group_keys, sort=True):
        grp = grp.set_index("window").reindex(windows)
        out = pd.DataFrame({"window": windows})
        for k, val in zip(group_keys, key):
            out[k] = val
        out["imputed"] = grp[fields[0]].isna().to_numpy()
        for name, treat in [(f, True) for f in fields] + [(f, False) for f in passthrough]:
            s = SeriesView(key + (name,), windows, grp[name].to_numpy(dtype=float))
            clean, actions = cleanse_series(s, policy, treat_outliers=treat)
            out[name] = clean.values
            tag = ":".join(str(p) for p in s.key)
            log_rows.extend((tag,) + a for a in actions)
        frames.append(out)
    cols = group_keys + ["window"] + list(fields) + list(passthrough) + ["imputed"]
    if frames:
        result = pd.concat(frames, ignore_index=True)[cols]
    else:
        result = pd.DataFrame(columns=cols)
    return result, pd.DataFrame(log_rows, columns=list(CLEANSING_LOG_COLUMNS))


def cleanse_kpis(kpi_table, n_windows, policy=CleansePolicy()):
    return cleanse_table(kpi_table, list(KPI_NAMES), n_windows, policy)
