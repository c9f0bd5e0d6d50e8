"""Validation metrics and leakage-free temporal splitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..features import apply_standardization, window_stats


@dataclass(frozen=True)
class Metrics:
    rmse: float
    nrmse: float
    r2: float
    accuracy: float

    def as_row(self):
        return {"rmse": self.rmse, "nrmse": self.nrmse, "r2": self.r2, "accuracy": self.accuracy}


def evaluate(y_true, y_pred):
    """RMSE, RMSE over the range of ``y_true``, R^2, and accuracy = 1 - nRMSE."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or len(y_true) == 0:
        raise ValueError("y_true and y_pred must be equal-length, non-empty vectors")
    spread = float(y_true.max() - y_true.min())
    if spread <= 0:
        raise ValueError("constant y_true: nRMSE and R^2 undefined")
    resid = y_true - y_pred
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    nrmse = rmse / spread
    dev = y_true - y_true.mean()
    ss_tot = float(dev @ dev)
    if ss_tot == 0.0:
        raise ValueError("y_true spread underflows: R^2 undefined")
    r2 = 1.0 - float(resid @ resid) / ss_tot
    return Metrics(rmse, nrmse, r2, 1.0 - nrmse)


@dataclass
class DataSet:
    X: np.ndarray
    y: np.ndarray
    keys: pd.DataFrame
    columns: list

    def __len__(self):
        return len(self.y)

    def take(self, idx):
        idx = np.asarray(idx)
        return DataSet(self.X[idx], self.y[idx], self.keys.iloc[idx].reset_index(drop=True),
                       list(self.columns))


@dataclass
class Split:
    train: DataSet
    test: DataSet
    stats: pd.DataFrame | None  # per (window, column) stats of the train windows
    window_map: dict  # test window -> train window whose stats it uses


def season_matched_window(w, train_windows, season_period=4):
    """Latest train window in the same season as ``w``, else the latest one."""
    same = [t for t in train_windows if t % season_period == w % season_period]
    return max(same) if same else max(train_windows)


def holdout_windows(windows, n_test=4):
    """Train on all but the last ``n_test`` windows, test on those."""
    w = sorted({int(x) for x in windows})
    if n_test < 1 or len(w) <= n_test:
        raise ValueError(f"need more than {n_test} windows, have {len(w)}")
    return w[:-n_test], w[-n_test:]


def temporal_split(panel, train_windows, test_windows, season_period=4, standardize=True):
    """Split a panel by window; standardise with train-window statistics only.

    Train rows use their own window's statistics. Each test window borrows
    those of the latest train window of the same season.
    """
    train_w = sorted({int(w) for w in train_windows})
    test_w = sorted({int(w) for w in test_windows})
    if not train_w or not test_w:
        raise ValueError("train and test windows must be non-empty")
    if set(train_w) & set(test_w):
        raise ValueError("train and test windows overlap")
    if min(test_w) <= max(train_w):
        raise ValueError("every test window must follow every train window")
    win = panel.frame["window"].to_numpy()
    tr = panel.subset(np.isin(win, train_w))
    te = panel.subset(np.isin(win, test_w))
    if len(tr) == 0 or len(te) == 0:
        raise ValueError("split leaves an empty side")
    stats, window_map = None, {}
    if standardize:
        stats = window_stats(tr)
        present = sorted(int(w) for w in tr.windows)
        window_map = {int(w): season_matched_window(int(w), present, season_period)
                      for w in te.windows}
        tr = apply_standardization(tr, stats)
        te = apply_standardization(te, stats, window_map)
    cols = panel.feature_columns
    return Split(DataSet(tr.X(), tr.y(), tr.keys(), cols),
                 DataSet(te.X(), te.y(), te.keys(), cols), stats, window_map)
