"""Cross-region transfer of a linear proxy model.

A model trained on a data-rich source region predicts the target region's
bandwidth; that estimate joins the target features as ``source_proxy_est``
and a linear model is refit on the (possibly scarce) target rows, starting
from the source coefficients. Freezing acts on coefficient subsets: frozen
coefficients keep their source value during a first pass, then all are
released and the fit is repeated once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .models import (LinearModel, evaluate, fit_lasso, fit_ols, holdout_windows,
                     temporal_split)
from .schema import TRANSFER_COLUMNS, ConfigError, SchemaError

SOURCE_COLUMN = "source_proxy_est"


@dataclass
class TransferConfig:
    source_region: str = "toronto-like"
    target_region: str = "ottawa-like"
    frozen_features: tuple = ()
    target_fraction: float = 0.25
    fine_tune_model: str = "lasso"  # "ols" or "lasso"
    lam: float = 0.5  # source and scratch models
    fine_tune_lam: float = 4.0  # penalty on the deviation from the centre
    source_penalty: float = 1.0  # lasso penalty weight on SOURCE_COLUMN
    shrink_to: str = "source"  # lasso penalty centre: "source" coefficients or "zero"
    n_test_windows: int = 4
    gradual_unfreeze: bool = True
    fit_source_column: bool = True
    freeze_intercept: bool = False

    def __post_init__(self):
        self.frozen_features = tuple(self.frozen_features)
        self.validate()

    def validate(self):
        if self.source_region == self.target_region:
            raise ConfigError("transfer.target_region", "must differ from source_region")
        if not 0.0 < self.target_fraction <= 1.0:
            raise ConfigError("transfer.target_fraction", "must lie in (0, 1]")
        if self.fine_tune_model not in ("ols", "lasso"):
            raise ConfigError("transfer.fine_tune_model", "must be 'ols' or 'lasso'")
        if not self.lam >= 0:
            raise ConfigError("transfer.lam", "must be >= 0")
        if not self.fine_tune_lam >= 0:
            raise ConfigError("transfer.fine_tune_lam", "must be >= 0")
        if self.shrink_to not in ("source", "zero"):
            raise ConfigError("transfer.shrink_to", "must be 'source' or 'zero'")
        if not self.source_penalty >= 0:
            raise ConfigError("transfer.source_penalty", "must be >= 0")
        if self.n_test_windows < 1:
            raise ConfigError("transfer.n_test_windows", "must be >= 1")

    def to_dict(self):
        d = dict(self.__dict__)
        d["frozen_features"] = list(self.frozen_features)
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("transfer", str(exc)) from None


@dataclass
class SourceModel:
    """Source-region fit plus the standardisation metadata it was trained under."""

    model: LinearModel
    columns: list
    stats: pd.DataFrame
    holdout: object = None  # Metrics on the source's own test windows

    def predict(self, X):
        return self.model.predict(X)


@dataclass
class TransferredModel:
    source: LinearModel
    model: LinearModel  # over the target columns plus SOURCE_COLUMN
    est_mean: float
    est_std: float
    passes: list = field(default_factory=list)

    def augment(self, X):
        X = np.asarray(X, dtype=float)
        est = (self.source.predict(X) - self.est_mean) / self.est_std
        return np.column_stack([X, est])

    def predict(self, X):
        return self.model.predict(self.augment(X))


@dataclass(frozen=True)
class TransferOutcome:
    metrics_with_transfer: object
    metrics_without_transfer: object
    relative_nrmse_reduction: float
    n_train: int
    n_test: int


def _fit(kind, X, y, lam, names):
    if kind == "ols":
        return fit_ols(X, y, names)
    return fit_lasso(X, y, lam, feature_names=names)


def train_source(panel, kind="lasso", lam=1.0, n_test_windows=4):
    """Fit the source model on the source train windows (per-window standardised)."""
    if len(panel) == 0:
        raise ValueError("empty source panel")
    train_w, test_w = holdout_windows(panel.windows, n_test_windows)
    split = temporal_split(panel, train_w, test_w)
    model = _fit(kind, split.train.X, split.train.y, lam, split.train.columns)
    holdout = evaluate(split.test.y, model.predict(split.test.X))
    return SourceModel(model, list(split.train.columns), split.stats, holdout)


def _partial_ols(X, y, beta, intercept, free, fit_intercept):
    # least squares over the free coordinates with the rest held fixed
    beta = beta.copy()
    fixed = np.setdiff1d(np.arange(X.shape[1]), free)
    r = y - X[:, fixed] @ beta[fixed]
    if not fit_intercept:
        r = r - intercept
    if len(free):
        Xf = X[:, free]
        if fit_intercept:
            sol, *_ = np.linalg.lstsq(Xf - Xf.mean(axis=0), r - r.mean(), rcond=None)
        else:
            sol, *_ = np.linalg.lstsq(Xf, r, rcond=None)
        beta[free] = sol
    if fit_intercept:
        intercept = float((r - X[:, free] @ beta[free]).mean())
    return LinearModel(intercept, beta)


def transfer_fine_tune(source, X, y, columns, config):
    """Refit on target rows ``(X, y)`` with the source estimate appended.

    ``X`` must already be standardised and ordered like the source columns.
    """
    if list(columns) != list(source.columns):
        raise SchemaError("target feature columns do not match the source model's")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    src = source.model if isinstance(source, SourceModel) else source
    est = src.predict(X)
    mean, std = float(est.mean()), float(est.std())
    if not std > 0:
        std = 1.0
    Xa = np.column_stack([X, (est - mean) / std])
    names = list(columns) + [SOURCE_COLUMN]
    p = Xa.shape[1]

    unknown = set(config.frozen_features) - set(columns)
    if unknown:
        raise SchemaError(f"frozen features not in the panel: {sorted(unknown)}")
    frozen = np.array([c in config.frozen_features for c in columns] + [False])
    pinned = np.zeros(p, dtype=bool)
    if not config.fit_source_column:
        pinned[-1] = True
    beta0 = np.append(src.coefficients, 0.0)
    b0 = float(src.intercept)
    fit_b0 = not config.freeze_intercept
    pf = np.ones(p)
    pf[-1] = config.source_penalty

    centre = beta0 if config.shrink_to == "source" else np.zeros(p)
    offset = Xa @ centre

    def run(mask, beta, intercept):
        free = np.flatnonzero(~mask)
        if config.fine_tune_model == "ols":
            return _partial_ols(Xa, y, beta, intercept, free, fit_b0)
        # penalise the distance from the centre: refit the deviation on the residual
        m = fit_lasso(Xa, y - offset, config.fine_tune_lam, coef_init=beta - centre,
                      intercept_init=intercept, frozen=mask, fit_intercept=fit_b0,
                      penalty_factor=pf, tol=1e-7, max_iter=100000)
        m.coefficients = m.coefficients + centre
        return m

    passes = []
    m = run(frozen | pinned, beta0, b0)
    passes.append("frozen" if frozen.any() else "full")
    if config.gradual_unfreeze and frozen.any():
        m = run(pinned, m.coefficients, m.intercept)
        passes.append("unfrozen")
    model = LinearModel(m.intercept, m.coefficients, names,
                        "l1" if config.fine_tune_model == "lasso" else "none",
                        config.fine_tune_lam if config.fine_tune_model == "lasso" else 0.0,
                        m.fit_meta)
    return TransferredModel(src, model, mean, std, passes)


def sample_rows(n, fraction, seed):
    """Sorted random subset of ``ceil(fraction * n)`` row indices."""
    k = max(1, int(np.ceil(fraction * n - 1e-9)))
    if k >= n:
        return np.arange(n)
    rng = np.random.default_rng([seed, 7])
    return np.sort(rng.choice(n, size=k, replace=False))


def compare_transfer(panel, source, config, seed=0):
    """Scratch vs transferred model on identical target train/test rows."""
    train_w, test_w = holdout_windows(panel.windows, config.n_test_windows)
    split = temporal_split(panel, train_w, test_w)
    train = split.train.take(sample_rows(len(split.train), config.target_fraction, seed))
    scratch = _fit(config.fine_tune_model, train.X, train.y, config.lam, train.columns)
    moved = transfer_fine_tune(source, train.X, train.y, train.columns, config)
    without = evaluate(split.test.y, scratch.predict(split.test.X))
    with_ = evaluate(split.test.y, moved.predict(split.test.X))
    return outcome(with_, without, len(train), len(split.test))


def outcome(with_, without, n_train=0, n_test=0):
    return TransferOutcome(with_, without, 1.0 - with_.nrmse / without.nrmse, n_train, n_test)


def transfer_report(rows):
    """``rows``: iterable of (config, seed, TransferOutcome)."""
    out = [(c.source_region, c.target_region, c.target_fraction, int(s),
            o.metrics_with_transfer.nrmse, o.metrics_without_transfer.nrmse,
            o.relative_nrmse_reduction) for c, s, o in rows]
    return pd.DataFrame(out, columns=list(TRANSFER_COLUMNS))
