"""Stage functions wiring the modules together.

Every stage reads its inputs from, and writes its outputs to, files under
the run directory, so each can be rerun on its own:

    <out>/<region>/samples.csv, regulatory.csv     gen
    <out>/<region>/cells.csv, proxy.csv            aggregate
    <out>/<region>/kpis.csv, cleansing_log.csv     cleanse
    <out>/<region>/panel.csv, standardized.csv     featurize
    <out>/<region>/correlations.csv                correlate
    <out>/<region>/metrics.csv, predictions.csv,
                   standardization.csv, models/    train
    <out>/transfer_report.csv                      transfer
    <out>/benchmark_comparison.csv                 benchmark
    <out>/report/                                  report
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .benchreport import compare_benchmarks, emit_report, yearly_means
from .features import (FeaturePanel, build_panel, correlation_report, kpi_table,
                       standardize_per_window)
from .models import (evaluate, fit_forest, fit_gbm, fit_lasso, fit_ols, holdout_windows,
                     model_to_json, temporal_split)
from .quality import cleanse_kpis
from .schema import KPI_NAMES, METRICS_COLUMNS
from .spatial import WindowSpec, aggregate, aggregate_proxy
from .synthgen import generate_region
from .transfer import compare_transfer, train_source, transfer_report

log = logging.getLogger(__name__)

MODEL_NAMES = ("ols", "lasso", "random_forest", "gradient_boosted")
STAGES = ("gen", "aggregate", "cleanse", "featurize", "correlate", "train", "transfer",
          "benchmark", "report")


class MissingInput(FileNotFoundError):
    """A stage input file is absent."""


def window_spec(profile, span_months=3, stride_months=3):
    return WindowSpec(f"{profile.years[0]:04d}-01-01", span_months, stride_months)


def n_full_windows(profile, span_months=3, stride_months=3):
    """Windows lying entirely inside the profile's years."""
    months = 12 * (profile.years[1] - profile.years[0] + 1)
    return (months - span_months) // stride_months + 1


@dataclass
class RegionRun:
    samples: pd.DataFrame
    regulatory: pd.DataFrame
    cells: pd.DataFrame
    proxy: pd.DataFrame
    kpis: pd.DataFrame
    cleansing_log: pd.DataFrame
    panel: FeaturePanel


def process_region(profile, coupling, seed, policy=None, lags=(0, 1, 2), span_months=3,
                   stride_months=3, jobs=1):
    """All per-region stages in memory: samples through the raw feature panel."""
    g = generate_region(profile, coupling, seed, jobs)
    ws = window_spec(profile, span_months, stride_months)
    n = n_full_windows(profile, span_months, stride_months)
    cells = aggregate(g.samples, profile.grid(), ws)
    cells = cells[cells["window"] < n].reset_index(drop=True)
    proxy = aggregate_proxy(g.regulatory, profile.grid(), ws, n)
    kpis, clog = cleanse_kpis(kpi_table(cells), n, *(() if policy is None else (policy,)))
    panel = build_panel(kpis, proxy, tuple(lags))
    return RegionRun(g.samples, g.regulatory, cells, proxy, kpis, clog, panel)


# file helpers -------------------------------------------------------------

_STR_COLUMNS = {"band": str, "device_id": str, "site_id": str, "kpi": str, "key": str,
                "model": str, "scenario": str}


def read_csv(path):
    if not os.path.exists(path):
        raise MissingInput(path)
    head = pd.read_csv(path, nrows=0).columns
    dtype = {c: t for c, t in _STR_COLUMNS.items() if c in head}
    return pd.read_csv(path, dtype=dtype, float_precision="round_trip",
                       keep_default_na=True)


def write_csv(frame, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def write_json(obj, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _rdir(cfg, profile):
    return os.path.join(cfg.out, profile.name)


def _load_panel(cfg, profile):
    frame = read_csv(os.path.join(_rdir(cfg, profile), "panel.csv"))
    return FeaturePanel(frame, tuple(cfg.lags), KPI_NAMES)


# stages -------------------------------------------------------------------

def stage_gen(cfg):
    for p in cfg.profiles:
        g = generate_region(p, cfg.coupling, cfg.seed, cfg.jobs)
        d = _rdir(cfg, p)
        write_csv(g.samples, os.path.join(d, "samples.csv"))
        write_csv(g.regulatory, os.path.join(d, "regulatory.csv"))
        log.info("%s: %d samples, %d regulatory records", p.name, len(g.samples),
                 len(g.regulatory))


def stage_aggregate(cfg):
    for p in cfg.profiles:
        d = _rdir(cfg, p)
        samples = read_csv(os.path.join(d, "samples.csv"))
        records = read_csv(os.path.join(d, "regulatory.csv"))
        ws = window_spec(p, cfg.span_months, cfg.stride_months)
        n = n_full_windows(p, cfg.span_months, cfg.stride_months)
        cells = aggregate(samples, p.grid(), ws)
        cells = cells[cells["window"] < n].reset_index(drop=True)
        write_csv(cells, os.path.join(d, "cells.csv"))
        write_csv(aggregate_proxy(records, p.grid(), ws, n), os.path.join(d, "proxy.csv"))


def stage_cleanse(cfg):
    for p in cfg.profiles:
        d = _rdir(cfg, p)
        cells = read_csv(os.path.join(d, "cells.csv"))
        n = n_full_windows(p, cfg.span_months, cfg.stride_months)
        kpis, clog = cleanse_kpis(kpi_table(cells), n, cfg.cleanse)
        write_csv(kpis, os.path.join(d, "kpis.csv"))
        write_csv(clog, os.path.join(d, "cleansing_log.csv"))


def stage_featurize(cfg):
    for p in cfg.profiles:
        d = _rdir(cfg, p)
        kpis = read_csv(os.path.join(d, "kpis.csv"))
        proxy = read_csv(os.path.join(d, "proxy.csv"))
        panel = build_panel(kpis, proxy, cfg.lags)
        panel.to_csv(os.path.join(d, "panel.csv"))
        std = standardize_per_window(panel)
        std.to_csv(os.path.join(d, "standardized.csv"))


def stage_correlate(cfg):
    for p in cfg.profiles:
        rep = correlation_report(_load_panel(cfg, p))
        d = _rdir(cfg, p)
        write_csv(rep.table, os.path.join(d, "correlations.csv"))
        write_csv(rep.alignment, os.path.join(d, "tile_alignment.csv"))


def fit_model(name, X, y, mcfg, seed, names=None):
    if name == "ols":
        return fit_ols(X, y, names)
    if name == "lasso":
        return fit_lasso(X, y, float((mcfg.get("lasso") or {}).get("lam", 0.5)),
                         feature_names=names)
    if name == "random_forest":
        return fit_forest(X, y, seed=seed, feature_names=names,
                          **(mcfg.get("random_forest") or {}))
    if name == "gradient_boosted":
        return fit_gbm(X, y, seed=seed, feature_names=names,
                       **(mcfg.get("gradient_boosted") or {}))
    raise ValueError(f"unknown model {name!r}")


def train_region(panel, mcfg, seed, scenario, season_period=4):
    """Fit every model on the train windows; metrics and test predictions."""
    train_w, test_w = holdout_windows(panel.windows, int(mcfg.get("n_test_windows", 4)))
    split = temporal_split(panel, train_w, test_w, season_period)
    rows, preds, fitted = [], [], {}
    for name in MODEL_NAMES:
        m = fit_model(name, split.train.X, split.train.y, mcfg, seed, split.train.columns)
        yhat = m.predict(split.test.X)
        met = evaluate(split.test.y, yhat)
        rows.append((name, scenario, met.rmse, met.nrmse, met.r2, met.accuracy))
        k = split.test.keys.copy()
        k["model"] = name
        k["actual"] = split.test.y
        k["predicted"] = yhat
        preds.append(k)
        fitted[name] = m
    metrics = pd.DataFrame(rows, columns=list(METRICS_COLUMNS))
    return metrics, pd.concat(preds, ignore_index=True), fitted, split


def stage_train(cfg):
    for p in cfg.profiles:
        d = _rdir(cfg, p)
        panel = _load_panel(cfg, p)
        metrics, preds, fitted, split = train_region(panel, cfg.models, cfg.seed, p.name,
                                                     12 // cfg.stride_months)
        write_csv(metrics, os.path.join(d, "metrics.csv"))
        write_csv(preds, os.path.join(d, "predictions.csv"))
        write_csv(split.stats, os.path.join(d, "standardization.csv"))
        os.makedirs(os.path.join(d, "models"), exist_ok=True)
        for name, m in fitted.items():
            with open(os.path.join(d, "models", f"{name}.json"), "w", encoding="utf-8",
                      newline="\n") as f:
                f.write(model_to_json(m) + "\n")


def transfer_study(source_panel, target_panel, tcfg, seeds):
    """compare_transfer over target subsample seeds; (source model, report rows)."""
    src = train_source(source_panel, tcfg.fine_tune_model, tcfg.lam, tcfg.n_test_windows)
    rows = [(tcfg, s, compare_transfer(target_panel, src, tcfg, s)) for s in seeds]
    return src, rows


def stage_transfer(cfg):
    t = cfg.transfer
    src_panel = _load_panel(cfg, cfg.profile(t.source_region))
    tgt_panel = _load_panel(cfg, cfg.profile(t.target_region))
    seeds = [cfg.seed + k for k in range(cfg.repeats)]
    src, rows = transfer_study(src_panel, tgt_panel, t, seeds)
    write_csv(transfer_report(rows), os.path.join(cfg.out, "transfer_report.csv"))
    write_json({"model": src.model.to_dict(),
                "source_holdout": src.holdout.as_row(), "config": t.to_dict()},
               os.path.join(cfg.out, "transfer_source_model.json"))


def benchmark_table(proxy, predictions, profile, bench, model="lasso", windows_per_year=4):
    actual = yearly_means(proxy, profile.years[0], windows_per_year)
    pred = predictions[predictions["model"] == model]
    pred = pred.rename(columns={"predicted": "deployed_bw_mhz"})
    predicted = yearly_means(pred, profile.years[0], windows_per_year)
    return compare_benchmarks(actual, predicted, bench, profile.name)


def stage_benchmark(cfg):
    parts = []
    for p in cfg.profiles:
        d = _rdir(cfg, p)
        proxy = read_csv(os.path.join(d, "proxy.csv"))
        preds = read_csv(os.path.join(d, "predictions.csv"))
        parts.append(benchmark_table(proxy, preds, p, cfg.benchmarks,
                                     windows_per_year=12 // cfg.stride_months))
    write_csv(pd.concat(parts, ignore_index=True),
              os.path.join(cfg.out, "benchmark_comparison.csv"))


def _optional(path):
    try:
        return read_csv(path)
    except MissingInput:
        return None


def stage_report(cfg):
    metrics, corr = [], []
    for p in cfg.profiles:
        d = _rdir(cfg, p)
        m = _optional(os.path.join(d, "metrics.csv"))
        if m is not None:
            metrics.append(m)
        c = _optional(os.path.join(d, "correlations.csv"))
        if c is not None:
            c.insert(0, "region", p.name)
            corr.append(c)
    target = cfg.profile(cfg.transfer.target_region)
    snapshot = None
    kp = _optional(os.path.join(_rdir(cfg, target), "kpis.csv"))
    px = _optional(os.path.join(_rdir(cfg, target), "proxy.csv"))
    if kp is not None and px is not None:
        tv = kp.groupby(["row", "col", "window"], sort=True)["traffic_volume"].mean()
        snapshot = px.merge(tv.reset_index(), on=["row", "col", "window"], how="left")
    return emit_report(
        os.path.join(cfg.out, "report"),
        metrics=pd.concat(metrics, ignore_index=True) if metrics else None,
        correlations=_corr_for_report(corr),
        comparison=_optional(os.path.join(cfg.out, "benchmark_comparison.csv")),
        transfer=_optional(os.path.join(cfg.out, "transfer_report.csv")),
        snapshot=snapshot,
    )


def _corr_for_report(parts):
    if not parts:
        return None
    c = pd.concat(parts, ignore_index=True)
    return c.sort_values(["region", "kpi", "lag"], kind="mergesort").reset_index(drop=True)


STAGE_FUNCS = {
    "gen": stage_gen, "aggregate": stage_aggregate, "cleanse": stage_cleanse,
    "featurize": stage_featurize, "correlate": stage_correlate, "train": stage_train,
    "transfer": stage_transfer, "benchmark": stage_benchmark, "report": stage_report,
}


def run_stage(name, cfg):
    if name == "all":
        for s in STAGES:
            STAGE_FUNCS[s](cfg)
        return
    STAGE_FUNCS[name](cfg)
