"""Benchmark comparison and the machine-readable report bundle."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .schema import ConfigError

BENCHMARK_NAMES = ("vanilla_high", "vanilla_low", "modernized_high", "modernized_low")

COMPARISON_COLUMNS = ("region", "year", "actual_mhz", "predicted_mhz", "benchmark",
                      "benchmark_mhz", "deviation", "predicted_deviation", "regime",
                      "benchmark_over_predicts")


@dataclass(frozen=True)
class ItuBenchmarks:
    """Reference spectrum requirements in MHz. The defaults are illustrative only."""

    vanilla_high: float = 240.0
    vanilla_low: float = 200.0
    modernized_high: float = 180.0
    modernized_low: float = 150.0
    reference_year: int = 2023

    def __post_init__(self):
        for name in BENCHMARK_NAMES:
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"benchmarks.{name}", "must be a positive number of MHz")
        if self.vanilla_high < self.vanilla_low:
            raise ConfigError("benchmarks.vanilla_high", "must be >= vanilla_low")
        if self.modernized_high < self.modernized_low:
            raise ConfigError("benchmarks.modernized_high", "must be >= modernized_low")

    def values(self):
        return {n: float(getattr(self, n)) for n in BENCHMARK_NAMES}

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("benchmarks", str(exc)) from None


def deviation(actual, benchmark):
    """Relative deviation of ``actual`` from ``benchmark``; negative means below."""
    if not benchmark > 0:
        raise ConfigError("benchmarks", "benchmark must be positive")
    return (actual - benchmark) / benchmark


def classify_deviation(dev):
    """Coarse reading of a deviation; the 20-40% band is closed at both ends."""
    if dev > 0:
        return "above"
    if dev == 0:
        return "equal"
    if dev > -0.2:
        return "below_0_20"
    if dev >= -0.4:
        return "below_20_40"
    return "below_40_plus"


def yearly_means(proxy, first_year, windows_per_year=4):
    """Mean per-tile deployed MHz per calendar year from a proxy table."""
    if len(proxy) == 0:
        return {}
    year = first_year + proxy["window"].to_numpy() // windows_per_year
    means = proxy.groupby(year, sort=True)["deployed_bw_mhz"].mean()
    return {int(y): float(v) for y, v in means.items()}


def compare_benchmarks(actuals, predictions, bench, region=""):
    """One row per (year, benchmark) with the deviation of actual from benchmark.

    ``actuals`` and ``predictions`` map year to MHz; predictions may be
    missing for some or all years.
    """
    if not actuals:
        raise ValueError("need at least one year of actuals")
    predictions = predictions or {}
    rows = []
    for year in sorted(actuals):
        a = float(actuals[year])
        p = predictions.get(year)
        p = float("nan") if p is None else float(p)
        for name, b in bench.values().items():
            d = deviation(a, b)
            rows.append((region, int(year), a, p, name, b, d, deviation(p, b),
                         classify_deviation(d), bool(a < b)))
    return pd.DataFrame(rows, columns=list(COMPARISON_COLUMNS))


def _plot_frame(series, x, y, x_label, y_label):
    return pd.DataFrame({"series": series, "x": x, "y": y,
                         "x_label": x_label, "y_label": y_label})


def plot_tables(metrics=None, correlations=None, comparison=None, transfer=None,
                snapshot=None):
    """Plot-ready long tables (series, x, y, axis labels) keyed by file stem."""
    out = {}
    if correlations is not None and len(correlations):
        keys = (["region"] if "region" in correlations else []) + ["kpi", "lag"]
        c = correlations.sort_values(keys, kind="mergesort")
        prefix = c["region"] + ":" if "region" in c else ""
        lag0 = c["lag"] == 0
        if lag0.any():
            out["kpi_correlation_lag0"] = _plot_frame(
                (prefix + "pearson")[lag0] if "region" in c else "pearson",
                c.loc[lag0, "kpi"].to_numpy(), c.loc[lag0, "pearson"].to_numpy(),
                "kpi", "pearson")
        out["kpi_correlation_by_lag"] = _plot_frame(
            (prefix + c["kpi"]).to_numpy(), c["lag"].to_numpy(), c["pearson"].to_numpy(),
            "lag (windows)", "pearson")
    if metrics is not None and len(metrics):
        out["model_accuracy"] = _plot_frame(
            metrics["scenario"].to_numpy(), metrics["model"].to_numpy(),
            metrics["accuracy"].to_numpy(), "model", "accuracy (1 - nRMSE)")
    if comparison is not None and len(comparison):
        cmp = comparison.sort_values(["region", "year", "benchmark"], kind="mergesort")
        first = cmp.drop_duplicates(["region", "year"])
        parts = [_plot_frame(first["region"] + ":actual", first["year"].to_numpy(),
                             first["actual_mhz"].to_numpy(), "year", "MHz"),
                 _plot_frame(first["region"] + ":predicted", first["year"].to_numpy(),
                             first["predicted_mhz"].to_numpy(), "year", "MHz"),
                 _plot_frame(cmp["region"] + ":" + cmp["benchmark"], cmp["year"].to_numpy(),
                             cmp["benchmark_mhz"].to_numpy(), "year", "MHz")]
        out["yearly_bandwidth"] = pd.concat(parts, ignore_index=True)
    if transfer is not None and len(transfer):
        t = transfer.sort_values(["source", "target", "target_fraction", "seed"],
                                 kind="mergesort")
        label = t["source"] + "->" + t["target"]
        out["transfer_nrmse"] = pd.concat([
            _plot_frame(label + ":with", t["seed"].to_numpy(), t["nrmse_with"].to_numpy(),
                        "seed", "nRMSE"),
            _plot_frame(label + ":without", t["seed"].to_numpy(),
                        t["nrmse_without"].to_numpy(), "seed", "nRMSE"),
        ], ignore_index=True)
    if snapshot is not None and len(snapshot):
        out["tile_snapshot"] = snapshot.reset_index(drop=True)
    return out


def _write_csv(frame, path):
    frame.to_csv(path, index=False, lineterminator="\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(v):
    return repr(float(v))


def summary_lines(metrics=None, correlations=None, comparison=None, transfer=None):
    lines = []
    if metrics is not None and len(metrics):
        lines.append("model accuracy (1 - nRMSE), test windows:")
        for r in metrics.itertuples(index=False):
            lines.append(f"  {r.scenario} {r.model}: accuracy={_fmt(r.accuracy)} "
                         f"nrmse={_fmt(r.nrmse)}")
    if correlations is not None and len(correlations):
        lines.append("strongest KPI/proxy correlation:")
        groups = (correlations.groupby("region", sort=True) if "region" in correlations
                  else [("all", correlations)])
        for region, grp in groups:
            best = grp.loc[grp["pearson"].abs().idxmax()]
            lines.append(f"  {region} {best['kpi']} lag {int(best['lag'])}: "
                         f"pearson={_fmt(best['pearson'])}")
    if comparison is not None and len(comparison):
        lines.append("actual vs benchmark (deviation = (actual - benchmark) / benchmark):")
        for r in comparison.itertuples(index=False):
            lines.append(f"  {r.region} {r.year} {r.benchmark}: deviation={_fmt(r.deviation)} "
                         f"({r.regime})")
    if transfer is not None and len(transfer):
        med = float(np.median(transfer["reduction"].to_numpy()))
        lines.append(f"transfer: median relative nRMSE reduction={_fmt(med)} "
                     f"over {len(transfer)} runs")
    return lines


def emit_report(out_dir, metrics=None, correlations=None, comparison=None, transfer=None,
                snapshot=None):
    """Write the bundle and return the manifest dict.

    Absent or empty inputs are skipped and listed under ``omitted``. Output
    depends only on the inputs, so identical inputs give identical bytes.
    """
    os.makedirs(os.path.join(out_dir, "plots"), exist_ok=True)
    tables = {"metrics.csv": metrics, "correlations.csv": correlations,
              "benchmark_comparison.csv": comparison, "transfer_report.csv": transfer}
    written, omitted = [], []
    for name, frame in tables.items():
        if frame is None or len(frame) == 0:
            omitted.append(name)
            continue
        _write_csv(frame, os.path.join(out_dir, name))
        written.append(name)
    plots = plot_tables(metrics, correlations, comparison, transfer, snapshot)
    for stem in sorted(plots):
        rel = f"plots/{stem}.csv"
        _write_csv(plots[stem], os.path.join(out_dir, rel))
        written.append(rel)
    # the median reduction quoted in the summary must be machine-readable too
    lines = summary_lines(metrics, correlations, comparison, transfer)
    if transfer is not None and len(transfer):
        med = pd.DataFrame({"statistic": ["median_reduction"],
                            "value": [float(np.median(transfer["reduction"].to_numpy()))]})
        _write_csv(med, os.path.join(out_dir, "transfer_summary.csv"))
        written.append("transfer_summary.csv")
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    written.append("summary.txt")

    manifest = {"files": {rel: _sha256(os.path.join(out_dir, rel)) for rel in sorted(written)},
                "omitted": sorted(omitted)}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8",
              newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
