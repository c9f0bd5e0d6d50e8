"""
Measured bandwidth against planning benchmarks
==============================================

Yearly mean deployed bandwidth compared with four benchmark levels, then the
whole report bundle written to a temporary directory.
"""

import json
import tempfile

from specdemand.benchreport import ItuBenchmarks, emit_report
from specdemand.config import default_config
from specdemand.features import correlation_report
from specdemand.pipeline import benchmark_table, process_region, train_region
from specdemand.synthgen import default_coupling, get_profile

# placeholder MHz levels, not official figures
bench = ItuBenchmarks(vanilla_high=240.0, vanilla_low=200.0, modernized_high=180.0,
                      modernized_low=150.0)

profile = get_profile("ottawa-like")
run = process_region(profile, default_coupling(), seed=0)
mcfg = default_config()["models"]
mcfg["random_forest"]["n_trees"] = 20
metrics, preds, _, _ = train_region(run.panel, mcfg, 0, profile.name)

table = benchmark_table(run.proxy, preds, profile, bench)
print(table[["year", "benchmark", "actual_mhz", "deviation", "regime"]].to_string(index=False))

with tempfile.TemporaryDirectory() as out:
    man = emit_report(out, metrics, correlation_report(run.panel).table, table)
    print(json.dumps(sorted(man["files"]), indent=1))
    print("omitted:", man["omitted"])
    print(open(f"{out}/summary.txt").read())
