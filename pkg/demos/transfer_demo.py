"""
Borrowing a dense region's model for a sparse one
=================================================

Train on the data-rich region, then fine-tune on a quarter of the sparse
region's training rows. Compare with fitting those rows from scratch.
"""

import numpy as np

from specdemand.pipeline import process_region, transfer_study
from specdemand.synthgen import default_coupling, get_profile
from specdemand.transfer import TransferConfig, transfer_report

seed = 3
src = process_region(get_profile("toronto-like"), default_coupling(), seed).panel
tgt = process_region(get_profile("ottawa-like"), default_coupling(), seed).panel
print("source rows", len(src), "target rows", len(tgt))

cfg = TransferConfig(target_fraction=0.25)
source, rows = transfer_study(src, tgt, cfg, seeds=range(5))
print("source holdout accuracy", round(source.holdout.accuracy, 3))

rep = transfer_report(rows)
print(rep[["seed", "nrmse_with", "nrmse_without", "reduction"]].to_string(index=False))
print("median reduction", round(float(np.median(rep["reduction"])), 3))

# more target data shrinks the benefit
for frac in (0.1, 0.25, 0.5, 1.0):
    _, r = transfer_study(src, tgt, TransferConfig(target_fraction=frac), seeds=range(3))
    print(f"fraction {frac:.2f}: median reduction "
          f"{np.median([o.relative_nrmse_reduction for _, _, o in r]):+.3f}")
