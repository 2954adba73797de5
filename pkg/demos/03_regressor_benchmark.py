"""
Ten regressors on one scenario
==============================

Runs the benchmark pipeline on a small synthetic set: one scenario, three
folds, every technique.  Artifacts land in ``runs/demo``.
"""

import csv
from pathlib import Path

from rolsh import bench

config = bench.config_from_dict({
    "dataset": {"profile": "sift_like", "n": 6000, "d": 32},
    "scenarios": [2],
    "folds": 3,
    "seed": 11,
    "out": "runs/demo",
    "regressors": {"svr": {"max_passes": 200}},
})
report, summary = bench.run_experiment(config, "all")

with open(summary, newline="") as fh:
    rows = sorted(csv.DictReader(fh), key=lambda r: float(r["test_mse"]))
print(f"{'kind':18s} {'cv mse':>10s} {'test mse':>10s} {'R2 (expl.)':>10s} {'R2 (std)':>9s} {'predict ms':>11s}")
for r in rows:
    print(f"{r['kind']:18s} {float(r['cv_mse_mean']):10.2f} {float(r['test_mse']):10.2f} "
          f"{float(r['test_r2_paper']):10.3f} {float(r['test_r2_standard']):9.3f} {float(r['predict_ms']):11.3f}")

# %%
# Every artifact is hashed into the manifest; this re-checks them.
problems = bench.verify_manifest(Path(config.out))
print("manifest ok" if not problems else problems)
