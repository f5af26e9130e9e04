"""
Ten random splits
=================

Runs both methods on ten stratified splits of the overfitting suite, then
prints the per-method error distribution and the paired sign-flip test.
This is what the acceptance suite checks; it takes about half a minute.
"""

import csv
import tempfile
from pathlib import Path

from reinforced_classifier.harness import cmd_compare, load_config

HERE = Path(__file__).resolve().parent
config = load_config(HERE.parent / "configs" / "overfit_suite.txt")
out = Path(tempfile.mkdtemp(prefix="ten_splits_"))

cmd_compare(config, out, progress=lambda r: print(
    f"split {r['split']}  {r['method']:>10s}  test error {r['test_error']:6.2f}  "
    f"gap {r['gap']:6.2f}"))

print()
with open(out / "report.csv") as fh:
    for row in csv.DictReader(fh):
        who = row["method"] + (" - " + row["other"] if row["other"] else "")
        p = f"  p = {float(row['p_value']):.4f}" if row["p_value"] else ""
        print(f"{row['section']:>18s}  {who:>25s}  mean {float(row['mean']):7.2f}  "
              f"sd {float(row['sd']):6.2f}  median {float(row['median']):7.2f}{p}")
print("\nartifacts in", out)
