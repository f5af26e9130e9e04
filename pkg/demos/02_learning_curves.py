"""
Learning curves on an overfitting problem
=========================================

Trains the reinforced classifier and the dropout+L2 baseline on the same
split of the desk-scale overfitting suite and prints their curves side by
side, every 25 epochs. The full curves go to CSV files next to this script
when ``--save`` is given.
"""

import sys
from pathlib import Path

from reinforced_classifier.harness import cmd_train, load_config, read_records

HERE = Path(__file__).resolve().parent
config = load_config(HERE.parent / "configs" / "overfit_suite.txt")
out = HERE / "curves_out" if "--save" in sys.argv else None

results = {}
for method in ("reinforced", "dropout+l2"):
    cfg = config.with_train(method=method)
    run_dir = (out or Path("/tmp/reinforced_demo")) / method
    outcome = cmd_train(cfg, run_dir)
    results[method] = outcome
    print(method, "->", read_records(run_dir / "manifest.txt")["outcome.table_row"])

# accuracy curves, train / validation / test
print()
print("epoch   reinforced (tr/va/te)   dropout+L2 (tr/va/te)")
hist = {m: o.result.history for m, o in results.items()}
for k in range(0, len(hist["reinforced"]), 25):
    cells = []
    for m in ("reinforced", "dropout+l2"):
        e = hist[m][k]
        cells.append(f"{e.train_acc:.2f} {e.val_acc:.2f} {e.test_acc:.2f}")
    print(f"{k:5d}   {cells[0]:>20s}   {cells[1]:>20s}")

# the train/validation gap over the last quarter of training
for m, h in hist.items():
    tail = h[-len(h) // 4:]
    gap = sum(abs(e.train_acc - e.val_acc) for e in tail) / len(tail)
    print(f"{m}: mean |train - val| over final quarter {gap:.3f}")
