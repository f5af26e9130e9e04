"""The four experiment commands: generate, train, compare and report.

Each takes a resolved :class:`ExperimentConfig` and an output directory and
writes plain-text artifacts only; identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import io
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import LabeledDataset, Split, generate_synthetic, load_csv, save_csv, split_311
from ..engine import ParameterSet
from ..trainer import DISPLAY_NAMES, EpochMetrics, TrainResult, train
from .config import ExperimentConfig, write_manifest
from .stats import paired_permutation_test, summary

CURVE_COLUMNS = ("epoch", "train_acc", "val_acc", "test_acc", "train_loss", "val_loss", "test_loss")
RUN_COLUMNS = ("method", "split", "split_seed", "seed", "optimal_epoch", "train_error",
               "val_error", "test_error", "gap", "final_quarter_gap")
REPORT_COLUMNS = ("section", "method", "other", "n", "mean", "sd", "median", "p_value")
REPORT_SECTIONS = ("test_error", "gap", "final_quarter_gap")


class HarnessError(RuntimeError):
    pass


def _num(x) -> str:
    return "" if x is None else repr(float(x))


# --------------------------------------------------------------------------
# datasets


def load_dataset(cfg: ExperimentConfig) -> LabeledDataset:
    if cfg.dataset_path:
        return load_csv(cfg.dataset_path, name=cfg.dataset_name or None)
    return generate_synthetic(cfg.family, cfg.class_counts, cfg.input_shape, cfg.noise,
                              cfg.dataset_seed, cfg.dataset_name or None)


def make_split(dataset: LabeledDataset, cfg: ExperimentConfig) -> Split:
    sp = split_311(dataset, cfg.split_seed)
    if cfg.withhold_test:
        sp = Split(sp.train, sp.validation, None, sp.seed,
                   sp.train_index, sp.validation_index, sp.test_index)
    return sp


def cmd_generate(cfg: ExperimentConfig, out: Path) -> Path:
    if cfg.dataset_path:
        raise HarnessError("generate needs dataset.family settings, not dataset.path")
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg)
    save_csv(ds, out / "dataset.csv")
    write_manifest(out / "manifest.txt", cfg, {
        "artifact.dataset": "dataset.csv",
        "outcome.rows": len(ds),
        "outcome.class_counts": tuple(ds.class_counts()),
    })
    return out / "dataset.csv"


# --------------------------------------------------------------------------
# single run


def table_row(method: str, metrics: EpochMetrics) -> str:
    """``Name,train,val,test`` with errors as percentages to two decimals."""
    cells = [DISPLAY_NAMES.get(method, method)]
    for acc in (metrics.train_acc, metrics.val_acc, metrics.test_acc):
        cells.append("" if acc is None else f"{100 * (1 - acc):.2f}")
    return ",".join(cells)


def final_quarter_gap(history: list[EpochMetrics]) -> float:
    """Mean |train_acc - val_acc| over the last quarter of epochs (at least one)."""
    tail = history[-max(1, len(history) // 4):]
    return float(np.mean([abs(m.train_acc - m.val_acc) for m in tail]))


def save_checkpoint(params: ParameterSet, path) -> None:
    """``.npz`` archive with fixed timestamps so the bytes are reproducible."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, t in params:
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(t.values), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


@dataclass
class RunOutcome:
    result: TrainResult
    records: dict


def _network_description(result: TrainResult) -> str:
    return " ".join(type(l).__name__ + (f"({l.out_dim})" if hasattr(l, "out_dim") else
                                        f"({l.out_channels})" if hasattr(l, "out_channels") else "")
                    for l in result.policy.spec.layers)


def cmd_train(cfg: ExperimentConfig, out: Path, dataset: LabeledDataset | None = None) -> RunOutcome:
    """One training run: ``curves.csv``, ``checkpoint.npz`` and ``manifest.txt``."""
    out.mkdir(parents=True, exist_ok=True)
    ds = dataset if dataset is not None else load_dataset(cfg)
    split = make_split(ds, cfg)
    curves = out / "curves.csv"
    with_test = split.test is not None
    try:
        with open(curves, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CURVE_COLUMNS)

            def on_epoch(m: EpochMetrics):
                writer.writerow([m.epoch, _num(m.train_acc), _num(m.val_acc), _num(m.test_acc),
                                 _num(m.train_loss), _num(m.val_loss), _num(m.test_loss)])

            result = train(split, cfg.train, on_epoch)
    except BaseException:
        curves.unlink(missing_ok=True)
        raise
    save_checkpoint(result.optimal_params, out / "checkpoint.npz")
    best = result.optimal
    records = {
        "artifact.curves": "curves.csv",
        "artifact.checkpoint": "checkpoint.npz",
        "network.input_shape": tuple(result.policy.spec.input_shape),
        "network.layers": _network_description(result),
        "network.parameters": result.policy.params.size(),
        "outcome.split_sizes": (len(split.train), len(split.validation),
                                len(split.test) if with_test else 0),
        "outcome.optimal_epoch": result.optimal_epoch,
        "outcome.train_error": 100 * (1 - best.train_acc),
        "outcome.val_error": 100 * (1 - best.val_acc),
        "outcome.test_error": "" if not with_test else 100 * (1 - best.test_acc),
        "outcome.gap": "" if not with_test else 100 * (best.train_acc - best.test_acc),
        "outcome.final_quarter_gap": 100 * final_quarter_gap(result.history),
        "outcome.table_row": table_row(cfg.train.method, best),
    }
    write_manifest(out / "manifest.txt", cfg, records)
    return RunOutcome(result, records)


# --------------------------------------------------------------------------
# comparison


def run_config(cfg: ExperimentConfig, method: str, k: int) -> ExperimentConfig:
    """Settings of split ``k`` for ``method``: split and training seeds both shift by k."""
    return cfg.with_(split_seed=cfg.split_seed + k).with_train(method=method, seed=cfg.train.seed + k)


def cmd_compare(cfg: ExperimentConfig, out: Path, progress=None) -> list[dict]:
    if len(cfg.methods) < 2:
        raise HarnessError("compare needs at least two methods")
    if cfg.splits < 2:
        raise HarnessError("compare needs at least two splits")
    if cfg.withhold_test:
        raise HarnessError("compare reports test error; withhold_test must be false")
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg)
    rows = []
    for k in range(cfg.splits):
        for method in cfg.methods:
            run_cfg = run_config(cfg, method, k)
            run_dir = out / "runs" / f"{method}_split{k}"
            try:
                outcome = cmd_train(run_cfg, run_dir, ds)
            except Exception as exc:
                raise HarnessError(f"run {method} split {k} failed: {exc}") from exc
            r = outcome.records
            rows.append({"method": method, "split": k, "split_seed": run_cfg.split_seed,
                         "seed": run_cfg.train.seed,
                         "optimal_epoch": r["outcome.optimal_epoch"],
                         "train_error": r["outcome.train_error"],
                         "val_error": r["outcome.val_error"],
                         "test_error": r["outcome.test_error"],
                         "gap": r["outcome.gap"],
                         "final_quarter_gap": r["outcome.final_quarter_gap"]})
            if progress is not None:
                progress(rows[-1])
    write_runs(rows, out / "runs.csv")
    report = build_report(rows, cfg.methods, cfg.iterations, cfg.perm_seed)
    write_report(report, out / "report.csv")
    write_manifest(out / "manifest.txt", cfg, {
        "artifact.runs": "runs.csv",
        "artifact.report": "report.csv",
        "outcome.runs": len(rows),
    })
    return rows


def write_runs(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in rows:
            w.writerow([r["method"], r["split"], r["split_seed"], r["seed"], r["optimal_epoch"]]
                       + [_num(r[c]) for c in RUN_COLUMNS[5:]])


def read_runs(path) -> list[dict]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RUN_COLUMNS:
                raise HarnessError(f"{path}: unexpected columns {reader.fieldnames}")
            rows = []
            for r in reader:
                row = {"method": r["method"]}
                row.update({c: int(r[c]) for c in RUN_COLUMNS[1:5]})
                row.update({c: float(r[c]) for c in RUN_COLUMNS[5:]})
                rows.append(row)
    except OSError as exc:
        raise HarnessError(f"cannot read {path}: {exc.strerror}") from None
    return rows


def build_report(rows: list[dict], methods=None, iterations: int = 10_000,
                 seed: int = 0) -> list[dict]:
    """Per-method summaries and pairwise paired tests for every report section.

    Pairwise rows summarise the per-split differences ``method - other``.
    """
    if methods is None:
        methods = list(dict.fromkeys(r["method"] for r in rows))
    by = {m: sorted((r for r in rows if r["method"] == m), key=lambda r: r["split"])
          for m in methods}
    for m, rs in by.items():
        if not rs:
            raise HarnessError(f"no runs recorded for method {m!r}")
    out = []
    for section in REPORT_SECTIONS:
        for m in methods:
            n, mean, sd, med = summary([r[section] for r in by[m]])
            out.append(dict(section=section, method=m, other="", n=n, mean=mean, sd=sd,
                            median=med, p_value=None))
        for i, a in enumerate(methods):
            for b in methods[i + 1:]:
                if [r["split"] for r in by[a]] != [r["split"] for r in by[b]]:
                    raise HarnessError(f"methods {a} and {b} were not run on the same splits")
                xa = [r[section] for r in by[a]]
                xb = [r[section] for r in by[b]]
                n, mean, sd, med = summary(np.subtract(xa, xb))
                p = paired_permutation_test(xa, xb, iterations, seed)
                out.append(dict(section=section, method=a, other=b, n=n, mean=mean, sd=sd,
                                median=med, p_value=p))
    return out


def write_report(report: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report:
            w.writerow([r["section"], r["method"], r["other"], r["n"], _num(r["mean"]),
                        _num(r["sd"]), _num(r["median"]), _num(r["p_value"])])


def cmd_report(cfg: ExperimentConfig, out: Path) -> list[dict]:
    rows = read_runs(out / "runs.csv")
    methods = [m for m in cfg.methods if any(r["method"] == m for r in rows)]
    if len(methods) < 2:
        methods = None
    report = build_report(rows, methods, cfg.iterations, cfg.perm_seed)
    write_report(report, out / "report.csv")
    return report
