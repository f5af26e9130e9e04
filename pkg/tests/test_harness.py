import csv
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reinforced_classifier.data import load_csv
from reinforced_classifier.harness import (ConfigError, HarnessError, build_report, cmd_compare,
                                           cmd_generate, cmd_train, load_checkpoint,
                                           load_config, paired_permutation_test, read_records,
                                           read_runs, summary, table_row)
from reinforced_classifier.harness.cli import main
from reinforced_classifier.trainer import EpochMetrics

from oracles import exact_sign_flip_p

SMALL = """\
# tiny blobs problem
dataset.family = blobs
dataset.class_counts = 5,5,5
dataset.input_shape = 4
dataset.noise = 0.5
epochs = 5
hidden = 6
policy_rate = 0.1
tilt_rate = 0.05
value_rate = 0.01
supervised_rate = 0.05
splits = 2
methods = reinforced,dropout+l2
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.txt"
    p.write_text(SMALL)
    return p


# ---------------------------------------------------------------- statistics


def test_summary_examples():
    assert summary([20, 20, 20]) == (3, 20.0, 0.0, 20.0)
    assert summary([10, 20, 30]) == (3, 20.0, 10.0, 20.0)


def test_identical_errors_give_p_one():
    a = [10.0, 20.0, 15.0, 30.0]
    assert paired_permutation_test(a, a, 1000) == 1.0
    assert paired_permutation_test(a * 5, a * 5, 1000) == 1.0  # Monte Carlo branch


def test_constant_shift_hits_all_same_sign_bound():
    b = np.linspace(5, 50, 10)
    p = paired_permutation_test(b + 30, b, 10_000)
    assert p == pytest.approx(2 / 1024, abs=1e-15)


def test_length_mismatch_and_iteration_floor():
    with pytest.raises(ValueError):
        paired_permutation_test([1, 2, 3], [1, 2], 1000)
    with pytest.raises(ValueError):
        paired_permutation_test([1, 2], [2, 1], 999)


def test_monte_carlo_is_seeded_and_close_to_exact():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=16), rng.normal(size=16)
    p1 = paired_permutation_test(a, b, 20_000, seed=3)
    assert p1 == paired_permutation_test(a, b, 20_000, seed=3)
    exact = exact_sign_flip_p(a, b)
    assert abs(p1 - exact) < 4 * np.sqrt(exact * (1 - exact) / 20_000) + 1e-4


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 100), st.integers(0, 100)), min_size=2, max_size=9))
def test_exact_branch_matches_oracle_and_is_symmetric(pairs):
    a = [float(x) for x, _ in pairs]
    b = [float(y) for _, y in pairs]
    p = paired_permutation_test(a, b, 1000)
    assert p == pytest.approx(exact_sign_flip_p(a, b), abs=1e-12)
    assert p == paired_permutation_test(b, a, 1000)
    assert 0 < p <= 1


def test_table_row_format():
    m = EpochMetrics(3, 0.1, 0.5, 0.6, 1 - 0.0722, 1 - 0.1667, 1 - 0.1833)
    assert table_row("reinforced", m) == "Reinforced,7.22,16.67,18.33"
    withheld = EpochMetrics(3, 0.1, 0.5, None, 0.9, 0.8, None)
    assert table_row("dropout+l2", withheld) == "Dropout+L2,10.00,20.00,"


def test_report_matches_independent_recomputation():
    rng = np.random.default_rng(1)
    rows = []
    for k in range(6):
        for m in ("reinforced", "dropout+l2", "supervised"):
            rows.append(dict(method=m, split=k, split_seed=k, seed=k, optimal_epoch=1,
                             train_error=0.0, val_error=1.0,
                             test_error=float(rng.uniform(0, 50)), gap=float(rng.uniform(0, 30)),
                             final_quarter_gap=float(rng.uniform(0, 30))))
    report = build_report(rows)
    for r in report:
        xa = [x[r["section"]] for x in rows if x["method"] == r["method"]]
        if r["other"]:
            xb = [x[r["section"]] for x in rows if x["method"] == r["other"]]
            d = [u - v for u, v in zip(xa, xb)]
            assert r["p_value"] == pytest.approx(exact_sign_flip_p(xa, xb), abs=1e-12)
        else:
            d = xa
            assert r["p_value"] is None
        assert r["n"] == len(d)
        assert r["mean"] == pytest.approx(statistics.fmean(d), abs=1e-9)
        assert r["sd"] == pytest.approx(statistics.stdev(d), abs=1e-9)
        assert r["median"] == pytest.approx(statistics.median(d), abs=1e-9)
    assert len(report) == 3 * (3 + 3)


# ---------------------------------------------------------------- config


def test_unknown_key_is_named(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("epochs = 3\nlearning_rat = 0.1\n")
    with pytest.raises(ConfigError, match="learning_rat"):
        load_config(p)


def test_bad_value_is_named(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("epochs = many\n")
    with pytest.raises(ConfigError, match="epochs"):
        load_config(p)


def test_manifest_round_trips_config(small_config, tmp_path):
    cfg = load_config(small_config, seed=7)
    assert cfg.train.seed == 7 and cfg.train.hidden == (6,)
    out = tmp_path / "run"
    cmd_train(cfg, out)
    assert load_config(out / "manifest.txt") == cfg


# ---------------------------------------------------------------- commands


def test_generate_counts_and_determinism(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("dataset.family = blobs\ndataset.class_counts = 100,100,100\n")
    cfg = load_config(p)
    cmd_generate(cfg, tmp_path / "a")
    cmd_generate(load_config(tmp_path / "a" / "manifest.txt"), tmp_path / "b")
    ds = load_csv(tmp_path / "a" / "dataset.csv")
    assert len(ds) == 300
    for name in ("dataset.csv", "manifest.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_family_named(tmp_path, capsys):
    p = tmp_path / "g.txt"
    p.write_text("dataset.family = spirals\n")
    assert main(["generate", "--config", str(p), "--out", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err.strip()
    assert "spirals" in err and len(err.splitlines()) == 1


def test_train_outputs(small_config, tmp_path):
    out = tmp_path / "t"
    assert main(["train", "--config", str(small_config), "--out", str(out)]) == 0
    rows = list(csv.reader((out / "curves.csv").open()))
    assert rows[0] == ["epoch", "train_acc", "val_acc", "test_acc", "train_loss", "val_loss",
                       "test_loss"]
    assert len(rows) == 1 + 5
    rec = read_records(out / "manifest.txt")
    k = int(rec["outcome.optimal_epoch"])
    vals = [float(r[2]) for r in rows[1:]]
    assert k == vals.index(max(vals))
    assert rec["outcome.table_row"].startswith("Reinforced,")
    ckpt = load_checkpoint(out / "checkpoint.npz")
    assert set(ckpt) == {"0.weight", "0.bias", "2.weight", "2.bias"}


def test_withheld_test_leaves_cells_empty(small_config, tmp_path):
    text = small_config.read_text() + "withhold_test = true\n"
    small_config.write_text(text)
    out = tmp_path / "w"
    cmd_train(load_config(small_config), out)
    rows = list(csv.DictReader((out / "curves.csv").open()))
    assert all(r["test_acc"] == "" and r["test_loss"] == "" for r in rows)
    assert all(r["train_acc"] != "" for r in rows)
    assert read_records(out / "manifest.txt")["outcome.table_row"].endswith(",")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failed_run_removes_partial_curves(tmp_path):
    p = tmp_path / "diverge.txt"
    # an absurd rate overflows the logits within a few epochs
    p.write_text("dataset.class_counts = 5,5,5\ndataset.input_shape = 4\nmethod = supervised\n"
                 "supervised_rate = 1e200\nepochs = 5\nhidden = 6\n")
    out = tmp_path / "o"
    assert main(["train", "--config", str(p), "--out", str(out)]) != 0
    assert not (out / "curves.csv").exists()


def test_train_reproducible_from_manifest(small_config, tmp_path):
    cmd_train(load_config(small_config), tmp_path / "a")
    cmd_train(load_config(tmp_path / "a" / "manifest.txt"), tmp_path / "b")
    for name in ("curves.csv", "manifest.txt", "checkpoint.npz"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_from_generated_csv(tmp_path):
    g = tmp_path / "g.txt"
    g.write_text("dataset.class_counts = 5,5,5\ndataset.input_shape = 3\n")
    cmd_generate(load_config(g), tmp_path / "data")
    t = tmp_path / "data" / "train.txt"
    t.write_text("dataset.path = dataset.csv\nmethod = supervised\nepochs = 2\nhidden = 4\n")
    cfg = load_config(t)
    assert cfg.dataset_path == str((tmp_path / "data" / "dataset.csv").resolve())
    cmd_train(cfg, tmp_path / "run")
    assert len((tmp_path / "run" / "curves.csv").read_text().splitlines()) == 3


def test_compare_run_count_and_report(small_config, tmp_path):
    out = tmp_path / "cmp"
    cfg = load_config(small_config)
    rows = cmd_compare(cfg, out)
    assert len(rows) == cfg.splits * len(cfg.methods)
    manifests = sorted(out.glob("runs/*/manifest.txt"))
    assert len(manifests) == 4
    assert read_records(out / "manifest.txt")["outcome.runs"] == "4"
    # each per-run manifest reproduces its run
    first = manifests[0]
    cmd_train(load_config(first), tmp_path / "again")
    assert (first.parent / "curves.csv").read_bytes() == \
        (tmp_path / "again" / "curves.csv").read_bytes()
    # report recomputed from runs.csv is identical
    before = (out / "report.csv").read_bytes()
    (out / "report.csv").unlink()
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "report.csv").read_bytes() == before
    # and agrees with a direct recomputation
    runs = read_runs(out / "runs.csv")
    report = list(csv.DictReader((out / "report.csv").open()))
    for r in report:
        xa = [x[r["section"]] for x in runs if x["method"] == r["method"]]
        if r["other"]:
            xb = [x[r["section"]] for x in runs if x["method"] == r["other"]]
            d = [u - v for u, v in zip(xa, xb)]
            assert float(r["p_value"]) == pytest.approx(exact_sign_flip_p(xa, xb), abs=1e-9)
        else:
            d = xa
        assert float(r["mean"]) == pytest.approx(statistics.fmean(d), abs=1e-9)
        assert float(r["sd"]) == pytest.approx(statistics.stdev(d), abs=1e-9)
        assert float(r["median"]) == pytest.approx(statistics.median(d), abs=1e-9)


def test_compare_needs_two_methods(small_config, tmp_path):
    cfg = load_config(small_config).with_(methods=("reinforced",))
    with pytest.raises(HarnessError):
        cmd_compare(cfg, tmp_path / "x")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failed_compare_run_aborts(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("dataset.class_counts = 5,5,5\ndataset.input_shape = 4\nsupervised_rate = 1e200\n"
                 "epochs = 3\nhidden = 6\nsplits = 2\nmethods = reinforced,supervised\n")
    with pytest.raises(HarnessError, match="supervised split 0"):
        cmd_compare(load_config(p), tmp_path / "o")
    assert not (tmp_path / "o" / "report.csv").exists()


def test_report_without_runs_fails(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) != 0


def test_seed_flag_overrides(small_config, tmp_path):
    main(["train", "--config", str(small_config), "--seed", "3", "--out", str(tmp_path / "s")])
    assert load_config(tmp_path / "s" / "manifest.txt").train.seed == 3
