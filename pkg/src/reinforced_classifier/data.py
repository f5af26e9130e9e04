"""Small labeled datasets: synthetic generators, CSV I/O and 3:1:1 splitting."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

FAMILIES = ("blobs", "rings", "textured-patches")
SPLIT_RATIO = (3, 1, 1)


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    inputs: np.ndarray  # (N, *input_shape)
    labels: np.ndarray  # (N,) int
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if inputs.ndim < 2 or len(inputs) != len(labels):
            raise DataError("inputs must be (N, ...) with one label per sample")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataError("label outside [0, num_classes)")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.inputs.shape[1:]

    def class_counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.num_classes).tolist()

    def subset(self, indices, name: str | None = None) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=int)
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.num_classes,
                              name or self.name)

    def validate(self) -> None:
        counts = self.class_counts()
        if min(counts) < 1:
            raise DataError(f"{self.name}: every class needs at least one sample, got {counts}")

    def equals(self, other: "LabeledDataset", atol: float = 0.0) -> bool:
        return (self.num_classes == other.num_classes
                and self.inputs.shape == other.inputs.shape
                and np.array_equal(self.labels, other.labels)
                and np.allclose(self.inputs, other.inputs, rtol=0.0, atol=atol))


@dataclass(frozen=True, eq=False)
class Split:
    train: LabeledDataset
    validation: LabeledDataset
    test: LabeledDataset
    seed: int
    train_index: np.ndarray = None
    validation_index: np.ndarray = None
    test_index: np.ndarray = None


# --------------------------------------------------------------------------
# generators


def _blobs(rng, counts, shape, noise):
    dim = int(np.prod(shape))
    centres = rng.standard_normal((len(counts), dim))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    labels = np.repeat(np.arange(len(counts)), counts)
    x = centres[labels] + noise * rng.standard_normal((len(labels), dim))
    return x.reshape((len(labels),) + tuple(shape)), labels


def _rings(rng, counts, shape, noise):
    dim = int(np.prod(shape))
    if dim < 2:
        raise DataError("rings need at least two features")
    labels = np.repeat(np.arange(len(counts)), counts)
    theta = rng.uniform(0.0, 2 * np.pi, len(labels))
    radius = labels + 1.0 + noise * rng.standard_normal(len(labels))
    x = noise * rng.standard_normal((len(labels), dim))
    x[:, 0] = radius * np.cos(theta)
    x[:, 1] = radius * np.sin(theta)
    return x.reshape((len(labels),) + tuple(shape)), labels


def _textured_patches(rng, counts, shape, noise):
    if len(shape) != 3 or shape[0] < 4 or shape[1] < 4:
        raise DataError(f"textured-patches need an (H>=4, W>=4, C) shape, got {shape}")
    h, w, c = shape
    k = len(counts)
    labels = np.repeat(np.arange(k), counts)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # one orientation per class, evenly spread over half a turn
    angles = np.pi * np.arange(k) / k
    freq = 2 * np.pi / 4.0
    phase = rng.uniform(0.0, 2 * np.pi, len(labels))
    proj = (np.cos(angles)[labels, None, None] * xx + np.sin(angles)[labels, None, None] * yy)
    img = np.cos(freq * proj + phase[:, None, None])
    x = np.repeat(img[..., None], c, axis=-1)
    x = x + noise * rng.standard_normal(x.shape)
    return x, labels


_GENERATORS = {"blobs": _blobs, "rings": _rings, "textured-patches": _textured_patches}


def generate_synthetic(family: str, class_counts: Sequence[int], input_shape: Sequence[int],
                       noise: float, seed: int, name: str | None = None) -> LabeledDataset:
    """Deterministic synthetic dataset.

    blobs: one unit-norm centre per class plus isotropic Gaussian noise.
    rings: concentric circles of radius k+1 in the first two features, the
    remaining features pure noise. textured-patches: oriented sinusoidal
    gratings with random phase, one orientation per class.
    """
    if family not in _GENERATORS:
        raise DataError(f"unsupported family {family!r}; choose from {', '.join(FAMILIES)}")
    counts = [int(c) for c in class_counts]
    if not counts or min(counts) < 1:
        raise DataError("class_counts must be non-empty and all >= 1")
    if noise < 0:
        raise DataError("noise must be non-negative")
    shape = tuple(int(d) for d in input_shape)
    if not shape or min(shape) < 1:
        raise DataError(f"bad input shape {shape}")
    rng = np.random.default_rng(seed)
    x, y = _GENERATORS[family](rng, counts, shape, float(noise))
    return LabeledDataset(x, y, len(counts), name or family)


# --------------------------------------------------------------------------
# CSV


def save_csv(dataset: LabeledDataset, path) -> None:
    """``label,f0,...`` with a ``# shape=...`` line when inputs are not flat."""
    n_feat = int(np.prod(dataset.input_shape))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label"] + [f"f{i}" for i in range(n_feat)])
    if len(dataset.input_shape) > 1:
        buf.write("# shape=" + ",".join(str(d) for d in dataset.input_shape) + "\n")
    flat = dataset.inputs.reshape(len(dataset), -1)
    for label, row in zip(dataset.labels, flat):
        writer.writerow([int(label)] + [repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_csv(path, num_classes: int | None = None, name: str | None = None) -> LabeledDataset:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].strip():
        raise DataError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "label" or len(header) < 2:
        raise DataError(f"{path}:1: header must be 'label,f0,f1,...'")
    width = len(header)
    shape = (width - 1,)
    labels, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("# shape=") and lineno == 2:
                try:
                    shape = tuple(int(d) for d in line[len("# shape="):].split(","))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: malformed shape line") from None
                if int(np.prod(shape)) != width - 1:
                    raise DataError(f"{path}:{lineno}: shape {shape} does not match {width - 1} features")
            continue
        fields = line.split(",")
        if len(fields) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(fields)}")
        try:
            label = int(fields[0])
            values = [float(v) for v in fields[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if label < 0 or (num_classes is not None and label >= num_classes):
            raise DataError(f"{path}:{lineno}: unknown label {label}")
        labels.append(label)
        rows.append(values)
    if not rows:
        raise DataError(f"{path}: no samples")
    k = num_classes if num_classes is not None else max(labels) + 1
    x = np.array(rows).reshape((len(rows),) + shape)
    ds = LabeledDataset(x, labels, k, name or path.stem)
    ds.validate()
    return ds


# --------------------------------------------------------------------------
# splitting


def split_counts(n: int, ratio: Sequence[int] = SPLIT_RATIO) -> list[int]:
    """Largest-remainder apportionment of ``n``; ties favour earlier parts."""
    total = sum(ratio)
    quotas = [n * r / total for r in ratio]
    counts = [int(np.floor(q)) for q in quotas]
    rema = [q - c for q, c in zip(quotas, counts)]
    order = sorted(range(len(ratio)), key=lambda i: (-rema[i], i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_counts(class_counts: Sequence[int],
                      ratio: Sequence[int] = SPLIT_RATIO) -> np.ndarray:
    """(classes, parts) table of sample counts.

    Part totals follow :func:`split_counts` of the whole dataset; each class
    gets its floored quota plus at most one extra sample per part, extras
    going to the parts still short of their total, then to the larger
    fractional remainder, then to the earlier part.
    """
    total = sum(ratio)
    quotas = np.array([[n * r / total for r in ratio] for n in class_counts])
    table = np.floor(quotas).astype(int)
    frac = quotas - table
    need = np.array(split_counts(int(sum(class_counts)), ratio)) - table.sum(axis=0)
    extras = np.asarray(class_counts) - table.sum(axis=1)
    for c in sorted(range(len(class_counts)), key=lambda c: (-extras[c], c)):
        parts = sorted(range(len(ratio)), key=lambda p: (-need[p], -frac[c, p], p))
        for p in parts[:extras[c]]:
            table[c, p] += 1
            need[p] -= 1
    assert np.all(need == 0) and np.array_equal(table.sum(axis=1), class_counts)
    return table


def split_311(dataset: LabeledDataset, seed: int) -> Split:
    """Stratified train/validation/test split in the ratio 3:1:1."""
    counts = dataset.class_counts()
    if min(counts) < sum(SPLIT_RATIO):
        raise DataError(f"every class needs >= {sum(SPLIT_RATIO)} samples to stratify, got {counts}")
    table = stratified_counts(counts)
    rng = np.random.default_rng(seed)
    parts = [[], [], []]
    for c in range(dataset.num_classes):
        members = rng.permutation(np.flatnonzero(dataset.labels == c))
        start = 0
        for p, size in enumerate(table[c]):
            parts[p].extend(members[start:start + size].tolist())
            start += size
    idx = [np.sort(np.array(p, dtype=int)) for p in parts]
    return Split(dataset.subset(idx[0], f"{dataset.name}-train"),
                 dataset.subset(idx[1], f"{dataset.name}-val"),
                 dataset.subset(idx[2], f"{dataset.name}-test"),
                 seed, idx[0], idx[1], idx[2])
