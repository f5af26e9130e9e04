"""Flat ``key = value`` experiment configs and run manifests.

One setting per line, ``#`` starts a comment. Training keys are the
:class:`TrainConfig` field names; everything else is listed in
:data:`HARNESS_DEFAULTS`. Keys under ``outcome.``, ``artifact.`` and
``network.`` are written by the harness and skipped on load, so any
manifest can be fed back in as a config.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from ..trainer import TrainConfig

RECORD_PREFIXES = ("outcome.", "artifact.", "network.")

HARNESS_DEFAULTS = {
    "dataset.family": "blobs",
    "dataset.class_counts": "20,20,20",
    "dataset.input_shape": "2",
    "dataset.noise": "1.0",
    "dataset.seed": "0",
    "dataset.name": "",
    "dataset.path": "",
    "split_seed": "0",
    "withhold_test": "false",
    "splits": "10",
    "methods": "reinforced,dropout+l2",
    "iterations": "10000",
    "perm_seed": "0",
}


class ConfigError(ValueError):
    pass


def _int_tuple(text: str) -> tuple[int, ...]:
    text = text.strip().strip("()")
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_TRAIN_DEFAULTS = TrainConfig()


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    allowed = set(HARNESS_DEFAULTS) | set(TrainConfig.field_names())
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith(RECORD_PREFIXES):
            continue
        if key not in allowed:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment: dataset, split, training and compare settings."""
    train: TrainConfig
    family: str
    class_counts: tuple[int, ...]
    input_shape: tuple[int, ...]
    noise: float
    dataset_seed: int
    dataset_name: str
    dataset_path: str
    split_seed: int
    withhold_test: bool
    splits: int
    methods: tuple[str, ...]
    iterations: int
    perm_seed: int

    @classmethod
    def from_mapping(cls, values: dict[str, str], base_dir: Path | None = None,
                     seed: int | None = None) -> "ExperimentConfig":
        raw = dict(HARNESS_DEFAULTS)
        raw.update({k: v for k, v in values.items() if k in HARNESS_DEFAULTS})
        train_kwargs = {}
        for f in fields(TrainConfig):
            if f.name not in values:
                continue
            default = getattr(_TRAIN_DEFAULTS, f.name)
            text = values[f.name]
            try:
                if isinstance(default, bool):
                    train_kwargs[f.name] = _bool(text)
                elif isinstance(default, tuple):
                    train_kwargs[f.name] = _int_tuple(text)
                elif isinstance(default, int):
                    train_kwargs[f.name] = int(text)
                elif isinstance(default, float):
                    train_kwargs[f.name] = float(text)
                else:
                    train_kwargs[f.name] = text
            except ValueError as exc:
                raise ConfigError(f"bad value for {f.name!r}: {exc}") from None
        if seed is not None:
            train_kwargs["seed"] = seed
        try:
            train = TrainConfig(**train_kwargs)
            path = raw["dataset.path"]
            if path and base_dir is not None and not Path(path).is_absolute():
                path = str((base_dir / path).resolve())
            cfg = cls(
                train=train,
                family=raw["dataset.family"],
                class_counts=_int_tuple(raw["dataset.class_counts"]),
                input_shape=_int_tuple(raw["dataset.input_shape"]),
                noise=float(raw["dataset.noise"]),
                dataset_seed=int(raw["dataset.seed"]),
                dataset_name=raw["dataset.name"],
                dataset_path=path,
                split_seed=int(raw["split_seed"]),
                withhold_test=_bool(raw["withhold_test"]),
                splits=int(raw["splits"]),
                methods=tuple(m.strip() for m in raw["methods"].split(",") if m.strip()),
                iterations=int(raw["iterations"]),
                perm_seed=int(raw["perm_seed"]),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for m in cfg.methods:
            if m not in ("reinforced", "supervised", "dropout", "dropout+l2"):
                raise ConfigError(f"unknown method {m!r} in methods")
        return cfg

    def with_train(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, train=self.train.with_(**changes))

    def with_(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def lines(self) -> list[str]:
        """Every setting as ``key = value``; loading these gives back an equal config."""
        out = ["# dataset"]
        out += [f"dataset.path = {self.dataset_path}"] if self.dataset_path else [
            f"dataset.family = {self.family}",
            f"dataset.class_counts = {_fmt(self.class_counts)}",
            f"dataset.input_shape = {_fmt(self.input_shape)}",
            f"dataset.noise = {_fmt(self.noise)}",
            f"dataset.seed = {self.dataset_seed}",
        ]
        out += [f"dataset.name = {self.dataset_name}",
                f"split_seed = {self.split_seed}",
                f"withhold_test = {_fmt(self.withhold_test)}",
                "# training"]
        out += [f"{name} = {_fmt(getattr(self.train, name))}" for name in TrainConfig.field_names()]
        out += ["# comparison",
                f"splits = {self.splits}",
                f"methods = {','.join(self.methods)}",
                f"iterations = {self.iterations}",
                f"perm_seed = {self.perm_seed}"]
        return out


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return ExperimentConfig.from_mapping(parse_lines(text, str(path)), path.parent, seed)


def default_config(seed: int | None = None) -> ExperimentConfig:
    return ExperimentConfig.from_mapping({}, None, seed)


def write_manifest(path, config: ExperimentConfig, records: dict[str, object]) -> None:
    """Config lines followed by ``artifact.*`` / ``outcome.*`` / ``network.*`` records."""
    lines = config.lines()
    if records:
        lines.append("# records")
        lines += [f"{k} = {_fmt(v)}" for k, v in records.items()]
    Path(path).write_text("".join(line.rstrip() + "\n" for line in lines), encoding="utf-8")


def read_records(path) -> dict[str, str]:
    """The record lines of a manifest as raw strings."""
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith(RECORD_PREFIXES):
                out[key] = value
    return out
