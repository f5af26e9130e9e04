"""Reinforced training (explore / update epochs) and the supervised baselines."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import engine
from .data import LabeledDataset, Split
from .engine import ParameterSet
from .policy import (EpsilonSchedule, MirrorPolicy, Policy, classifier_spec, epsilon_at,
                     sample_action, sync_mirror, tilt, class_distribution)
from .value import ValueNetwork, augmented_state, value, value_update

METHODS = ("reinforced", "supervised", "dropout", "dropout+l2")
DISPLAY_NAMES = {"reinforced": "Reinforced", "supervised": "Supervised",
                 "dropout": "Dropout", "dropout+l2": "Dropout+L2"}


@dataclass(frozen=True)
class TrainConfig:
    method: str = "reinforced"
    epochs: int = 100
    seed: int = 0
    minibatch_size: int = 16
    supervised_rate: float = 1e-4
    policy_rate: float = 1e-3
    tilt_rate: float = 1e-3
    value_rate: float = 1e-3
    c: float = 0.1
    gamma: float = 0.9
    epsilon_start: float = 0.3
    epsilon_end: float = 0.7
    keep_prob: float = 0.5
    l2: float = 0.1
    # "label": unit weight on the true-label term; "advantage": weight it by A too
    supervised_term_weighting: str = "label"
    # scales the advantage-weighted explored-action term; 0 disables it
    reinforce_weight: float = 1.0
    conv_channels: tuple[int, ...] = ()
    hidden: tuple[int, ...] = (64,)
    value_hidden: int = 32
    workers: int = 1
    keep_checkpoints: bool = False

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        for name in ("supervised_rate", "policy_rate", "tilt_rate", "value_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.c < 1:
            raise ValueError("c must lie in (0, 1)")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must lie in (0, 1]")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.epochs < 1 or self.minibatch_size < 1 or self.workers < 1:
            raise ValueError("epochs, minibatch_size and workers must be >= 1")
        if self.supervised_term_weighting not in ("label", "advantage"):
            raise ValueError("supervised_term_weighting must be 'label' or 'advantage'")
        EpsilonSchedule(self.epsilon_start, self.epsilon_end, self.epochs)

    @property
    def effective_keep_prob(self) -> float:
        return self.keep_prob if self.method in ("dropout", "dropout+l2") else 1.0

    @property
    def effective_l2(self) -> float:
        return self.l2 if self.method == "dropout+l2" else 0.0

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class Experience:
    state_index: int
    action: int
    reward: float
    v0: float
    v1: float


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    test_loss: Optional[float]
    train_acc: float
    val_acc: float
    test_acc: Optional[float]


@dataclass
class TrainResult:
    policy: Policy
    history: list[EpochMetrics]
    optimal_epoch: int
    optimal_params: ParameterSet
    valuenet: Optional[ValueNetwork] = None
    checkpoints: list[ParameterSet] = field(default_factory=list)

    @property
    def optimal(self) -> EpochMetrics:
        return self.history[self.optimal_epoch]


# --------------------------------------------------------------------------
# evaluation


def _eval(policy: Policy, dataset: LabeledDataset) -> tuple[float, float]:
    if len(dataset) == 0:
        raise ValueError(f"{dataset.name}: empty dataset")
    probs = class_distribution(policy, dataset.inputs)
    rows = np.arange(len(dataset))
    loss = float(np.mean(-np.log(np.maximum(probs[rows, dataset.labels], engine.PROB_FLOOR))))
    acc = float(np.mean(np.argmax(probs, axis=1) == dataset.labels))
    return loss, acc


def dataset_loss(policy: Policy, dataset: LabeledDataset) -> float:
    """Mean eval-mode cross-entropy."""
    return _eval(policy, dataset)[0]


def dataset_accuracy(policy: Policy, dataset: LabeledDataset) -> float:
    return _eval(policy, dataset)[1]


def evaluate(policy: Policy, split: Split, epoch: int) -> EpochMetrics:
    tr_loss, tr_acc = _eval(policy, split.train)
    va_loss, va_acc = _eval(policy, split.validation)
    te_loss = te_acc = None
    if split.test is not None:
        te_loss, te_acc = _eval(policy, split.test)
    return EpochMetrics(epoch, tr_loss, va_loss, te_loss, tr_acc, va_acc, te_acc)


def select_optimal_epoch(history: list[EpochMetrics]) -> int:
    """Epoch with the highest validation accuracy; the earliest one wins ties."""
    if not history:
        raise ValueError("empty history")
    return int(np.argmax([m.val_acc for m in history]))


# --------------------------------------------------------------------------
# reinforced pieces


def reward(policy: Policy, mirror: Policy, T: LabeledDataset, V: LabeledDataset,
           cached: tuple[float, float] | None = None) -> float:
    """Training plus validation loss improvement of the mirror over the policy.

    ``cached`` holds the policy's (train, validation) losses, which stay valid
    as long as the policy is frozen.
    """
    if cached is None:
        cached = (dataset_loss(policy, T), dataset_loss(policy, V))
    loss_t, loss_v = cached
    return (loss_t - dataset_loss(mirror, T)) + (loss_v - dataset_loss(mirror, V))


def advantage(exp: Experience, gamma: float) -> float:
    return exp.reward + gamma * exp.v1 - exp.v0


def explore_epoch(policy: Policy, valuenet: ValueNetwork, T: LabeledDataset,
                  V: LabeledDataset, epsilon: float, config: TrainConfig,
                  rng: np.random.Generator, workers: int | None = None) -> list[Experience]:
    """Gather one experience per training sample without touching the policy or value.

    Each visit draws from its own stream keyed by the sample index, so the
    result is the same for any number of workers.
    """
    workers = workers or config.workers
    base = int(rng.integers(2**63))
    order = rng.permutation(len(T))
    cached = (dataset_loss(policy, T), dataset_loss(policy, V))
    probs = class_distribution(policy, T.inputs)
    v0 = value(valuenet, augmented_state(policy, T.inputs))

    def run(chunk):
        mirror = MirrorPolicy.of(policy)
        out = []
        for i in chunk:
            i = int(i)
            visit_rng = np.random.default_rng([base, i])
            y = sample_action(probs[i], epsilon, visit_rng)
            sync_mirror(mirror, policy)
            tilt(mirror, T.inputs[i], y, config.tilt_rate)
            r = reward(policy, mirror, T, V, cached)
            v1 = value(valuenet, augmented_state(mirror, T.inputs[i]))
            out.append(Experience(i, y, float(r), float(v0[i]), float(v1)))
        return out

    if workers == 1:
        return run(order)
    chunks = np.array_split(order, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, chunks))
    return [e for part in results for e in part]


def minibatches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random partition of ``range(n)`` into ceil(n / size) batches."""
    perm = rng.permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


def combined_policy_grads(policy: Policy, inputs, actions, labels, advantages,
                          config: TrainConfig, mode: str = "eval",
                          rng: np.random.Generator | None = None) -> ParameterSet:
    """Advantage-weighted log-likelihood of the explored actions plus the
    c-dampened log-likelihood of the true labels, as one gradient.

    The true-label term carries weight 1 by default; with
    ``supervised_term_weighting="advantage"`` it is weighted by A as well.
    """
    a = np.asarray(advantages, dtype=np.float64)
    label_w = a if config.supervised_term_weighting == "advantage" else np.ones_like(a)
    classes = np.stack([np.asarray(actions), np.asarray(labels)], axis=1)
    weights = np.stack([config.reinforce_weight * a, config.c * label_w], axis=1)
    _, trace = engine.forward(policy.params, policy.spec, inputs, mode, rng)
    return engine.weighted_log_prob_backward(policy.params, trace, classes, weights)


def update_epoch(policy: Policy, valuenet: ValueNetwork, experiences: list[Experience],
                 T: LabeledDataset, config: TrainConfig, rng: np.random.Generator) -> None:
    """Minibatch value step then policy step, over a random partition of ``experiences``."""
    if not experiences:
        raise ValueError("no experiences")
    idx = np.array([e.state_index for e in experiences])
    actions = np.array([e.action for e in experiences])
    rewards = np.array([e.reward for e in experiences])
    v0 = np.array([e.v0 for e in experiences])
    v1 = np.array([e.v1 for e in experiences])
    returns = rewards + config.gamma * v1
    adv = returns - v0
    mode = "train" if config.effective_keep_prob < 1 else "eval"
    for batch in minibatches(len(experiences), config.minibatch_size, rng):
        x = T.inputs[idx[batch]]
        states = augmented_state(policy, x)
        value_update(valuenet, states, returns[batch], config.value_rate)
        grads = combined_policy_grads(policy, x, actions[batch], T.labels[idx[batch]],
                                      adv[batch], config, mode, rng)
        engine.sgd_step(policy.params, grads, config.policy_rate, "ascent")


# --------------------------------------------------------------------------
# full runs


def _seeds(seed: int) -> tuple[int, int]:
    ss = np.random.SeedSequence(seed).spawn(2)
    return tuple(int(s.generate_state(1, np.uint64)[0]) for s in ss)


def init_policy(split: Split, config: TrainConfig) -> Policy:
    spec = classifier_spec(split.train.input_shape, split.train.num_classes,
                           config.conv_channels, config.hidden, config.effective_keep_prob)
    return Policy.init(spec, _seeds(config.seed)[0])


class _Recorder:
    def __init__(self, config: TrainConfig):
        self.keep = config.keep_checkpoints
        self.history: list[EpochMetrics] = []
        self.checkpoints: list[ParameterSet] = []
        self.best: ParameterSet | None = None
        self.best_epoch = -1

    def record(self, policy: Policy, split: Split, epoch: int) -> EpochMetrics:
        m = evaluate(policy, split, epoch)
        self.history.append(m)
        if self.keep:
            self.checkpoints.append(engine.snapshot(policy.params))
        if self.best is None or m.val_acc > self.history[self.best_epoch].val_acc:
            self.best, self.best_epoch = engine.snapshot(policy.params), epoch
        return m

    def result(self, policy, valuenet=None) -> TrainResult:
        assert self.best_epoch == select_optimal_epoch(self.history)
        return TrainResult(policy, self.history, self.best_epoch, self.best, valuenet,
                           self.checkpoints)


def train_reinforced(split: Split, config: TrainConfig, callback=None) -> TrainResult:
    if config.method != "reinforced":
        raise ValueError(f"train_reinforced called with method {config.method!r}")
    policy = init_policy(split, config)
    valuenet = ValueNetwork.for_policy(policy, _seeds(config.seed)[1], config.value_hidden)
    schedule = EpsilonSchedule(config.epsilon_start, config.epsilon_end, config.epochs)
    rng = np.random.default_rng([config.seed, 2])
    rec = _Recorder(config)
    for k in range(config.epochs):
        eps = epsilon_at(schedule, k)
        experiences = explore_epoch(policy, valuenet, split.train, split.validation, eps,
                                    config, np.random.default_rng([config.seed, 3, k]))
        update_epoch(policy, valuenet, experiences, split.train, config, rng)
        m = rec.record(policy, split, k)
        if callback is not None:
            callback(m)
    return rec.result(policy, valuenet)


def supervised_epoch(policy: Policy, T: LabeledDataset, config: TrainConfig,
                     rng: np.random.Generator) -> None:
    lam = config.effective_l2
    mode = "train" if config.effective_keep_prob < 1 else "eval"
    for batch in minibatches(len(T), config.minibatch_size, rng):
        grads = engine.grad_weighted_log_prob(policy.params, policy.spec, T.inputs[batch],
                                              T.labels[batch], np.ones(len(batch)), mode, rng)
        if lam > 0:
            grads = engine.add_grads(grads, engine.l2_penalty_grads(policy.params, lam), -1.0)
        engine.sgd_step(policy.params, grads, config.supervised_rate, "ascent")


def train_supervised(split: Split, config: TrainConfig, callback=None) -> TrainResult:
    """Plain, dropout, or dropout+L2 minibatch SGD on the cross-entropy."""
    if config.method == "reinforced":
        raise ValueError("train_supervised cannot run the reinforced method")
    policy = init_policy(split, config)
    rng = np.random.default_rng([config.seed, 2])
    rec = _Recorder(config)
    for k in range(config.epochs):
        supervised_epoch(policy, split.train, config, rng)
        m = rec.record(policy, split, k)
        if callback is not None:
            callback(m)
    return rec.result(policy)


def train(split: Split, config: TrainConfig, callback=None) -> TrainResult:
    if config.method == "reinforced":
        return train_reinforced(split, config, callback)
    return train_supervised(split, config, callback)
