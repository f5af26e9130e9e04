"""The classifier viewed as a policy over class labels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import engine
from .engine import (Conv2d, Dense, Dropout, Flatten, MaxPool2d, NetworkSpec, ParameterSet,
                     ReLU, SoftmaxHead)


def classifier_spec(input_shape: Sequence[int], num_classes: int,
                    conv_channels: Sequence[int] = (), hidden: Sequence[int] = (64,),
                    keep_prob: float = 1.0) -> NetworkSpec:
    """Conv-ReLU-pool blocks, then a dense stack ending in a softmax head.

    With ``conv_channels`` empty the input must be flat (or is flattened) and
    the network is a plain MLP. Dropout follows every hidden dense+ReLU pair
    when ``keep_prob < 1``.
    """
    shape = tuple(int(d) for d in input_shape)
    layers: list = []
    if conv_channels:
        if len(shape) != 3:
            raise engine.SpecError("convolutional trunk needs an (H, W, C) input")
        c = shape[2]
        for out in conv_channels:
            layers += [Conv2d(c, out), ReLU(), MaxPool2d()]
            c = out
    if conv_channels or len(shape) > 1:
        layers.append(Flatten())
    width = NetworkSpec(shape, layers + [Flatten()], head=False).shapes()[-1][0]
    for h in hidden:
        layers += [Dense(width, h), ReLU()]
        if keep_prob < 1.0:
            layers.append(Dropout(keep_prob))
        width = h
    layers += [Dense(width, num_classes), SoftmaxHead(num_classes)]
    return NetworkSpec(shape, layers)


@dataclass(eq=False)
class Policy:
    params: ParameterSet
    spec: NetworkSpec

    @classmethod
    def init(cls, spec: NetworkSpec, seed: int) -> "Policy":
        return cls(engine.build_network(spec, seed), spec)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def distribution(self, x) -> np.ndarray:
        return class_distribution(self, x)


class MirrorPolicy(Policy):
    """Disposable copy of a policy that exploration is allowed to tilt."""

    @classmethod
    def of(cls, policy: Policy) -> "MirrorPolicy":
        return cls(engine.snapshot(policy.params), policy.spec)


def class_distribution(policy: Policy, x) -> np.ndarray:
    probs, _ = engine.forward(policy.params, policy.spec, x, "eval")
    return probs


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 0.3
    end: float = 0.7
    total_epochs: int = 1

    def __post_init__(self):
        if not 0.0 <= self.start <= self.end <= 1.0:
            raise ValueError("need 0 <= start <= end <= 1")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")


def epsilon_at(schedule: EpsilonSchedule, epoch: int) -> float:
    """Linear ramp from ``start`` at epoch 0 to ``end`` at the last epoch."""
    if not 0 <= epoch < schedule.total_epochs:
        raise IndexError(f"epoch {epoch} outside [0, {schedule.total_epochs})")
    if schedule.total_epochs == 1:
        return schedule.start
    frac = epoch / (schedule.total_epochs - 1)
    return schedule.start + (schedule.end - schedule.start) * frac


def sample_action(distribution, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy class with probability ``epsilon``, otherwise a uniformly random class.

    Note the direction: a larger epsilon means *more* greedy.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    p = np.asarray(distribution)
    if rng.random() < epsilon:
        return int(np.argmax(p))
    return int(rng.integers(len(p)))


def action_probabilities(distribution, epsilon: float) -> np.ndarray:
    """Exact distribution of :func:`sample_action`."""
    p = np.asarray(distribution)
    out = np.full(len(p), (1.0 - epsilon) / len(p))
    out[int(np.argmax(p))] += epsilon
    return out


def sync_mirror(mirror: Policy, policy: Policy) -> None:
    if mirror.spec != policy.spec:
        raise engine.SpecError("mirror and policy have different network specs")
    engine.restore(mirror.params, policy.params)


def tilt(mirror: Policy, x, label: int, rate: float) -> None:
    """One ascent step on log pi'(x, label), eval mode."""
    if rate < 0:
        raise ValueError("tilting rate must be non-negative")
    if not 0 <= label < mirror.num_classes:
        raise IndexError(f"class {label} out of range")
    if rate == 0:
        return
    grads = engine.grad_weighted_log_prob(mirror.params, mirror.spec, np.asarray(x)[None],
                                          [label], [1.0], mode="eval")
    engine.sgd_step(mirror.params, grads, rate, "ascent")
