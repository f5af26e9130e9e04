"""State-value network over augmented states (policy features + class distribution)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Dense, NetworkSpec, ParameterSet, ReLU
from .policy import Policy

VALUE_HIDDEN = 32


def augmented_state(policy: Policy, x) -> np.ndarray:
    """Penultimate features followed by the class distribution, from one eval pass.

    Accepts a single input or a batch; the result is (F + C,) or (N, F + C).
    """
    probs, trace = engine.forward(policy.params, policy.spec, x, "eval")
    state = np.concatenate([trace.features, np.atleast_2d(probs)], axis=1)
    return state if trace.batched else state[0]


def value_spec(state_dim: int, hidden: int = VALUE_HIDDEN) -> NetworkSpec:
    return NetworkSpec((state_dim,), (Dense(state_dim, hidden), ReLU(), Dense(hidden, 1)),
                       head=False)


@dataclass(eq=False)
class ValueNetwork:
    params: ParameterSet
    spec: NetworkSpec

    @classmethod
    def for_policy(cls, policy: Policy, seed: int, hidden: int = VALUE_HIDDEN,
                   zero_head: bool = True) -> "ValueNetwork":
        """Value network sized for ``policy``'s augmented states.

        With ``zero_head`` the output layer starts at zero so the initial value
        is constant; otherwise the random slope makes v(X, pi') - v(X, pi)
        an action-dependent term as large as the reward itself.
        """
        dim = policy.spec.feature_dim + policy.num_classes
        spec = value_spec(dim, hidden)
        params = engine.build_network(spec, seed)
        if zero_head:
            params[f"{len(spec.layers) - 1}.weight"].values[...] = 0.0
        return cls(params, spec)

    @property
    def state_dim(self) -> int:
        return self.spec.input_shape[0]


def value(net: ValueNetwork, state) -> np.ndarray | float:
    state = np.asarray(state, dtype=np.float64)
    if state.shape[-1] != net.state_dim:
        raise engine.ShapeError(f"augmented state width {state.shape[-1]} != {net.state_dim}")
    out, _ = engine.forward(net.params, net.spec, state, "eval")
    return float(out[0]) if state.ndim == 1 else out[:, 0]


def value_grads(net: ValueNetwork, states, targets) -> ParameterSet:
    """Gradient of mean (target - v(state))^2 w.r.t. the value parameters.

    Targets are constants.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    targets = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    if len(states) == 0 or len(states) != len(targets):
        raise ValueError("need a non-empty batch with one target per state")
    if states.shape[1] != net.state_dim:
        raise engine.ShapeError(f"augmented state width {states.shape[1]} != {net.state_dim}")
    if not np.all(np.isfinite(targets)):
        raise engine.NumericalError("non-finite value target")
    out, trace = engine.forward(net.params, net.spec, states, "eval")
    residual = out[:, 0] - targets
    return engine.backward(net.params, trace, (2.0 / len(targets)) * residual[:, None])


def value_loss(net: ValueNetwork, states, targets) -> float:
    v = value(net, np.atleast_2d(states))
    return float(np.mean((np.atleast_1d(targets) - v) ** 2))


def value_update(net: ValueNetwork, states, targets, rate: float) -> None:
    """One descent step on the mean squared error to ``targets``."""
    grads = value_grads(net, states, targets)
    engine.sgd_step(net.params, grads, rate, "descent")
