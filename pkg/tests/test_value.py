import numpy as np
import pytest

from reinforced_classifier import engine
from reinforced_classifier.policy import MirrorPolicy, Policy, classifier_spec, tilt
from reinforced_classifier.value import (ValueNetwork, augmented_state, value, value_grads,
                                         value_loss, value_update)

from oracles import fd_gradient, max_rel_error


@pytest.fixture
def conv_policy():
    return Policy.init(classifier_spec((10, 10, 1), 3, conv_channels=(2,), hidden=(6,)), 0)


def test_augmented_state_layout(conv_policy):
    x = np.random.default_rng(0).standard_normal((10, 10, 1))
    s = augmented_state(conv_policy, x)
    f = conv_policy.spec.feature_dim
    assert f == 4 * 4 * 2
    assert s.shape == (f + 3,)
    assert abs(s[-3:].sum() - 1) < 1e-9


def test_augmented_state_dense_policy_uses_last_hidden():
    pol = Policy.init(classifier_spec((5,), 3, hidden=(8,)), 0)
    s = augmented_state(pol, np.ones((4, 5)))
    assert s.shape == (4, 11)
    np.testing.assert_allclose(s[:, -3:].sum(axis=1), 1, atol=1e-12)


def test_features_and_distribution_from_same_pass(conv_policy):
    x = np.random.default_rng(1).standard_normal((2, 10, 10, 1))
    s = augmented_state(conv_policy, x)
    probs, trace = engine.forward(conv_policy.params, conv_policy.spec, x)
    np.testing.assert_array_equal(s[:, -3:], probs)
    np.testing.assert_array_equal(s[:, :-3], trace.features)


def test_tilted_mirror_changes_state(conv_policy):
    x = np.random.default_rng(2).standard_normal((10, 10, 1))
    mirror = MirrorPolicy.of(conv_policy)
    before = augmented_state(mirror, x)
    tilt(mirror, x, 1, 0.1)
    assert not np.array_equal(before, augmented_state(mirror, x))
    np.testing.assert_array_equal(before, augmented_state(conv_policy, x))


def test_value_zero_params_is_zero(conv_policy):
    vn = ValueNetwork.for_policy(conv_policy, 0)
    for _, t in vn.params:
        t.values[...] = 0
    states = np.random.default_rng(0).standard_normal((5, vn.state_dim))
    assert np.all(value(vn, states) == 0)


def test_value_is_deterministic_and_checks_width(conv_policy):
    vn = ValueNetwork.for_policy(conv_policy, 1, zero_head=False)
    s = np.random.default_rng(0).standard_normal(vn.state_dim)
    assert value(vn, s) == value(vn, s)
    with pytest.raises(engine.ShapeError):
        value(vn, np.ones(vn.state_dim + 1))


def test_zero_head_starts_flat(conv_policy):
    vn = ValueNetwork.for_policy(conv_policy, 1)
    states = np.random.default_rng(0).standard_normal((4, vn.state_dim))
    assert np.all(value(vn, states) == 0.0)


def test_value_gradient_matches_finite_differences():
    pol = Policy.init(classifier_spec((4,), 3, hidden=(5,)), 0)
    rng = np.random.default_rng(3)
    for trial in range(5):
        vn = ValueNetwork.for_policy(pol, trial, hidden=7, zero_head=False)
        states = rng.standard_normal((4, vn.state_dim))
        targets = rng.standard_normal(4)
        analytic = value_grads(vn, states, targets)
        numeric = fd_gradient(lambda: value_loss(vn, states, targets), vn.params)
        assert max_rel_error(analytic, numeric) < 1e-4


def test_update_at_targets_is_noop():
    pol = Policy.init(classifier_spec((4,), 2, hidden=(3,)), 0)
    vn = ValueNetwork.for_policy(pol, 0, zero_head=False)
    states = np.random.default_rng(0).standard_normal((3, vn.state_dim))
    before = engine.snapshot(vn.params)
    value_update(vn, states, value(vn, states), 0.5)
    assert vn.params.equals(before)
    value_update(vn, states, np.ones(3), 0.0)
    assert vn.params.equals(before)


def test_repeated_updates_decrease_error():
    pol = Policy.init(classifier_spec((4,), 2, hidden=(3,)), 0)
    vn = ValueNetwork.for_policy(pol, 4, zero_head=False)
    state = np.random.default_rng(1).standard_normal((1, vn.state_dim))
    target = np.array([2.5])
    losses = [value_loss(vn, state, target)]
    for _ in range(100):
        value_update(vn, state, target, 1e-3)
        losses.append(value_loss(vn, state, target))
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_mse_non_increasing_until_converged():
    pol = Policy.init(classifier_spec((4,), 2, hidden=(3,)), 0)
    vn = ValueNetwork.for_policy(pol, 2, hidden=8, zero_head=False)
    rng = np.random.default_rng(5)
    states = rng.standard_normal((3, vn.state_dim))
    targets = rng.standard_normal(3)
    prev = value_loss(vn, states, targets)
    for _ in range(2000):
        value_update(vn, states, targets, 1e-2)
        cur = value_loss(vn, states, targets)
        assert cur <= prev + 1e-15
        prev = cur
        if cur < 1e-10:
            break
