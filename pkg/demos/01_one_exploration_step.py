"""
One exploration step, by hand
=============================

Walks through what the trainer does for a single training sample: pick an
action, tilt the mirror policy towards it, measure the reward and score it
against the value baseline.
"""

import numpy as np

from reinforced_classifier import ValueNetwork, generate_synthetic, split_311
from reinforced_classifier.policy import (MirrorPolicy, Policy, class_distribution,
                                          classifier_spec, sample_action, tilt)
from reinforced_classifier.trainer import Experience, advantage, reward
from reinforced_classifier.value import augmented_state, value

# a small three-class problem, split 3:1:1
data = generate_synthetic("blobs", [10, 10, 10], (6,), 0.8, seed=0)
split = split_311(data, seed=0)
T, V = split.train, split.validation
print("train / validation / test sizes:", len(T), len(V), len(split.test))

policy = Policy.init(classifier_spec((6,), 3, hidden=(16,)), seed=0)
valuenet = ValueNetwork.for_policy(policy, seed=1)

# the sample we explore
x, y_true = T.inputs[0], int(T.labels[0])
probs = class_distribution(policy, x)
print("policy distribution:", np.round(probs, 3), "true class", y_true)

# epsilon is the probability of the greedy action
rng = np.random.default_rng(0)
action = sample_action(probs, epsilon=0.3, rng=rng)
print("chosen action:", action)

# tilt a copy of the policy, the real one stays untouched
mirror = MirrorPolicy.of(policy)
tilt(mirror, x, action, rate=0.05)
print("mirror distribution:", np.round(class_distribution(mirror, x), 3))

# reward: loss improvement on the training and validation sets together
r = reward(policy, mirror, T, V)
print(f"reward {r:+.5f}")

# advantage against the value of the state before and after tilting
v0 = value(valuenet, augmented_state(policy, x))
v1 = value(valuenet, augmented_state(mirror, x))
exp = Experience(0, action, r, v0, v1)
print(f"v0 {v0:+.4f}  v1 {v1:+.4f}  advantage {advantage(exp, gamma=0.9):+.5f}")

# tilting towards each class in turn shows which actions the reward favours
for a in range(3):
    m = MirrorPolicy.of(policy)
    tilt(m, x, a, rate=0.05)
    print(f"  action {a}: reward {reward(policy, m, T, V):+.5f}")
