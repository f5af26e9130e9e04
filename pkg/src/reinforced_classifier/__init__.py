"""Reinforced classifier: validation-feedback policy-gradient training for small datasets."""
from .data import LabeledDataset, Split, generate_synthetic, load_csv, save_csv, split_311
from .engine import NetworkSpec, ParameterSet, Tensor, build_network, forward
from .policy import EpsilonSchedule, MirrorPolicy, Policy, classifier_spec
from .trainer import (EpochMetrics, Experience, TrainConfig, TrainResult, select_optimal_epoch,
                      train, train_reinforced, train_supervised)
from .value import ValueNetwork

__version__ = "0.1.0"
