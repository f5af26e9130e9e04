"""Summary statistics and the paired sign-flip permutation test."""
from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

# |permuted statistic| >= |observed| - TIE_TOL counts as at least as extreme
TIE_TOL = 1e-12


def summary(values: Sequence[float]) -> tuple[int, float, float, float]:
    """(n, mean, sample SD with n-1 denominator, median)."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError("need a non-empty list of values")
    sd = float(np.std(x, ddof=1)) if len(x) > 1 else float("nan")
    return len(x), float(np.mean(x)), sd, float(np.median(x))


def paired_permutation_test(errors_a, errors_b, iterations: int = 10_000, seed: int = 0) -> float:
    """Two-sided p-value for the mean paired difference under random sign flips.

    When all 2**n sign patterns fit within ``iterations`` they are enumerated
    and the p-value is exact; otherwise ``iterations`` random patterns are
    drawn from ``default_rng(seed)`` and the add-one estimate is returned.
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples differ in length: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise ValueError("need at least two pairs")
    if iterations < 1000:
        raise ValueError("iterations must be >= 1000")
    d = a - b
    n = len(d)
    observed = abs(d.mean())
    if 2 ** n <= iterations:
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
        stats = np.abs(signs @ d) / n
        return float(np.mean(stats >= observed - TIE_TOL))
    rng = np.random.default_rng(seed)
    hits = 0
    for start in range(0, iterations, 4096):
        m = min(4096, iterations - start)
        signs = rng.choice((1.0, -1.0), size=(m, n))
        hits += int(np.sum(np.abs(signs @ d) / n >= observed - TIE_TOL))
    return (hits + 1) / (iterations + 1)
