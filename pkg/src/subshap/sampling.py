"""Stratified index splitting with largest-remainder per-class rounding."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def largest_remainder_counts(class_sizes: list[int], ratio: float) -> list[int]:
    """Per-class counts summing to round(ratio * total).

    Each class gets floor(ratio * size); leftover seats go to the classes
    with the largest fractional remainders, ties broken by class order.
    """
    quotas = [ratio * s for s in class_sizes]
    base = [int(np.floor(q)) for q in quotas]
    total = int(np.floor(ratio * sum(class_sizes) + 0.5))
    seats = total - sum(base)
    remainders = sorted(
        range(len(class_sizes)), key=lambda i: (-(quotas[i] - base[i]), i)
    )
    counts = list(base)
    for i in remainders[:seats]:
        counts[i] += 1
    return counts


def stratified_indices(
    y: np.ndarray, ratio: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Split row positions into (first, second) preserving class balance.

    The first part receives the largest-remainder share of each class; row
    order within each part follows the original array. Raises if y has a
    single class.
    """
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValidationError("stratified split requires both classes present")
    sizes = [int(np.sum(y == c)) for c in classes]
    counts = largest_remainder_counts(sizes, ratio)
    first_mask = np.zeros(y.size, dtype=bool)
    for c, k in zip(classes, counts):
        positions = np.flatnonzero(y == c)
        picked = rng.permutation(positions.size)[:k]
        first_mask[positions[picked]] = True
    return np.flatnonzero(first_mask), np.flatnonzero(~first_mask)
