"""
Two-sample energy distance.

    E(A, B) = 2 mean ||a - b|| - mean ||a - a'|| - mean ||b - b'||

The default "v" variant averages over all index pairs including the zero
diagonal (divisor n^2). The "u" variant drops the diagonal from the
within-group terms (divisor n(n-1)) and is unbiased, but can be negative.
"""

import logging
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from config import get_settings
from ped_prune.errors import DimensionMismatch, TooFewSamples
from ped_prune.types import EnergyDistanceValue, FeatureMatrix, Variant

logger = logging.getLogger("ped-prune.energy")

settings = get_settings()

Samples = Union[FeatureMatrix, np.ndarray]


def as_rows(samples: Samples) -> np.ndarray:
    if isinstance(samples, FeatureMatrix):
        return samples.data
    arr = np.asarray(samples, dtype=np.float64)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(a.shape[1], b.shape[1])


def block_distance_sum(a: np.ndarray, b: np.ndarray, block_rows: Optional[int] = None) -> float:
    """Sum of all Euclidean distances ||a_i - b_j||.

    Rows of `a` are processed in fixed-size blocks and the block sums are
    added in block order, so the result does not depend on anything but the
    inputs and the block size.
    """
    block_rows = block_rows or settings.block_rows
    total = 0.0
    for start in range(0, a.shape[0], block_rows):
        total += float(cdist(a[start:start + block_rows], b, "euclidean").sum())
    return total


def pairwise_distance_matrix(a: np.ndarray, block_rows: Optional[int] = None) -> np.ndarray:
    """Full n x n Euclidean distance matrix, filled block by block."""
    block_rows = block_rows or settings.block_rows
    n = a.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for start in range(0, n, block_rows):
        out[start:start + block_rows] = cdist(a[start:start + block_rows], a, "euclidean")
    return out


def mean_pairwise_distance(a: Samples, b: Samples, block_rows: Optional[int] = None) -> float:
    """
    Mean Euclidean distance over all (a_i, b_j) pairs.

    When `a` and `b` are the same sample set this is the within-group term of
    the V-statistic: the zero diagonal is included and the divisor is n^2.

    Raises:
        DimensionMismatch: feature dimensions differ
    """
    a, b = as_rows(a), as_rows(b)
    _check_dims(a, b)
    return block_distance_sum(a, b, block_rows) / (a.shape[0] * b.shape[0])


def _within(a: np.ndarray, variant: Variant, block_rows: Optional[int]) -> float:
    n = a.shape[0]
    if n == 1:
        return 0.0
    total = block_distance_sum(a, a, block_rows)
    return total / (n * n) if variant == "v" else total / (n * (n - 1))


def _canonical(a: np.ndarray, b: np.ndarray):
    # fixed operand order makes the cross term bit-identical under swapping
    key_a = (a.shape, a.tobytes())
    key_b = (b.shape, b.tobytes())
    return (a, b) if key_a <= key_b else (b, a)


def energy_distance(
    a: Samples,
    b: Samples,
    variant: Variant = "v",
    block_rows: Optional[int] = None,
) -> EnergyDistanceValue:
    """
    Energy distance between two sample sets.

    Args:
        a, b: n_a x d and n_b x d samples (FeatureMatrix or arrays)
        variant: "v" (all pairs, never negative) or "u" (diagonal excluded)
        block_rows: distance block size, defaults to settings.block_rows

    Returns:
        EnergyDistanceValue, symmetric in (a, b) bit for bit

    Raises:
        DimensionMismatch, TooFewSamples (U-statistic with a singleton group)
    """
    a, b = as_rows(a), as_rows(b)
    _check_dims(a, b)
    n1, n2 = a.shape[0], b.shape[0]
    if variant == "u" and min(n1, n2) < 2:
        raise TooFewSamples(f"U-statistic needs >= 2 samples per group, got {n1} and {n2}")

    first, second = _canonical(a, b)
    cross = block_distance_sum(first, second, block_rows) / (n1 * n2)
    value = 2.0 * cross - (_within(a, variant, block_rows) + _within(b, variant, block_rows))
    if variant == "v":
        # rounding can leave -1e-17 on identical sets; the V-statistic is >= 0
        value = max(value, 0.0)
    return EnergyDistanceValue(value=value, n1=n1, n2=n2, variant=variant)
