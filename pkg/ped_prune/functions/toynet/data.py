"""
Synthetic classification data for the toy network.
"""

import logging
from typing import Literal, Tuple

import numpy as np

from ped_prune.errors import BadArity, ConfigError
from ped_prune.types import Batch

logger = logging.getLogger("ped-prune.toynet")

CENTER_SCALE = 3.0


def class_counts(n: int, p: int) -> np.ndarray:
    """Balanced class sizes; the first n mod p classes get one extra sample."""
    counts = np.full(p, n // p, dtype=np.int64)
    counts[: n % p] += 1
    return counts


def gen_synthetic(
    kind: Literal["blobs", "rings"],
    n: int,
    p: int,
    input_dim: int = 2,
    noise: float = 0.1,
    seed=0,
) -> Batch:
    """
    Seeded synthetic batch with labels 1..p in shuffled order.

    blobs: isotropic Gaussian clusters (std `noise`) around centers drawn
    from N(0, 3^2); noise=0 puts every sample on its class center.
    rings: concentric annuli of radius 1..p in the first two coordinates,
    radial jitter `noise`; further coordinates are pure noise. Not linearly
    separable.

    Raises:
        BadArity: p < 2, n < p, or rings with input_dim < 2
    """
    if p < 2 or n < p:
        raise BadArity(f"need p >= 2 and n >= p, got n={n}, p={p}")
    if input_dim < 1:
        raise BadArity(f"input_dim must be >= 1, got {input_dim}")
    if noise < 0:
        raise ConfigError(f"noise must be >= 0, got {noise}")

    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(1, p + 1), class_counts(n, p))

    if kind == "blobs":
        centers = rng.normal(0.0, CENTER_SCALE, size=(p, input_dim))
        inputs = centers[labels - 1] + noise * rng.standard_normal((n, input_dim))
    elif kind == "rings":
        if input_dim < 2:
            raise BadArity("rings need input_dim >= 2")
        angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
        radius = labels + noise * rng.standard_normal(n)
        inputs = noise * rng.standard_normal((n, input_dim))
        inputs[:, 0] = radius * np.cos(angle)
        inputs[:, 1] = radius * np.sin(angle)
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")

    order = rng.permutation(n)
    logger.debug(f"Generated {kind} data n={n} p={p} input_dim={input_dim}")
    return Batch(inputs=inputs[order], targets=labels[order])


def split_batch(batch: Batch, test_fraction: float, seed=0) -> Tuple[Batch, Batch]:
    """Seeded (train, test) split; both halves keep at least one sample."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if batch.m < 2:
        raise ConfigError("cannot split a batch with fewer than 2 samples")
    order = np.random.default_rng(seed).permutation(batch.m)
    n_test = min(batch.m - 1, max(1, int(round(batch.m * test_fraction))))
    return batch.take(np.sort(order[n_test:])), batch.take(np.sort(order[:n_test]))
