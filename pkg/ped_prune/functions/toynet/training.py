import logging
from typing import Optional

import numpy as np

from ped_prune.errors import ConfigError, DivergedLoss
from ped_prune.functions.toynet.network import SkipNetwork, loss_and_gradients
from ped_prune.types import Batch

logger = logging.getLogger("ped-prune.toynet")


def train(
    net: SkipNetwork,
    data: Batch,
    epochs: int,
    lr: float,
    seed,
    batch_size: int = 64,
    stage: Optional[int] = None,
) -> SkipNetwork:
    """
    Plain mini-batch SGD on mean softmax cross-entropy.

    Works on a deep copy, so `net` is left untouched. The sample order of each
    epoch comes from one generator seeded by `seed`. Pruned units receive zero
    gradients and keep their weights bit for bit.

    Args:
        net: warm-start network; its policy decides which units train
        data: training batch
        epochs: passes over `data` (0 returns an identical copy)
        lr: learning rate, > 0
        seed: int or sequence accepted by numpy.random.default_rng
        batch_size: mini-batch size
        stage: PED stage, only used to label a DivergedLoss

    Raises:
        ConfigError, DivergedLoss
    """
    if lr <= 0:
        raise ConfigError(f"lr must be > 0, got {lr}")
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")

    trained = net.model_copy(deep=True)
    params = trained.named_parameters()
    rng = np.random.default_rng(seed)

    for epoch in range(epochs):
        order = rng.permutation(data.m)
        total = 0.0
        for step, start in enumerate(range(0, data.m, batch_size)):
            rows = order[start:start + batch_size]
            value, grads = loss_and_gradients(trained, data.inputs[rows], data.targets[rows])
            if not np.isfinite(value):
                raise DivergedLoss(value, epoch, step, stage)
            for name, arr in params:
                arr -= lr * grads[name]
            total += value * rows.size
        logger.debug(f"epoch {epoch + 1}/{epochs} loss={total / data.m:.6f}")

    return trained
