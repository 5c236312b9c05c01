"""
Closed-form parameter and FLOP counts of the toy network.

FLOPs are per sample: 2 * fan_in * fan_out for every linear map plus one per
rectified element (linear activations cost nothing). Pruned units cost 0, and
in the dense variant they also shrink the inputs of every later unit and of
the head.
"""

from typing import Iterator, Tuple

from ped_prune.errors import ShapeMismatch
from ped_prune.types import PruningPolicy, SkipNetConfig


def _check(cfg: SkipNetConfig, policy: PruningPolicy) -> None:
    if policy.n_units != cfg.units:
        raise ShapeMismatch(f"policy covers {policy.n_units} units, network has {cfg.units}")


def _active_layers(cfg: SkipNetConfig, policy: PruningPolicy) -> Iterator[Tuple[int, int]]:
    """(input width, branch width) of each active unit."""
    if cfg.composition == "residual":
        for _ in policy.active_set:
            yield cfg.width, cfg.width
        return
    for seen in range(len(policy.active_set)):
        yield cfg.width + cfg.growth * seen, cfg.growth


def _head_input(cfg: SkipNetConfig, policy: PruningPolicy) -> int:
    if cfg.composition == "residual":
        return cfg.width
    return cfg.width + cfg.growth * len(policy.active_set)


def count_params(cfg: SkipNetConfig, policy: PruningPolicy) -> int:
    _check(cfg, policy)
    total = cfg.input_dim * cfg.width + cfg.width
    for fan_in, branch in _active_layers(cfg, policy):
        total += fan_in * branch + branch + branch * branch + branch
    total += _head_input(cfg, policy) * cfg.classes + cfg.classes
    return total


def count_flops(cfg: SkipNetConfig, policy: PruningPolicy) -> int:
    _check(cfg, policy)
    activation = 1 if cfg.activation == "relu" else 0
    total = 2 * cfg.input_dim * cfg.width
    for fan_in, branch in _active_layers(cfg, policy):
        total += 2 * fan_in * branch + activation * branch + 2 * branch * branch
    total += 2 * _head_input(cfg, policy) * cfg.classes
    return total
