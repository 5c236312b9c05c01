"""
Cluster-head selection against random selection on the rings task.

Eight 16-wide residual units, 2000 samples, four decrement stages, ten
seeds. Run with `pytest -m slow`.
"""

import copy

import numpy as np
import pytest

from ped_prune.functions.adapter.toynet import ToyNetAdapter
from ped_prune.functions.ped.engine import run_ped
from ped_prune.types import DataConfig, RunConfig, SkipNetConfig, StageSchedule

SEEDS = range(10)


def final_accuracies(seed):
    config = RunConfig(
        seed=seed,
        network=SkipNetConfig(units=8, width=16),
        data=DataConfig(kind="rings", n=2000),
    )
    pretrained = ToyNetAdapter.from_config(config)
    pretrained.pretrain()
    result = {}
    for strategy in ("cluster-head", "random"):
        adapter = copy.deepcopy(pretrained)
        reports = run_ped(adapter, StageSchedule(n_stages=4), strategy=strategy, seed=seed)
        result[strategy] = reports[-1].test_accuracy
    return result


@pytest.mark.slow
def test_cluster_head_beats_random():
    runs = [final_accuracies(seed) for seed in SEEDS]
    cluster = np.array([r["cluster-head"] for r in runs])
    random = np.array([r["random"] for r in runs])
    assert cluster.mean() >= random.mean()
    assert np.sum(cluster >= random) >= 7
