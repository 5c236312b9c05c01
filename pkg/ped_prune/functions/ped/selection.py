"""
Unit selection: which K units of a dependence profile survive a stage.

cluster-head  cluster the dependence values into K groups with optimal 1-D
              k-means and keep one head per group (redundant units share a
              cluster, so only one of them survives)
top-k         keep the K largest values
random        keep a seeded uniform K-subset
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from ped_prune.errors import BadK, ConfigError
from ped_prune.functions.cluster1d import ckmeans, cluster_heads
from ped_prune.types import ClusteringSummary, DependenceProfile, HeadMode, PruningPolicy, Strategy

logger = logging.getLogger("ped-prune.ped")


def select_with_details(
    profile: DependenceProfile,
    k: int,
    strategy: Strategy = "cluster-head",
    seed=0,
    head_mode: HeadMode = "max",
) -> Tuple[PruningPolicy, Optional[ClusteringSummary]]:
    """
    select_units plus the clustering that drove a cluster-head selection.

    The summary's assignment follows profile order; its heads are original
    unit indices. It is None for the other strategies.
    """
    values = profile.values
    indices = profile.indices
    n = values.size
    if k < 1 or k > n:
        raise BadK(k, n)

    summary = None
    if strategy == "cluster-head":
        clustering = ckmeans(values, k)
        heads = cluster_heads(clustering, values, head_mode)
        chosen: List[int] = heads
        summary = clustering.summary([indices[h] for h in heads])
    elif strategy == "top-k":
        chosen = sorted(range(n), key=lambda i: (-values[i], indices[i]))[:k]
    elif strategy == "random":
        rng = np.random.default_rng(seed)
        chosen = [int(i) for i in rng.choice(n, size=k, replace=False)]
    else:
        raise ConfigError(f"unknown strategy {strategy!r}")

    keep = sorted(indices[i] for i in chosen)
    policy = PruningPolicy.from_active(profile.total_units, keep, stage=profile.stage)
    logger.debug(f"{strategy} kept units {keep} of {indices}")
    return policy, summary


def select_units(
    profile: DependenceProfile,
    k: int,
    strategy: Strategy = "cluster-head",
    seed=0,
    head_mode: HeadMode = "max",
) -> PruningPolicy:
    """
    Keep exactly k units of `profile` and prune the rest.

    Args:
        profile: dependence values of the currently active units
        k: units to keep, 1 <= k <= len(profile)
        strategy: "cluster-head", "top-k" or "random"
        seed: generator seed for "random" (int or [seed, stage])
        head_mode: cluster representative, "max" or "centroid"

    Returns:
        PruningPolicy over profile.total_units units, stage = profile.stage;
        units absent from the profile are pruned

    Raises:
        BadK
    """
    policy, _ = select_with_details(profile, k, strategy, seed, head_mode)
    return policy
