"""
Optimal 1-D k-means by dynamic programming, plus an exhaustive oracle.

Values are sorted (ties by original index) and split into k contiguous
intervals minimizing the within-cluster sum of squares (WCSS). Interval costs
come from prefix sums of v and v^2, so the DP is O(k n^2), which is plenty
for the few dozen units a network has.
"""

import itertools
import logging
from typing import List, Sequence, Tuple

import numpy as np

from ped_prune.errors import BadK, InconsistentClustering, NonFiniteInput, TooLarge
from ped_prune.types import Clustering, HeadMode

logger = logging.getLogger("ped-prune.cluster1d")

EXHAUSTIVE_LIMIT = 16


class _SortedValues:
    """Sorted values with prefix sums for O(1) interval costs."""

    def __init__(self, values: Sequence[float]):
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if not np.isfinite(arr).all():
            raise NonFiniteInput("values contain NaN or Inf")
        self.values = arr
        self.order = np.argsort(arr, kind="stable")
        self.sorted = arr[self.order]
        self.s1 = np.concatenate(([0.0], np.cumsum(self.sorted)))
        self.s2 = np.concatenate(([0.0], np.cumsum(self.sorted * self.sorted)))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def cost(self, start: int, stop: int) -> float:
        """Sum of squared deviations of sorted[start:stop], clamped at 0."""
        m = stop - start
        if m == 1:
            return 0.0
        total = self.s1[stop] - self.s1[start]
        squares = self.s2[stop] - self.s2[start]
        return max(0.0, float(squares - total * total / m))

    def partition_cost(self, starts: Sequence[int]) -> float:
        """WCSS of the partition whose clusters begin at `starts` (first is 0)."""
        bounds = list(starts) + [self.n]
        total = 0.0
        for left, right in zip(bounds[:-1], bounds[1:]):
            total = total + self.cost(left, right)
        return total

    def clustering(self, starts: Sequence[int]) -> Clustering:
        bounds = list(starts) + [self.n]
        assignment = np.empty(self.n, dtype=np.int64)
        centroids = []
        for cluster, (left, right) in enumerate(zip(bounds[:-1], bounds[1:])):
            assignment[self.order[left:right]] = cluster
            centroids.append(float((self.s1[right] - self.s1[left]) / (right - left)))
        return Clustering(
            k=len(starts),
            assignment=assignment.tolist(),
            boundaries=list(starts[1:]),
            wcss=self.partition_cost(starts),
            centroids=centroids,
        )


def _check_k(k: int, n: int) -> None:
    if k < 1 or k > n:
        raise BadK(k, n)


def ckmeans(values: Sequence[float], k: int) -> Clustering:
    """
    Globally optimal k-means of 1-D values.

    Args:
        values: finite reals, any order, duplicates allowed
        k: number of clusters, 1 <= k <= len(values)

    Returns:
        Clustering with assignments in input order; among equal-WCSS optima
        the backtrace takes the smallest last-cluster start at every step

    Raises:
        BadK, NonFiniteInput
    """
    data = _SortedValues(values)
    n = data.n
    _check_k(k, n)

    # best[m][j]: minimal cost of sorted[:j] in m + 1 clusters
    best = np.full((k, n + 1), np.inf)
    start = np.zeros((k, n + 1), dtype=np.int64)
    for j in range(1, n + 1):
        best[0][j] = data.cost(0, j)
    for m in range(1, k):
        for j in range(m + 1, n + 1):
            best_cost, best_start = np.inf, m
            for i in range(m, j):
                candidate = best[m - 1][i] + data.cost(i, j)
                if candidate < best_cost:
                    best_cost, best_start = candidate, i
            best[m][j] = best_cost
            start[m][j] = best_start

    starts: List[int] = []
    j = n
    for m in range(k - 1, 0, -1):
        i = int(start[m][j])
        starts.append(i)
        j = i
    starts.append(0)
    starts.reverse()
    result = data.clustering(starts)
    logger.debug(f"ckmeans n={n} k={k} wcss={result.wcss}")
    return result


def exhaustive_ckmeans(values: Sequence[float], k: int) -> Clustering:
    """
    Brute-force oracle for ckmeans over every contiguous partition.

    Ties on WCSS go to the partition whose cluster starts, compared from the
    last cluster backwards, are smallest.

    Raises:
        TooLarge (more than 16 values), BadK, NonFiniteInput
    """
    data = _SortedValues(values)
    n = data.n
    if n > EXHAUSTIVE_LIMIT:
        raise TooLarge(f"exhaustive search is limited to {EXHAUSTIVE_LIMIT} values, got {n}")
    _check_k(k, n)

    best_key: Tuple[float, Tuple[int, ...]] = (np.inf, ())
    best_starts: List[int] = [0]
    for cuts in itertools.combinations(range(1, n), k - 1):
        starts = [0, *cuts]
        key = (data.partition_cost(starts), tuple(reversed(starts)))
        if key < best_key:
            best_key, best_starts = key, starts
    return data.clustering(best_starts)


def cluster_heads(clustering: Clustering, values: Sequence[float], mode: HeadMode = "max") -> List[int]:
    """
    One representative per cluster, as an index into `values`.

    mode "max" keeps the member with the largest value; "centroid" keeps the
    member nearest the cluster mean. Ties go to the smaller index. Heads are
    returned in cluster order.

    Raises:
        InconsistentClustering
    """
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(clustering.assignment) != arr.size:
        raise InconsistentClustering(
            f"clustering covers {len(clustering.assignment)} values, got {arr.size}"
        )
    if any(c < 0 or c >= clustering.k for c in clustering.assignment):
        raise InconsistentClustering(f"cluster ids must lie in 0..{clustering.k - 1}")
    groups = clustering.members()
    if any(not members for members in groups) or len(groups) != clustering.k:
        raise InconsistentClustering("every cluster id 0..k-1 must have members")

    heads = []
    for cluster, members in enumerate(groups):
        member_values = arr[members]
        if mode == "max":
            score = -member_values
        else:
            score = np.abs(member_values - clustering.centroids[cluster])
        # argmin returns the first minimum; members are in index order
        heads.append(members[int(np.argmin(score))])
    return heads
