"""
Energy Dependence between feature maps and class labels.

D(T, Y) is the largest energy distance between any two class-conditional
sample groups of T. It is zero when T and Y are independent.
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ped_prune.errors import ConfigError, EmptyUnitList, TooFewClasses, TooFewSamples
from ped_prune.functions.energy.distance import energy_distance, pairwise_distance_matrix
from ped_prune.functions.io.dumps import validate_pair
from ped_prune.types import ArgPair, DependenceProfile, FeatureMatrix, LabelVector, UnitDependence, Variant

logger = logging.getLogger("ped-prune.energy")


def energy_dependence(
    features: FeatureMatrix,
    labels: LabelVector,
    variant: Variant = "v",
    block_rows: Optional[int] = None,
) -> Tuple[float, ArgPair]:
    """
    Maximum energy distance over all class pairs (i < j).

    Pairs are visited in lexicographic order and the first maximum wins, so
    `arg_pair` is the lexicographically smallest maximizing pair (1-based).

    Raises:
        LengthMismatch, TooFewClasses (p < 2), errors of energy_distance
    """
    validate_pair(features, labels)
    if labels.p < 2:
        raise TooFewClasses(f"energy dependence needs >= 2 classes, got p={labels.p}")

    groups = [features.data[rows] for rows in labels.class_indices()]
    best_value: Optional[float] = None
    best_pair: ArgPair = (1, 2)
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            value = energy_distance(groups[i], groups[j], variant, block_rows).value
            if best_value is None or value > best_value:
                best_value, best_pair = value, (i + 1, j + 1)
    return float(best_value), best_pair


def _class_quotas(sizes: np.ndarray, cap: int) -> np.ndarray:
    """Largest-remainder apportionment of `cap` rows over classes of the given sizes.

    Quotas sum to exactly `cap` when p <= cap < n. Every class keeps at least
    one row and at most its size. Remainder ties go to the smaller class label.
    """
    if cap < sizes.size:
        logger.warning(f"Subsample cap {cap} is below the class count {sizes.size}, keeping one row per class")
        return np.ones(sizes.size, dtype=np.int64)
    exact = cap * sizes / sizes.sum()
    quotas = np.floor(exact).astype(np.int64)
    remainders = exact - quotas
    order = sorted(range(sizes.size), key=lambda c: (-remainders[c], c))
    for c in order[: cap - int(quotas.sum())]:
        quotas[c] += 1
    for c in np.flatnonzero(quotas == 0):
        donor = max(range(sizes.size), key=lambda j: (quotas[j], -j))
        quotas[donor] -= 1
        quotas[c] = 1
    return quotas


def stratified_subsample(labels: LabelVector, cap: int, seed) -> np.ndarray:
    """Sorted row indices of a class-stratified uniform subsample of `cap` rows.

    Args:
        labels: full label vector
        cap: subsample size, below labels.n
        seed: anything np.random.default_rng accepts
    """
    rng = np.random.default_rng(seed)
    groups = labels.class_indices()
    quotas = _class_quotas(np.array([rows.size for rows in groups]), cap)
    picked = [rng.choice(rows, size=int(q), replace=False) for rows, q in zip(groups, quotas)]
    return np.sort(np.concatenate(picked))


def _run_seed(seed) -> int:
    """The integer run seed out of a seed or a [seed, stream, ...] list."""
    if isinstance(seed, (list, tuple)):
        return int(seed[0])
    return int(seed)


def dependence_profile(
    units: Sequence[FeatureMatrix],
    labels: LabelVector,
    variant: Variant = "v",
    subsample_cap: Optional[int] = None,
    seed: Union[int, Sequence[int]] = 0,
    unit_indices: Optional[Sequence[int]] = None,
    stage: int = 0,
    n_units: Optional[int] = None,
) -> DependenceProfile:
    """
    Energy dependence of every unit's feature map with the labels.

    Args:
        units: one feature matrix per unit, all with labels.n rows
        labels: class labels shared by every unit
        variant: "v" or "u" estimator
        subsample_cap: when labels.n exceeds it, one stratified subsample is
            drawn (seeded) and reused for every unit so values stay comparable
        seed: int or [seed, stream, ...] subsample generator seed; the
            integer run seed is recorded in the profile
        unit_indices: original unit index of each matrix (default 0..len-1)
        stage, n_units: bookkeeping copied into the profile

    Raises:
        EmptyUnitList, LengthMismatch and anything energy_dependence raises
    """
    if not units:
        raise EmptyUnitList("dependence profile needs at least one unit")
    indices = list(unit_indices) if unit_indices is not None else list(range(len(units)))
    if len(indices) != len(units):
        raise ConfigError(f"{len(indices)} unit indices for {len(units)} feature matrices")
    for matrix in units:
        validate_pair(matrix, labels)

    if subsample_cap is not None and subsample_cap < labels.n:
        rows = stratified_subsample(labels, subsample_cap, seed)
        logger.debug(f"Subsampled {rows.size} of {labels.n} rows for the profile")
        labels = labels.take(rows)
        units = [matrix.take(rows) for matrix in units]

    entries: List[UnitDependence] = []
    for index, matrix in zip(indices, units):
        value, pair = energy_dependence(matrix, labels, variant)
        entries.append(UnitDependence(index=index, dependence=value, arg_pair=pair))

    return DependenceProfile(
        units=entries,
        variant=variant,
        n_used=labels.n,
        seed=_run_seed(seed),
        stage=stage,
        n_units=n_units,
    )


# ============================================================================
# PERMUTATION NULL
# ============================================================================

def _dependence_from_distances(distances: np.ndarray, labels: np.ndarray, p: int, variant: Variant) -> float:
    """Energy dependence from a precomputed distance matrix.

    Class-pair distance sums come from one product M^T D M with M the n x p
    one-hot class indicator.
    """
    onehot = (labels[:, None] == np.arange(1, p + 1)[None, :]).astype(np.float64)
    sums = onehot.T @ distances @ onehot
    counts = onehot.sum(axis=0)
    if variant == "v":
        within = np.diag(sums) / (counts * counts)
    else:
        if (counts < 2).any():
            raise TooFewSamples("U-statistic needs >= 2 samples per class")
        within = np.diag(sums) / (counts * (counts - 1))

    best = None
    for i in range(p):
        for j in range(i + 1, p):
            value = 2.0 * sums[i, j] / (counts[i] * counts[j]) - (within[i] + within[j])
            if variant == "v":
                value = max(value, 0.0)
            if best is None or value > best:
                best = value
    return float(best)


def _permuted_dependences(features: FeatureMatrix, labels: LabelVector, n_perm: int, seed, variant: Variant) -> np.ndarray:
    validate_pair(features, labels)
    if labels.p < 2:
        raise TooFewClasses(f"energy dependence needs >= 2 classes, got p={labels.p}")
    if n_perm < 1:
        raise ConfigError(f"n_perm must be >= 1, got {n_perm}")

    distances = pairwise_distance_matrix(features.data)
    rng = np.random.default_rng(seed)
    base = np.asarray(labels.labels)
    return np.array([
        _dependence_from_distances(distances, rng.permutation(base), labels.p, variant)
        for _ in range(n_perm)
    ])


def permutation_threshold(
    features: FeatureMatrix,
    labels: LabelVector,
    n_perm: int,
    quantile: float,
    seed: int = 0,
    variant: Variant = "v",
) -> float:
    """
    Empirical `quantile` of the energy dependence under shuffled labels.

    Shuffling the labels makes features and labels independent, so the
    returned value is a null threshold for energy_dependence. Seeded and
    reproducible.
    """
    if not 0.0 < quantile < 1.0:
        raise ConfigError(f"quantile must lie in (0, 1), got {quantile}")
    values = _permuted_dependences(features, labels, n_perm, seed, variant)
    return float(np.quantile(values, quantile))


def permutation_pvalue(
    features: FeatureMatrix,
    labels: LabelVector,
    n_perm: int,
    seed: int = 0,
    variant: Variant = "v",
) -> Tuple[float, float]:
    """(observed dependence, permutation p-value (1 + #{perm >= observed}) / (n_perm + 1))."""
    observed, _ = energy_dependence(features, labels, variant)
    values = _permuted_dependences(features, labels, n_perm, seed, variant)
    return observed, float((1 + np.sum(values >= observed)) / (n_perm + 1))
