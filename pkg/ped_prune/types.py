"""
Unified Pydantic types for PED (Pruning with Energy Dependence).

Arrays are held as float64/int64 numpy arrays; JSON-facing models only use
plain Python types so `model_dump(mode="json")` is the wire format.
"""

import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from .errors import ConfigError, MissingClass, NonFiniteInput, ShapeMismatch, ZeroLabel


StorageDtype = Literal["f32", "f64"]
Variant = Literal["v", "u"]
Strategy = Literal["cluster-head", "top-k", "random"]
HeadMode = Literal["max", "centroid"]
Composition = Literal["residual", "dense"]
Activation = Literal["relu", "linear"]
ArgPair = Tuple[int, int]


# ============================================================================
# DATA TYPES
# ============================================================================

class FeatureMatrix(BaseModel):
    """n x d matrix of flattened feature-map samples for one skip-unit.

    Values are always held in float64; `dtype` remembers the storage
    precision of the dump it came from so it can be written back unchanged.
    A 1-D input is read as a single column.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray
    dtype: StorageDtype = "f64"

    @field_validator("data", mode="before")
    @classmethod
    def coerce_data(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ShapeMismatch(f"feature matrix must be 2-D, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(f"feature matrix must be at least 1x1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteInput("feature matrix contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        return arr

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def d(self) -> int:
        return int(self.data.shape[1])

    def take(self, rows: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(data=self.data[rows], dtype=self.dtype)


class LabelVector(BaseModel):
    """n class labels over the alphabet {1..p}; every class appears."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: np.ndarray

    @field_validator("labels", mode="before")
    @classmethod
    def coerce_labels(cls, v):
        raw = np.asarray(v)
        if raw.ndim != 1 or raw.size < 1:
            raise ShapeMismatch("label vector must be a non-empty 1-D sequence")
        arr = raw.astype(np.int64)
        if not np.array_equal(arr, raw):
            raise ShapeMismatch("labels must be integers")
        if (arr < 1).any():
            raise ZeroLabel()
        present = np.unique(arr)
        gaps = np.flatnonzero(present != np.arange(1, present.size + 1))
        if gaps.size:
            raise MissingClass(int(gaps[0]) + 1)
        arr.setflags(write=False)
        return arr

    @classmethod
    def compact(cls, labels) -> "LabelVector":
        """Relabel the observed classes to 1..p' keeping their order."""
        arr = np.asarray(labels)
        _, dense = np.unique(arr, return_inverse=True)
        return cls(labels=dense.reshape(-1) + 1)

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def p(self) -> int:
        return int(self.labels.max())

    def class_indices(self) -> List[np.ndarray]:
        """Row indices of each class 1..p, in sample order."""
        return [np.flatnonzero(self.labels == c) for c in range(1, self.p + 1)]

    def take(self, rows: np.ndarray) -> "LabelVector":
        return LabelVector(labels=self.labels[rows])


class Batch(BaseModel):
    """Inputs and 1-based targets for the toy network."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: np.ndarray
    targets: np.ndarray

    @field_validator("inputs", mode="before")
    @classmethod
    def coerce_inputs(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ShapeMismatch(f"batch inputs must be m x input_dim with m >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteInput("batch inputs contain NaN or Inf")
        return arr

    @field_validator("targets", mode="before")
    @classmethod
    def coerce_targets(cls, v):
        arr = np.array(v, dtype=np.int64).reshape(-1)
        if (arr < 1).any():
            raise ZeroLabel()
        return arr

    @model_validator(mode="after")
    def check_lengths(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ShapeMismatch(
                f"batch has {self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets"
            )
        return self

    @property
    def m(self) -> int:
        return int(self.inputs.shape[0])

    def take(self, rows: np.ndarray) -> "Batch":
        return Batch(inputs=self.inputs[rows], targets=self.targets[rows])


# ============================================================================
# STATISTICS TYPES
# ============================================================================

class EnergyDistanceValue(BaseModel):
    value: float
    n1: int
    n2: int
    variant: Variant = "v"


class UnitDependence(BaseModel):
    """Energy dependence of one unit, keyed by its original unit index."""
    index: int = Field(ge=0)
    dependence: float
    arg_pair: ArgPair

    @field_validator("dependence")
    @classmethod
    def finite_dependence(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("dependence must be finite")
        return v


class DependenceProfile(BaseModel):
    """Per-unit energy dependence values (the vector D^t of one stage)."""
    units: List[UnitDependence] = Field(min_length=1)
    variant: Variant = "v"
    n_used: int = Field(ge=1)
    seed: int = Field(default=0, ge=0)
    stage: int = Field(default=0, ge=0)
    n_units: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_units(self):
        indices = [u.index for u in self.units]
        if len(set(indices)) != len(indices):
            raise ValueError("unit indices must be unique")
        if self.n_units is not None and max(indices) >= self.n_units:
            raise ValueError(f"unit index {max(indices)} outside n_units={self.n_units}")
        # U-statistic values may dip below zero; the V-statistic never does
        if self.variant == "v" and any(u.dependence < 0 for u in self.units):
            raise ValueError("V-statistic dependence values must be non-negative")
        return self

    @property
    def values(self) -> np.ndarray:
        return np.array([u.dependence for u in self.units], dtype=np.float64)

    @property
    def indices(self) -> List[int]:
        return [u.index for u in self.units]

    @property
    def total_units(self) -> int:
        return self.n_units if self.n_units is not None else max(self.indices) + 1


class Clustering(BaseModel):
    """Optimal 1-D k-means partition; clusters are intervals of the sorted values."""
    k: int
    assignment: List[int]
    boundaries: List[int]
    wcss: float
    centroids: List[float]

    def members(self) -> List[List[int]]:
        groups: List[List[int]] = [[] for _ in range(self.k)]
        for index, cluster in enumerate(self.assignment):
            groups[cluster].append(index)
        return groups

    def summary(self, heads: List[int]) -> "ClusteringSummary":
        return ClusteringSummary(k=self.k, assignment=self.assignment, wcss=self.wcss, heads=heads)


class ClusteringSummary(BaseModel):
    k: int
    assignment: List[int]
    wcss: float
    heads: List[int]


# ============================================================================
# PRUNING TYPES
# ============================================================================

class PruningPolicy(BaseModel):
    """Per-unit keep (1) / prune (0) flags over the original unit indexing."""
    alphas: List[int] = Field(min_length=1)
    stage: int = Field(default=0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def check_declared_active_set(cls, data):
        if isinstance(data, dict) and "active_set" in data and "alphas" in data:
            declared = list(data["active_set"])
            actual = [i for i, a in enumerate(data["alphas"]) if a == 1]
            if declared != actual:
                raise ValueError(f"active_set {declared} disagrees with alphas")
        return data

    @field_validator("alphas")
    @classmethod
    def check_alphas(cls, v: List[int]) -> List[int]:
        if any(a not in (0, 1) for a in v):
            raise ValueError("alphas must be 0 or 1")
        if not any(v):
            raise ValueError("at least one unit must stay active")
        return v

    @computed_field
    @property
    def active_set(self) -> List[int]:
        return [i for i, a in enumerate(self.alphas) if a == 1]

    @property
    def n_units(self) -> int:
        return len(self.alphas)

    def is_active(self, unit: int) -> bool:
        return self.alphas[unit] == 1

    @classmethod
    def all_active(cls, n_units: int, stage: int = 0) -> "PruningPolicy":
        return cls(alphas=[1] * n_units, stage=stage)

    @classmethod
    def from_active(cls, n_units: int, active: List[int], stage: int = 0) -> "PruningPolicy":
        keep = set(active)
        return cls(alphas=[1 if i in keep else 0 for i in range(n_units)], stage=stage)


class StageSchedule(BaseModel):
    """How many units survive each stage.

    `decrement` keeps |S^t| - 1, `fraction` keeps ceil(keep_ratio * |S^t|);
    an explicit `k_sequence` overrides both.
    """
    model_config = ConfigDict(extra="forbid")

    n_stages: int = Field(default=4, ge=0)
    rule: Literal["decrement", "fraction"] = "decrement"
    k_sequence: Optional[List[int]] = None
    keep_ratio: Optional[float] = Field(default=None, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def check_rule(self):
        if self.rule == "fraction" and self.keep_ratio is None and self.k_sequence is None:
            raise ValueError("rule 'fraction' needs keep_ratio")
        if self.k_sequence is not None:
            if any(k < 1 for k in self.k_sequence):
                raise ValueError("k_sequence entries must be >= 1")
            if len(self.k_sequence) < self.n_stages:
                raise ValueError(
                    f"k_sequence has {len(self.k_sequence)} entries for {self.n_stages} stages"
                )
        return self


class RetrainMetrics(BaseModel):
    train_accuracy: float
    test_accuracy: float


class StageReport(BaseModel):
    """Everything recorded for one PED stage."""
    stage: int
    k: int
    active_count: int
    strategy: Strategy
    profile: DependenceProfile
    clustering: Optional[ClusteringSummary] = None
    policy: PruningPolicy
    train_accuracy: float
    test_accuracy: float
    param_count: int
    flop_count: int
    param_reduction_pct: float
    flop_reduction_pct: float
    wall_time: Optional[float] = None


# ============================================================================
# TOY NETWORK AND RUN CONFIGURATION
# ============================================================================

class SkipNetConfig(BaseModel):
    """Shape of the toy skip-connection network.

    `width` is the stem width w (and the residual branch width);
    `growth` is the dense growth width g.
    """
    model_config = ConfigDict(extra="forbid")

    units: int = Field(default=8, ge=1)
    input_dim: int = Field(default=2, ge=1)
    width: int = Field(default=16, ge=1)
    growth: int = Field(default=4, ge=1)
    classes: int = Field(default=2, ge=2)
    composition: Composition = "residual"
    activation: Activation = "relu"
    seed: int = Field(default=0, ge=0)


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["blobs", "rings"] = "rings"
    n: int = Field(default=2000, ge=2)
    noise: float = Field(default=0.1, ge=0.0)
    test_fraction: float = Field(default=0.25, gt=0.0, lt=1.0)


class TrainingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=40, ge=0)
    lr: float = Field(default=0.05, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    retrain_epochs: Optional[int] = Field(default=None, ge=0)

    @property
    def stage_epochs(self) -> int:
        """Per-stage retraining epochs; a quarter of the initial epochs unless set."""
        if self.retrain_epochs is not None:
            return self.retrain_epochs
        return max(1, self.epochs // 4)


class DependenceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variant: Variant = "v"
    subsample_cap: Optional[int] = Field(default=None, ge=2)
    split: Literal["train", "test"] = "test"
    label_source: Literal["predicted", "true"] = "predicted"


class RunConfig(BaseModel):
    """Effective configuration of one CLI run (file values overridden by flags)."""
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, le=2**64 - 1)
    strategy: Strategy = "cluster-head"
    head_mode: HeadMode = "max"
    k: Optional[int] = Field(default=None, ge=1)
    network: SkipNetConfig = Field(default_factory=SkipNetConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    dependence: DependenceConfig = Field(default_factory=DependenceConfig)
    schedule: StageSchedule = Field(default_factory=StageSchedule)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    strategies: List[Strategy] = Field(default_factory=lambda: ["cluster-head", "top-k", "random"])
    grad_eps: float = Field(default=1e-5, gt=0.0)
    grad_tolerance: float = Field(default=1e-4, gt=0.0)

    @model_validator(mode="after")
    def sync_network_seed(self):
        # one seed governs every random stream of a run
        if self.network.seed != self.seed:
            self.network = self.network.model_copy(update={"seed": self.seed})
        if self.data.n < self.network.classes:
            raise ConfigError(f"data.n={self.data.n} is smaller than classes={self.network.classes}")
        return self
