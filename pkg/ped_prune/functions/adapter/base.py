from typing import List, Optional

from ped_prune.functions.energy.dependence import dependence_profile
from ped_prune.types import DependenceProfile, FeatureMatrix, LabelVector, PruningPolicy, RetrainMetrics, Variant


class BaseModelAdapter:
    """What the PED stage engine needs from a model.

    Subclasses wrap one concrete model. Feature maps are reported for the
    active units only, in increasing unit order.
    """

    @property
    def unit_count(self) -> int:
        raise NotImplementedError

    @property
    def policy(self) -> PruningPolicy:
        raise NotImplementedError

    def extract_feature_maps(self) -> List[FeatureMatrix]:
        raise NotImplementedError

    def dependence_labels(self) -> LabelVector:
        raise NotImplementedError

    def apply_policy(self, policy: PruningPolicy) -> None:
        raise NotImplementedError

    def retrain(self, stage: int) -> RetrainMetrics:
        """Retrain under the current policy, warm-started from the current weights."""
        raise NotImplementedError

    def count_params(self) -> int:
        raise NotImplementedError

    def count_flops(self) -> int:
        raise NotImplementedError

    def profile(
        self,
        variant: Variant = "v",
        subsample_cap: Optional[int] = None,
        seed=0,
        stage: int = 0,
    ) -> DependenceProfile:
        """Dependence profile of the active units, keyed by original unit index."""
        return dependence_profile(
            self.extract_feature_maps(),
            self.dependence_labels(),
            variant=variant,
            subsample_cap=subsample_cap,
            seed=seed,
            unit_indices=self.policy.active_set,
            stage=stage,
            n_units=self.unit_count,
        )
