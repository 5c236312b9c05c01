import logging
from typing import List, Optional

import numpy as np

from ped_prune.errors import ShapeMismatch
from ped_prune.functions.adapter.base import BaseModelAdapter
from ped_prune.functions.toynet.costs import count_flops, count_params
from ped_prune.functions.toynet.data import gen_synthetic, split_batch
from ped_prune.functions.toynet.network import (
    SkipNetwork,
    accuracy,
    extract_feature_maps,
    init_network,
    predict,
    with_policy,
)
from ped_prune.functions.toynet.training import train
from ped_prune.types import (
    Batch,
    DependenceConfig,
    FeatureMatrix,
    LabelVector,
    PruningPolicy,
    RetrainMetrics,
    RunConfig,
    TrainingConfig,
)

logger = logging.getLogger("ped-prune.adapter")

# independent random streams derived from the run seed
DATA_STREAM = 1
SPLIT_STREAM = 2
TRAIN_STREAM = 3


class ToyNetAdapter(BaseModelAdapter):
    """Runs PED on the in-process toy skip network."""

    def __init__(
        self,
        net: SkipNetwork,
        train_data: Batch,
        test_data: Batch,
        training: Optional[TrainingConfig] = None,
        dependence: Optional[DependenceConfig] = None,
        seed: int = 0,
    ):
        self.net = net
        self.train_data = train_data
        self.test_data = test_data
        self.training = training or TrainingConfig()
        self.dependence = dependence or DependenceConfig()
        self.seed = seed

    @classmethod
    def from_config(cls, config: RunConfig) -> "ToyNetAdapter":
        """Fresh (untrained) network plus the seeded train/test data of `config`."""
        data = gen_synthetic(
            config.data.kind,
            config.data.n,
            config.network.classes,
            config.network.input_dim,
            config.data.noise,
            seed=[config.seed, DATA_STREAM],
        )
        train_data, test_data = split_batch(data, config.data.test_fraction, seed=[config.seed, SPLIT_STREAM])
        return cls(
            init_network(config.network),
            train_data,
            test_data,
            training=config.training,
            dependence=config.dependence,
            seed=config.seed,
        )

    @property
    def unit_count(self) -> int:
        return self.net.config.units

    @property
    def policy(self) -> PruningPolicy:
        return self.net.policy

    @property
    def dependence_data(self) -> Batch:
        return self.test_data if self.dependence.split == "test" else self.train_data

    def pretrain(self) -> RetrainMetrics:
        """Initial training for `training.epochs` epochs."""
        logger.info(f"Pretraining {self.unit_count} units for {self.training.epochs} epochs")
        self.net = train(
            self.net,
            self.train_data,
            self.training.epochs,
            self.training.lr,
            seed=[self.seed, TRAIN_STREAM, 0],
            batch_size=self.training.batch_size,
        )
        return self.metrics()

    def metrics(self) -> RetrainMetrics:
        return RetrainMetrics(
            train_accuracy=accuracy(self.net, self.train_data),
            test_accuracy=accuracy(self.net, self.test_data),
        )

    def extract_feature_maps(self) -> List[FeatureMatrix]:
        return extract_feature_maps(self.net, self.dependence_data)

    def dependence_labels(self) -> LabelVector:
        """Labels the feature maps are compared against.

        By default the network's own predictions on the dependence split.
        When it predicts a single class there is nothing to separate, so the
        true labels are used instead.
        """
        data = self.dependence_data
        if self.dependence.label_source == "predicted":
            predicted = predict(self.net, data)
            if np.unique(predicted).size >= 2:
                return LabelVector.compact(predicted)
            logger.warning("Network predicts a single class; measuring dependence on true labels")
        return LabelVector.compact(data.targets)

    def apply_policy(self, policy: PruningPolicy) -> None:
        if policy.n_units != self.unit_count:
            raise ShapeMismatch(f"policy covers {policy.n_units} units, network has {self.unit_count}")
        self.net = with_policy(self.net, policy)

    def retrain(self, stage: int) -> RetrainMetrics:
        self.net = train(
            self.net,
            self.train_data,
            self.training.stage_epochs,
            self.training.lr,
            seed=[self.seed, TRAIN_STREAM, stage + 1],
            batch_size=self.training.batch_size,
            stage=stage,
        )
        return self.metrics()

    def count_params(self) -> int:
        return count_params(self.net.config, self.policy)

    def count_flops(self) -> int:
        return count_flops(self.net.config, self.policy)
