from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from loguru import logger
from sklearn.model_selection import train_test_split

from shape_gradient_fields.core import (
    BBoxTransform,
    PointCloud,
    normalize_unit_cube,
)
from shape_gradient_fields.data_io.shapes import ShapeSpec
from shape_gradient_fields.exceptions import ConfigError

# train/test membership is a function of the shape count and fractions only
SPLIT_STATE = 0


@dataclass
class Dataset:
    train: list[PointCloud]
    test: list[PointCloud]
    train_transforms: list[BBoxTransform] = field(default_factory=list)
    test_transforms: list[BBoxTransform] = field(default_factory=list)
    train_index: list[int] = field(default_factory=list)
    test_index: list[int] = field(default_factory=list)
    seed: int = 0

    def get_shapes(self) -> dict:
        return {"train": len(self.train), "test": len(self.test)}

    def batches(
        self, batch_size: int, epoch: int = 0
    ) -> Iterator[list[PointCloud]]:
        """Shuffled train batches; the order depends on (seed, epoch)."""
        if batch_size < 1:
            raise ConfigError(f"Batch size must be >= 1, got {batch_size}")
        order = np.random.default_rng([self.seed, epoch]).permutation(
            len(self.train)
        )
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            yield [self.train[idx] for idx in chunk]

    def split_dict(self) -> dict:
        return {
            "train": ",".join(str(idx) for idx in self.train_index),
            "test": ",".join(str(idx) for idx in self.test_index),
            "seed": self.seed,
        }


def _check_split(split: Sequence[float]) -> None:
    if len(split) != 2 or min(split) < 0 or not np.isclose(sum(split), 1.0):
        raise ConfigError(
            f"Split fractions must be two non-negative values summing to 1, "
            f"got {tuple(split)}"
        )


def split_indices(
    n_shapes: int, test_fraction: float
) -> tuple[np.ndarray, np.ndarray]:
    indices = np.arange(n_shapes)
    if test_fraction == 0 or n_shapes == 1:
        return indices, np.array([], dtype=int)
    if test_fraction == 1:
        return np.array([], dtype=int), indices

    train_idx, test_idx = train_test_split(
        indices, test_size=test_fraction, random_state=SPLIT_STATE
    )
    return np.sort(train_idx), np.sort(test_idx)


def dataset_from_clouds(
    clouds: Sequence[PointCloud],
    split: tuple[float, float] = (0.8, 0.2),
    seed: int = 0,
) -> Dataset:
    """
    Normalizes each cloud into [-1, 1]^D and splits them into train and
    test. Membership does not depend on `seed`, which only drives the
    batch order.
    """
    if not clouds:
        raise ConfigError("Dataset needs at least one shape")
    _check_split(split)

    normalized = [normalize_unit_cube(cloud) for cloud in clouds]
    train_idx, test_idx = split_indices(len(normalized), split[1])

    dataset = Dataset(
        train=[normalized[i][0] for i in train_idx],
        test=[normalized[i][0] for i in test_idx],
        train_transforms=[normalized[i][1] for i in train_idx],
        test_transforms=[normalized[i][1] for i in test_idx],
        train_index=[int(i) for i in train_idx],
        test_index=[int(i) for i in test_idx],
        seed=seed,
    )
    logger.info(f"dataset shapes: {dataset.get_shapes()}")
    return dataset


def make_dataset(
    specs: Sequence[ShapeSpec],
    split: tuple[float, float] = (0.8, 0.2),
    seed: int = 0,
) -> Dataset:
    """Generates every spec, then normalizes and splits the clouds."""
    if not specs:
        raise ConfigError("Dataset needs at least one shape spec")
    _check_split(split)
    return dataset_from_clouds(
        [spec.generate() for spec in specs], split=split, seed=seed
    )
