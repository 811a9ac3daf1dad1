"""
Point-cloud generation metrics.

Conventions: CD is the sum of the two directed means of squared nearest
neighbour distances; EMD is the mean unsquared L2 displacement under an
exact optimal bijection. Reports record values unscaled and expose the
usual table scaling (CD x1e4, EMD x1e2, MMD-CD x1e3, MMD-EMD x1e2).
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from itertools import product
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import mlflow
import numpy as np
import pandas as pd
from loguru import logger
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from sklearn.neighbors import KDTree
from tqdm import tqdm

from shape_gradient_fields.analytic_field import GmmField
from shape_gradient_fields.config.env_config import DISABLE_PROGRESS
from shape_gradient_fields.config.key_value import format_key_values
from shape_gradient_fields.core import PointCloud, normalize_eval
from shape_gradient_fields.exceptions import NumericError

SCALES = {"cd": 1e4, "emd": 1e2, "mmd_cd": 1e3, "mmd_emd": 1e2}
CONVENTIONS = (
    "cd: squared L2, sum of both directed means",
    "emd: mean L2 under an exact optimal bijection",
    "1-nna ties go to the first set",
)


class Base(str, Enum):
    CD = "cd"
    EMD = "emd"


def _check_pair(x: PointCloud, y: PointCloud) -> None:
    if x.dim != y.dim:
        raise ValueError(f"Dimension mismatch: {x.dim} vs {y.dim}")


def chamfer(x: PointCloud, y: PointCloud) -> float:
    _check_pair(x, y)
    to_y, _ = KDTree(y.points).query(x.points, k=1)
    to_x, _ = KDTree(x.points).query(y.points, k=1)
    return float(np.mean(to_y[:, 0] ** 2) + np.mean(to_x[:, 0] ** 2))


def chamfer_naive(x: PointCloud, y: PointCloud) -> float:
    """Same value as `chamfer` from the full distance matrix."""
    _check_pair(x, y)
    sq_dist = cdist(x.points, y.points, metric="sqeuclidean")
    return float(sq_dist.min(axis=1).mean() + sq_dist.min(axis=0).mean())


def emd(x: PointCloud, y: PointCloud) -> float:
    _check_pair(x, y)
    if len(x) != len(y):
        raise ValueError(
            f"EMD needs clouds of equal size, got {len(x)} and {len(y)}"
        )
    cost = cdist(x.points, y.points, metric="euclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


METRIC_FUNCTIONS: dict[Base, Callable[[PointCloud, PointCloud], float]] = {
    Base.CD: chamfer,
    Base.EMD: emd,
}


def pairwise_distances(
    first: Sequence[PointCloud],
    second: Sequence[PointCloud],
    base: Union[Base, str],
    symmetric: bool = False,
) -> np.ndarray:
    """(len(first), len(second)) matrix of base distances."""
    metric = METRIC_FUNCTIONS[Base(base)]
    distances = np.zeros((len(first), len(second)))

    pairs = list(product(range(len(first)), range(len(second))))
    if symmetric:
        pairs = [(i, j) for i, j in pairs if i < j]

    for i, j in tqdm(
        pairs, desc=f"{Base(base).value} pairs", disable=DISABLE_PROGRESS
    ):
        distances[i, j] = metric(first[i], second[j])
        if symmetric:
            distances[j, i] = distances[i, j]

    return distances


def _check_sets(*sets: Sequence[PointCloud]) -> None:
    if any(len(shapes) == 0 for shapes in sets):
        raise ValueError("Shape sets must be non-empty")


def mmd_from_matrix(reference_to_generated: np.ndarray) -> float:
    return float(reference_to_generated.min(axis=1).mean())


def coverage_from_matrix(generated_to_reference: np.ndarray) -> float:
    matched = np.unique(generated_to_reference.argmin(axis=1))
    return len(matched) / generated_to_reference.shape[1]


def one_nna_from_matrix(distances: np.ndarray, n_first: int) -> float:
    """
    Leave-one-out 1-NN accuracy over a union whose first `n_first`
    rows/columns belong to the first set. Ties predict the first set.
    """
    distances = distances.astype(np.float64, copy=True)
    np.fill_diagonal(distances, np.inf)

    nearest_first = distances[:, :n_first].min(axis=1)
    nearest_second = distances[:, n_first:].min(axis=1, initial=np.inf)
    predicted_first = nearest_first <= nearest_second

    is_first = np.arange(len(distances)) < n_first
    return float(np.mean(predicted_first == is_first))


def mmd(
    generated: Sequence[PointCloud],
    reference: Sequence[PointCloud],
    base: Union[Base, str] = Base.CD,
) -> float:
    _check_sets(generated, reference)
    return mmd_from_matrix(pairwise_distances(reference, generated, base))


def coverage(
    generated: Sequence[PointCloud],
    reference: Sequence[PointCloud],
    base: Union[Base, str] = Base.CD,
) -> float:
    _check_sets(generated, reference)
    return coverage_from_matrix(pairwise_distances(generated, reference, base))


def _union_matrix(
    first: Sequence[PointCloud],
    second: Sequence[PointCloud],
    base: Union[Base, str],
) -> np.ndarray:
    union = list(first) + list(second)
    return pairwise_distances(union, union, base, symmetric=True)


def one_nna(
    set_a: Sequence[PointCloud],
    set_b: Sequence[PointCloud],
    base: Union[Base, str] = Base.CD,
) -> float:
    _check_sets(set_a, set_b)
    return one_nna_from_matrix(_union_matrix(set_a, set_b, base), len(set_a))


def oracle_bound(
    source: Union[GmmField, PointCloud, object],
    n: int,
    seeds: Sequence[int],
) -> tuple[float, float]:
    """
    Mean (CD, EMD) between two independent n-point samplings of one
    source, over `seeds`. A source is a GmmField (support points drawn
    with replacement), a PointCloud (same, over its points) or anything
    with a `sample(n, seed)` method such as a ShapeSpec.
    """
    if isinstance(source, PointCloud):
        source = GmmField.from_cloud(source)
    if isinstance(source, GmmField):
        field = source

        def draw(seed: int) -> PointCloud:
            return field.sample_perturbed(0.0, n, seed)

    else:

        def draw(seed: int) -> PointCloud:
            return source.sample(n, seed)

    if not seeds:
        raise ValueError("Oracle bound needs at least one seed")

    cds, emds = [], []
    for seed in seeds:
        first, second = draw(2 * seed), draw(2 * seed + 1)
        cds.append(chamfer(first, second))
        emds.append(emd(first, second))

    return float(np.mean(cds)), float(np.mean(emds))


@dataclass
class MetricReport:
    cd: Optional[float] = None
    emd: Optional[float] = None
    mmd_cd: Optional[float] = None
    mmd_emd: Optional[float] = None
    cov_cd: Optional[float] = None
    cov_emd: Optional[float] = None
    one_nna_cd: Optional[float] = None
    one_nna_emd: Optional[float] = None
    protocol: str = "bbox-eval"
    seed: int = 0

    def __post_init__(self) -> None:
        for name, value in self.values().items():
            if not (np.isfinite(value) and value >= 0):
                raise NumericError(f"Metric {name} is {value}")

    def values(self) -> dict[str, float]:
        return {
            name: value
            for name, value in self.__dict__.items()
            if name not in ("protocol", "seed") and value is not None
        }

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def scaled(self) -> dict[str, float]:
        return {
            name: value * SCALES.get(name, 1.0)
            for name, value in self.values().items()
        }

    def get_metric_from_string(self, metric_name: str) -> float:
        values = self.values()
        if metric_name not in values:
            raise ValueError(
                f"Metric '{metric_name}' not in report. Available: "
                f"{list(values)}"
            )
        return values[metric_name]

    @classmethod
    def from_multiple_metrics(cls, *args):
        frame = pd.DataFrame([report.values() for report in args]).mean()
        return cls(
            **frame.to_dict(),
            protocol=args[0].protocol,
            seed=args[0].seed,
        )

    def to_key_values(self) -> str:
        scales = ", ".join(f"{k} x{v:g}" for k, v in SCALES.items())
        header = "\n".join(
            [*CONVENTIONS, f"values unscaled; table scaling: {scales}"]
        )
        pairs = {
            "protocol": self.protocol,
            "seed": self.seed,
            **{name: repr(value) for name, value in self.values().items()},
        }
        return format_key_values(pairs, header=header)

    def to_frame(self, scaled: bool = False) -> pd.DataFrame:
        row = self.scaled() if scaled else self.values()
        return pd.DataFrame(
            [{"protocol": self.protocol, "seed": self.seed, **row}]
        )

    def save(self, directory: Union[str, Path]) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "metrics.txt").write_text(
            self.to_key_values(), encoding="utf-8"
        )
        self.to_frame().to_csv(
            directory / "metrics.csv", index=False, float_format="%.17g"
        )


class BaseEvaluator(ABC):
    """Interface for Evaluator"""

    @abstractmethod
    def get_all_metrics(self, to_mlflow: bool):
        """Method for getting all metrics"""


class Evaluator(BaseEvaluator):
    """
    Compares a set of generated clouds with a set of reference clouds.
    Paired metrics (CD, EMD) average over zip(generated, reference);
    set metrics use every pair.
    """

    def __init__(
        self,
        generated: Sequence[PointCloud],
        reference: Sequence[PointCloud],
        normalize: bool = True,
        with_emd: bool = True,
        seed: int = 0,
    ) -> None:
        _check_sets(generated, reference)
        self.normalize = normalize
        self.generated = self._prepare(generated)
        self.reference = self._prepare(reference)
        self.with_emd = with_emd
        self.seed = seed
        self._matrices: dict[tuple[str, Base], np.ndarray] = {}

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(generated={len(self.generated)}, "
            f"reference={len(self.reference)}, normalize={self.normalize})"
        )

    @property
    def protocol(self) -> str:
        return "bbox-eval" if self.normalize else "none"

    def _prepare(self, clouds: Sequence[PointCloud]) -> list[PointCloud]:
        if not self.normalize:
            return list(clouds)
        return [normalize_eval(cloud) for cloud in clouds]

    @property
    def bases(self) -> list[Base]:
        return [Base.CD, Base.EMD] if self.with_emd else [Base.CD]

    def _matrix(self, kind: str, base: Base) -> np.ndarray:
        key = (kind, base)
        if key not in self._matrices:
            if kind == "union":
                matrix = _union_matrix(self.generated, self.reference, base)
            else:
                matrix = pairwise_distances(
                    self.generated, self.reference, base
                )
            self._matrices[key] = matrix
        return self._matrices[key]

    def get_paired(self, base: Base) -> float:
        metric = METRIC_FUNCTIONS[base]
        return float(
            np.mean(
                [
                    metric(gen, ref)
                    for gen, ref in zip(self.generated, self.reference)
                ]
            )
        )

    def get_mmd(self, base: Base) -> float:
        return mmd_from_matrix(self._matrix("cross", base).T)

    def get_coverage(self, base: Base) -> float:
        return coverage_from_matrix(self._matrix("cross", base))

    def get_one_nna(self, base: Base) -> float:
        return one_nna_from_matrix(
            self._matrix("union", base), len(self.generated)
        )

    def get_all_metrics(
        self, to_mlflow: bool = False, set_metrics: bool = True
    ) -> MetricReport:
        values = {}
        for base in self.bases:
            name = base.value
            values[name] = self.get_paired(base)
            if set_metrics:
                values[f"mmd_{name}"] = self.get_mmd(base)
                values[f"cov_{name}"] = self.get_coverage(base)
                values[f"one_nna_{name}"] = self.get_one_nna(base)

        report = MetricReport(
            **values, protocol=self.protocol, seed=self.seed
        )
        logger.info(f"metrics: {report.values()}")

        if to_mlflow:
            mlflow.log_metrics(report.values())

        return report
