from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from shape_gradient_fields.exceptions import DataError

Tensor = NDArray[np.float64]

SUPPORTED_DIMS = (2, 3)


def _as_points(points: ArrayLike) -> Tensor:
    array = np.array(points, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(1, -1)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Finite, non-empty set of D-dimensional points (D in {2, 3})
    sampled from a shape surface. The underlying array is read-only.
    """

    points: Tensor

    def __post_init__(self) -> None:
        array = _as_points(self.points)

        if array.ndim != 2 or array.shape[0] == 0:
            raise ValueError(
                f"Point cloud must be a non-empty (m, D) array, got shape "
                f"{array.shape}"
            )
        if array.shape[1] not in SUPPORTED_DIMS:
            raise ValueError(
                f"Point cloud dimension must be one of {SUPPORTED_DIMS}, got "
                f"{array.shape[1]}"
            )
        if not np.all(np.isfinite(array)):
            raise ValueError("Point cloud contains non-finite coordinates")

        array.setflags(write=False)
        object.__setattr__(self, "points", array)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(m={len(self)}, dim={self.dim})"

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def bbox(self) -> tuple[Tensor, Tensor]:
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass(frozen=True)
class NoiseSchedule:
    sigmas: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        sigmas = tuple(float(s) for s in self.sigmas)
        weights = tuple(float(w) for w in self.weights)

        if not sigmas:
            raise ValueError("Noise schedule needs at least one level")
        if len(weights) != len(sigmas):
            raise ValueError(
                f"Got {len(weights)} weights for {len(sigmas)} noise levels"
            )
        if any(not np.isfinite(s) or s <= 0 for s in sigmas):
            raise ValueError(f"Noise levels must be positive, got {sigmas}")
        if any(not np.isfinite(w) or w <= 0 for w in weights):
            raise ValueError(f"Level weights must be positive, got {weights}")
        if any(a < b for a, b in zip(sigmas, sigmas[1:])):
            raise ValueError(
                f"Noise levels must be non-increasing, got {sigmas}"
            )

        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.sigmas)

    @property
    def sigma_min(self) -> float:
        return self.sigmas[-1]

    @property
    def sigma_max(self) -> float:
        return self.sigmas[0]

    def to_dict(self) -> dict:
        return {
            "sigmas": ",".join(repr(s) for s in self.sigmas),
            "weights": ",".join(repr(w) for w in self.weights),
        }

    @classmethod
    def from_sigmas(cls, sigmas: Sequence[float]) -> "NoiseSchedule":
        """Schedule with the sigma-squared weighting rule."""
        return cls(
            sigmas=tuple(sigmas), weights=tuple(float(s) ** 2 for s in sigmas)
        )


@dataclass(frozen=True, eq=False)
class BBoxTransform:
    center: Tensor
    scale: float

    def __post_init__(self) -> None:
        center = np.array(self.center, dtype=np.float64).reshape(-1)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)

        if not self.scale > 0:
            raise ValueError(f"Scale must be positive, got {self.scale}")

    def apply(self, points: ArrayLike) -> Tensor:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.center) * self.scale

    def invert(self, points: ArrayLike) -> Tensor:
        return np.asarray(points, dtype=np.float64) / self.scale + self.center

    def to_dict(self) -> dict:
        return {
            "center": ",".join(repr(float(c)) for c in self.center),
            "scale": repr(float(self.scale)),
        }


class ScoreField(ABC):
    """
    Capability shared by every gradient-of-log-density evaluator.
    `x` is either one D-vector or an (n, D) batch of query points and
    the result has the same shape.
    """

    @property
    @abstractmethod
    def dim(self) -> int:
        """Dimension D of the query space"""

    @abstractmethod
    def score(
        self, x: ArrayLike, sigma: float, latent: Optional[Tensor] = None
    ) -> Tensor:
        """Gradient of the log-density at x for noise level sigma"""

    def __call__(
        self, x: ArrayLike, sigma: float, latent: Optional[Tensor] = None
    ) -> Tensor:
        return self.score(x, sigma, latent)


def _bbox_transform(cloud: PointCloud) -> tuple[Tensor, float]:
    lower, upper = cloud.bbox()
    center = (lower + upper) / 2
    half_extent = float(np.max(upper - lower)) / 2
    return center, half_extent


def normalize_unit_cube(
    cloud: PointCloud,
) -> tuple[PointCloud, BBoxTransform]:
    """
    Centers the bounding box at the origin and applies one uniform
    scale so the longest side spans [-1, 1]. A zero-extent cloud is
    only centered (scale 1).
    """
    center, half_extent = _bbox_transform(cloud)
    scale = 1.0 / half_extent if half_extent > 0 else 1.0
    transform = BBoxTransform(center=center, scale=scale)
    return PointCloud(transform.apply(cloud.points)), transform


def normalize_eval(cloud: PointCloud) -> PointCloud:
    """Evaluation protocol: bbox centered, longest side of length 2."""
    center, half_extent = _bbox_transform(cloud)

    if half_extent <= 0:
        raise DataError(
            "Cannot evaluation-normalize a zero-extent point cloud"
        )

    transform = BBoxTransform(center=center, scale=1.0 / half_extent)
    return PointCloud(transform.apply(cloud.points))


def default_schedule(
    k: int, sigma_max: float = 1.0, sigma_min: float = 0.01
) -> NoiseSchedule:
    """
    k levels geometrically spaced from sigma_max down to sigma_min,
    weighted by sigma squared so every level contributes a loss of
    the same magnitude.
    """
    if k < 1:
        raise ValueError(f"Need at least one noise level, got k={k}")
    if not sigma_max >= sigma_min > 0:
        raise ValueError(
            f"Expected sigma_max >= sigma_min > 0, got {sigma_max}, "
            f"{sigma_min}"
        )

    if k == 1:
        sigmas = np.array([sigma_max])
    else:
        sigmas = np.geomspace(sigma_max, sigma_min, num=k)

    return NoiseSchedule.from_sigmas(sigmas.tolist())


@dataclass
class ArrayField(ScoreField):
    """Wraps a plain callable (x, sigma) -> score as a ScoreField."""

    function: object
    dimension: int = 2
    name: str = field(default="array-field")

    @property
    def dim(self) -> int:
        return self.dimension

    def score(
        self, x: ArrayLike, sigma: float, latent: Optional[Tensor] = None
    ) -> Tensor:
        return np.asarray(
            self.function(np.asarray(x, dtype=np.float64), sigma),
            dtype=np.float64,
        )
