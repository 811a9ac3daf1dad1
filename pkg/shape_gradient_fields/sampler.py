"""
Langevin and annealed Langevin dynamics over any ScoreField.

Every chain owns two counter-based Philox streams keyed by (seed, chain):
one for its prior draw and one for the noise of each (level, step) in a
fixed order. A chain's path does not depend on how many other chains
run beside it, and runs that differ only in the prior share their noise.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from shape_gradient_fields.config.env_config import DISABLE_PROGRESS
from shape_gradient_fields.core import (
    NoiseSchedule,
    PointCloud,
    ScoreField,
    Tensor,
    default_schedule,
)
from shape_gradient_fields.data_io.cloud_files import (
    trajectory_table,
    write_trajectory,
)
from shape_gradient_fields.exceptions import NumericError


@dataclass(frozen=True)
class UniformPrior:
    """Uniform over the training cube [low, high]^D."""

    low: float = -1.0
    high: float = 1.0

    def __post_init__(self) -> None:
        if not self.low < self.high:
            raise ValueError(
                f"Uniform prior needs low < high, got {self.low}, {self.high}"
            )

    def draw(self, rng: np.random.Generator, dim: int) -> Tensor:
        return rng.uniform(self.low, self.high, size=dim)

    def to_dict(self) -> dict:
        return {"prior": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class GaussianPrior:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self) -> None:
        if not self.std > 0:
            raise ValueError(f"Gaussian prior std must be > 0, got {self.std}")

    def draw(self, rng: np.random.Generator, dim: int) -> Tensor:
        return self.mean + self.std * rng.standard_normal(dim)

    def to_dict(self) -> dict:
        return {"prior": "gaussian", "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class FixedPointPrior:
    """Every chain starts at `point` (the origin when not given)."""

    point: Optional[tuple[float, ...]] = None

    def draw(self, rng: np.random.Generator, dim: int) -> Tensor:
        if self.point is None:
            return np.zeros(dim)
        if len(self.point) != dim:
            raise ValueError(
                f"Fixed point {self.point} does not have dimension {dim}"
            )
        return np.array(self.point, dtype=np.float64)

    def to_dict(self) -> dict:
        point = "origin" if self.point is None else self.point
        return {"prior": "fixed", "point": point}


Prior = Union[UniformPrior, GaussianPrior, FixedPointPrior]


def make_prior(
    kind: str,
    mean: float = 0.0,
    std: float = 1.0,
    point: Optional[Sequence[float]] = None,
) -> Prior:
    if kind == "uniform":
        return UniformPrior()
    elif kind == "gaussian":
        return GaussianPrior(mean=mean, std=std)
    elif kind == "fixed":
        return FixedPointPrior(None if point is None else tuple(point))
    else:
        raise ValueError(
            f"Unknown prior '{kind}', expected uniform, gaussian or fixed"
        )


@dataclass
class SamplerConfig:
    schedule: NoiseSchedule = field(
        default_factory=lambda: default_schedule(10)
    )
    alpha: float = 2e-4
    steps_per_level: int = 10
    prior: Prior = field(default_factory=UniformPrior)
    seed: int = 0
    noise_first: bool = True

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"Step size alpha must be > 0, got {self.alpha}")
        if self.steps_per_level < 1:
            raise ValueError(
                f"Need at least one step per level, got "
                f"{self.steps_per_level}"
            )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "steps_per_level": self.steps_per_level,
            "seed": self.seed,
            "noise_first": self.noise_first,
            **self.schedule.to_dict(),
            **self.prior.to_dict(),
        }


def _check_finite(values: Tensor, context: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"Non-finite score field output at {context}")


def langevin_step(
    field: ScoreField,
    x: Tensor,
    sigma: float,
    alpha: float,
    noise: Tensor,
) -> Tensor:
    """x + (alpha / 2) g(x, sigma) + sqrt(alpha) noise"""
    if not alpha > 0 or not sigma > 0:
        raise ValueError(
            f"Need alpha > 0 and sigma > 0, got {alpha}, {sigma}"
        )
    grad = field.score(x, sigma)
    _check_finite(grad, f"sigma={sigma}")
    return x + 0.5 * alpha * grad + np.sqrt(alpha) * noise


@dataclass
class SamplingRun:
    cloud: PointCloud
    # chain positions before the first level and after every level
    trajectory: list[Tensor]
    sigmas: tuple[float, ...]

    def labels(self) -> tuple[str, ...]:
        return ("prior", *(f"{sigma:g}" for sigma in self.sigmas))

    def trajectory_frame(self) -> pd.DataFrame:
        return trajectory_table(self.trajectory, self.labels())

    def write_trajectory(self, path: Union[str, Path]) -> Path:
        return write_trajectory(path, self.trajectory, self.labels())


LevelHook = Callable[[int, float, Tensor], None]


class AnnealedLangevin:
    """
    Annealed Langevin dynamics over the levels of `config.schedule`,
    coarse to fine. With `noise_first` each step is

        x' = x + sqrt(alpha) sigma_i / sigma_k * eps
        x  = x' + alpha sigma_i^2 / (2 sigma_k^2) * g(x', sigma_i)

    and the two lines swap order otherwise. `on_level` is called after
    every level with (level index, sigma, positions).
    """

    def __init__(
        self,
        config: SamplerConfig,
        on_level: Optional[LevelHook] = None,
    ) -> None:
        self.config = config
        self.on_level = on_level

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(levels={len(self.config.schedule)}, "
            f"T={self.config.steps_per_level}, alpha={self.config.alpha})"
        )

    def _chain_rng(self, chain: int, stream: int) -> np.random.Generator:
        key = np.random.SeedSequence([self.config.seed, chain, stream])
        return np.random.Generator(np.random.Philox(key))

    def draw_chains(self, n: int, dim: int) -> tuple[Tensor, Tensor]:
        """Prior positions (n, D) and noise (n, k, T, D) of every chain."""
        levels = len(self.config.schedule)
        steps = self.config.steps_per_level
        starts = np.empty((n, dim))
        noise = np.empty((n, levels, steps, dim))

        for chain in range(n):
            starts[chain] = self.config.prior.draw(
                self._chain_rng(chain, 0), dim
            )
            noise[chain] = self._chain_rng(chain, 1).standard_normal(
                (levels, steps, dim)
            )

        return starts, noise

    def run(self, field: ScoreField, n: int) -> SamplingRun:
        if n < 1:
            raise ValueError(f"Need at least one chain, got n={n}")

        schedule = self.config.schedule
        alpha = self.config.alpha
        sigma_k = schedule.sigma_min

        x, noise = self.draw_chains(n, field.dim)
        trajectory = [x.copy()]

        levels = tqdm(
            list(enumerate(schedule.sigmas)),
            desc="Level",
            disable=DISABLE_PROGRESS,
        )
        for i, sigma in levels:
            noise_scale = np.sqrt(alpha) * sigma / sigma_k
            grad_scale = alpha * sigma**2 / (2 * sigma_k**2)

            for t in range(self.config.steps_per_level):
                context = f"level {i} (sigma={sigma:g}), step {t}"
                if self.config.noise_first:
                    x = x + noise_scale * noise[:, i, t]
                    x = x + grad_scale * self._score(field, x, sigma, context)
                else:
                    x = x + grad_scale * self._score(field, x, sigma, context)
                    x = x + noise_scale * noise[:, i, t]

            trajectory.append(x.copy())
            if self.on_level is not None:
                self.on_level(i, sigma, x.copy())

        logger.info(
            f"sampled {n} points over {len(schedule)} levels "
            f"(sigma {schedule.sigma_max:g} -> {sigma_k:g})"
        )
        return SamplingRun(
            cloud=PointCloud(x), trajectory=trajectory, sigmas=schedule.sigmas
        )

    @staticmethod
    def _score(
        field: ScoreField, x: Tensor, sigma: float, context: str
    ) -> Tensor:
        grad = field.score(x, sigma)
        finite = np.all(np.isfinite(grad), axis=1)
        if not np.all(finite):
            chain = int(np.flatnonzero(~finite)[0])
            raise NumericError(
                f"Non-finite score field output at {context}, chain {chain}"
            )
        return grad


def annealed_sample(
    field: ScoreField, config: SamplerConfig, n: int
) -> PointCloud:
    return AnnealedLangevin(config).run(field, n).cloud
