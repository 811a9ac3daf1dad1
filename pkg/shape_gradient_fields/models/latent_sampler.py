from dataclasses import dataclass
from typing import Sequence

import numpy as np
from loguru import logger

from shape_gradient_fields.core import PointCloud, Tensor
from shape_gradient_fields.models.encoder import PointEncoder, encode

LATENT_SAMPLER_LABEL = "gaussian-latent (not l-GAN)"


@dataclass(eq=False)
class LatentSampler:
    """
    Gaussian fitted to the latent codes of a training set. Generation
    draws a code from it and hands it to the decoder; this stands in for
    a latent GAN and is labeled as such wherever it is reported.
    """

    mean: Tensor
    covariance: Tensor
    diagonal: bool = False
    label: str = LATENT_SAMPLER_LABEL

    @property
    def latent_dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, seed: int, n: int = 1) -> Tensor:
        rng = np.random.default_rng(seed)
        if self.diagonal:
            std = np.sqrt(np.diag(self.covariance))
            return self.mean + std * rng.standard_normal((n, self.latent_dim))
        return rng.multivariate_normal(
            self.mean, self.covariance, size=n, method="eigh"
        )

    def to_tensors(self) -> dict[str, Tensor]:
        return {
            "latent_sampler.mean": self.mean,
            "latent_sampler.covariance": self.covariance,
        }


def fit_latent_sampler(
    encoder: PointEncoder, dataset: Sequence[PointCloud]
) -> LatentSampler:
    if not dataset:
        raise ValueError("Cannot fit a latent sampler to an empty dataset")

    codes = np.vstack([encode(encoder, cloud) for cloud in dataset])
    n_shapes, latent_dim = codes.shape
    mean = codes.mean(axis=0)

    if n_shapes < latent_dim:
        logger.warning(
            f"{n_shapes} shapes for {latent_dim} latent dims, falling back "
            f"to a diagonal covariance"
        )
        variance = codes.var(axis=0, ddof=1) if n_shapes > 1 else 0 * mean
        return LatentSampler(
            mean=mean, covariance=np.diag(variance), diagonal=True
        )

    covariance = np.cov(codes, rowvar=False)
    return LatentSampler(mean=mean, covariance=covariance)


def sample_latent(sampler: LatentSampler, seed: int) -> Tensor:
    return sampler.sample(seed, n=1)[0]
