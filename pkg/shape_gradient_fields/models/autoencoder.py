import numpy as np

from shape_gradient_fields.core import PointCloud, Tensor
from shape_gradient_fields.models.decoder import LatentField, ScoreDecoder
from shape_gradient_fields.models.encoder import PointEncoder, encode
from shape_gradient_fields.sampler import SamplerConfig, annealed_sample


def reconstruct(
    encoder: PointEncoder,
    decoder: ScoreDecoder,
    cloud: PointCloud,
    sampler_config: SamplerConfig,
    n: int,
) -> PointCloud:
    """
    Encodes `cloud` and samples `n` points from the field the decoder
    predicts for its code; `n` may exceed the input size (upsampling).
    """
    field = LatentField(decoder, encode(encoder, cloud))
    return annealed_sample(field, sampler_config, n)


def interpolate_latents(z0: Tensor, z1: Tensor, steps: int) -> Tensor:
    """(steps, L) codes on the segment from z0 to z1, both ends included."""
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.shape != z1.shape:
        raise ValueError(f"Latent shapes differ: {z0.shape} vs {z1.shape}")
    if steps < 2:
        raise ValueError(f"Need at least 2 interpolation steps, got {steps}")

    weights = np.linspace(0.0, 1.0, steps)[:, None]
    return (1 - weights) * z0 + weights * z1
