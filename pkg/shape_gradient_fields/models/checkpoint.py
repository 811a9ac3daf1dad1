"""
A checkpoint is a directory holding `params.bin` (tensor container with
every encoder, decoder and latent-sampler tensor, names prefixed by
owner) and `manifest.txt` (architecture, schedule and training
provenance as key=value lines).
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from loguru import logger

from shape_gradient_fields.config.key_value import (
    read_key_values,
    write_key_values,
)
from shape_gradient_fields.core import NoiseSchedule
from shape_gradient_fields.exceptions import DataError
from shape_gradient_fields.models.decoder import ScoreDecoder
from shape_gradient_fields.models.encoder import PointEncoder
from shape_gradient_fields.models.latent_sampler import LatentSampler
from shape_gradient_fields.nnet import read_tensors, write_tensors

FORMAT = "sgf-checkpoint-1"
PARAMS_FILE = "params.bin"
MANIFEST_FILE = "manifest.txt"


@dataclass
class Checkpoint:
    encoder: PointEncoder
    decoder: ScoreDecoder
    schedule: NoiseSchedule
    latent_sampler: Optional[LatentSampler] = None
    seed: int = 0
    iterations: int = 0


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(value) for value in text.split(","))


def save_checkpoint(
    directory: Union[str, Path], checkpoint: Checkpoint
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    encoder, decoder = checkpoint.encoder, checkpoint.decoder
    tensors = {
        **{f"encoder.{k}": v for k, v in encoder.state_dict().items()},
        **{
            f"decoder.{k}": v
            for k, v in decoder.network.state_dict().items()
        },
    }
    sampler = checkpoint.latent_sampler
    if sampler is not None:
        tensors.update(sampler.to_tensors())
    write_tensors(directory / PARAMS_FILE, tensors)

    manifest = {
        "format": FORMAT,
        "dim": decoder.dim,
        "latent_dim": decoder.latent_dim,
        "encoder_widths": ",".join(str(w) for w in encoder.widths),
        "hidden": decoder.network.hidden,
        "n_blocks": decoder.network.n_blocks,
        "scale_by_sigma": int(decoder.scale_by_sigma),
        **checkpoint.schedule.to_dict(),
        "seed": checkpoint.seed,
        "iterations": checkpoint.iterations,
        "latent_sampler": sampler.label if sampler is not None else "none",
        "latent_sampler_diagonal": int(sampler.diagonal) if sampler else 0,
    }
    write_key_values(directory / MANIFEST_FILE, manifest)
    logger.info(f"checkpoint written to {directory}")
    return directory


def load_checkpoint(directory: Union[str, Path]) -> Checkpoint:
    directory = Path(directory)
    manifest = read_key_values(directory / MANIFEST_FILE)

    if manifest.get("format") != FORMAT:
        raise DataError(
            f"{directory / MANIFEST_FILE}: not a '{FORMAT}' manifest"
        )

    try:
        dim = int(manifest["dim"])
        latent_dim = int(manifest["latent_dim"])
        encoder = PointEncoder(
            dim=dim,
            latent_dim=latent_dim,
            widths=[int(w) for w in manifest["encoder_widths"].split(",")],
        )
        decoder = ScoreDecoder(
            dim=dim,
            latent_dim=latent_dim,
            hidden=int(manifest["hidden"]),
            n_blocks=int(manifest["n_blocks"]),
            scale_by_sigma=manifest["scale_by_sigma"] == "1",
        )
        schedule = NoiseSchedule(
            sigmas=_floats(manifest["sigmas"]),
            weights=_floats(manifest["weights"]),
        )
        seed = int(manifest["seed"])
        iterations = int(manifest["iterations"])
    except KeyError as e:
        raise DataError(f"{directory / MANIFEST_FILE}: missing key {e}")
    except ValueError as e:
        raise DataError(f"{directory / MANIFEST_FILE}: {e}")

    tensors = read_tensors(directory / PARAMS_FILE)
    try:
        encoder.load_state_dict(_owned(tensors, "encoder."))
        decoder.network.load_state_dict(_owned(tensors, "decoder."))
    except ValueError as e:
        raise DataError(f"{directory / PARAMS_FILE}: {e}")

    sampler = None
    if manifest.get("latent_sampler", "none") != "none":
        try:
            sampler = LatentSampler(
                mean=tensors["latent_sampler.mean"],
                covariance=tensors["latent_sampler.covariance"],
                diagonal=manifest.get("latent_sampler_diagonal") == "1",
                label=manifest["latent_sampler"],
            )
        except KeyError as e:
            raise DataError(f"{directory / PARAMS_FILE}: missing tensor {e}")

    logger.info(f"loaded checkpoint from {directory}")
    return Checkpoint(
        encoder=encoder,
        decoder=decoder,
        schedule=schedule,
        latent_sampler=sampler,
        seed=seed,
        iterations=iterations,
    )


def _owned(tensors: dict[str, np.ndarray], prefix: str) -> dict:
    return {
        name[len(prefix) :]: value
        for name, value in tensors.items()
        if name.startswith(prefix)
    }
