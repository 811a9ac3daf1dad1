from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import mlflow
import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from shape_gradient_fields.config.env_config import DISABLE_PROGRESS
from shape_gradient_fields.core import (
    NoiseSchedule,
    PointCloud,
    Tensor,
    default_schedule,
)
from shape_gradient_fields.data_io.pipeline import Dataset
from shape_gradient_fields.exceptions import NumericError
from shape_gradient_fields.models.decoder import ScoreDecoder
from shape_gradient_fields.models.encoder import PointEncoder
from shape_gradient_fields.nnet import AdamState, adam_step
from shape_gradient_fields.tracking import mlflow_run_start_handle

# normalized training data may overshoot the unit cube by round-off
CUBE_TOLERANCE = 1e-9


@dataclass
class TrainConfig:
    schedule: NoiseSchedule = field(
        default_factory=lambda: default_schedule(10)
    )
    batch_shapes: int = 64
    epochs: int = 2000
    encoder_lr: float = 1e-3
    decoder_lr: float = 1e-3
    decay_start: int = 1000
    encoder_lr_floor: float = 1e-4
    decoder_lr_floor: float = 1e-4
    points_per_shape: Optional[int] = None
    seed: int = 0
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.batch_shapes < 1 or self.epochs < 0:
            raise ValueError(
                f"Need batch_shapes >= 1 and epochs >= 0, got "
                f"{self.batch_shapes}, {self.epochs}"
            )
        rates = (
            self.encoder_lr,
            self.decoder_lr,
            self.encoder_lr_floor,
            self.decoder_lr_floor,
        )
        if any(rate < 0 for rate in rates):
            raise ValueError(f"Learning rates must be >= 0, got {rates}")
        if self.points_per_shape is not None and self.points_per_shape < 1:
            raise ValueError(
                f"points_per_shape must be positive, got "
                f"{self.points_per_shape}"
            )

    def to_dict(self) -> dict:
        params = dict(self.__dict__)
        schedule = params.pop("schedule")
        params.update(schedule.to_dict())
        return params

    def learning_rates(self, epoch: int) -> tuple[float, float]:
        """
        Constant rates until `decay_start`, then linear decay reaching
        the floors at the last epoch.
        """
        return (
            self._decayed(self.encoder_lr, self.encoder_lr_floor, epoch),
            self._decayed(self.decoder_lr, self.decoder_lr_floor, epoch),
        )

    def _decayed(self, start: float, floor: float, epoch: int) -> float:
        floor = min(floor, start)
        if epoch < self.decay_start or self.epochs <= self.decay_start:
            return start
        progress = min(
            1.0, (epoch - self.decay_start) / (self.epochs - self.decay_start)
        )
        return start + (floor - start) * progress


@dataclass
class PerturbedBatch:
    """
    Noisy copies of every (shape, level) pair stacked row-wise, with
    the denoising target (x - x_noisy) / sigma^2 of each row.
    """

    noisy: Tensor
    target: Tensor
    sigmas: Tensor
    level: np.ndarray
    shape_index: np.ndarray
    row_weights: Tensor

    def __len__(self) -> int:
        return self.noisy.shape[0]


def perturb(
    clouds: Sequence[Tensor],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    points_per_shape: Optional[int] = None,
) -> PerturbedBatch:
    noisy, target, sigmas = [], [], []
    level, shape_index, row_weights = [], [], []

    for s, points in enumerate(clouds):
        if points_per_shape is not None and points_per_shape < len(points):
            keep = rng.choice(
                len(points), size=points_per_shape, replace=False
            )
            points = points[np.sort(keep)]
        m = len(points)

        for i, (sigma, weight) in enumerate(
            zip(schedule.sigmas, schedule.weights)
        ):
            x_noisy = points + sigma * rng.standard_normal(points.shape)
            noisy.append(x_noisy)
            target.append((points - x_noisy) / sigma**2)
            sigmas.append(np.full(m, sigma))
            level.append(np.full(m, i))
            shape_index.append(np.full(m, s))
            row_weights.append(np.full(m, weight / (m * len(clouds))))

    return PerturbedBatch(
        noisy=np.vstack(noisy),
        target=np.vstack(target),
        sigmas=np.concatenate(sigmas),
        level=np.concatenate(level),
        shape_index=np.concatenate(shape_index),
        row_weights=np.concatenate(row_weights),
    )


def weighted_dsm_objective(
    pred: Tensor, batch: PerturbedBatch, schedule: NoiseSchedule
) -> tuple[float, Tensor, Tensor]:
    """
    Sum over levels of lambda_i times the per-level mean squared
    residual, averaged over shapes. Returns the loss, its gradient with
    respect to `pred` and the unweighted per-level losses.
    """
    residual = pred - batch.target
    squared = np.einsum("ij,ij->i", residual, residual)

    loss = float(np.dot(batch.row_weights, squared))
    d_pred = 2 * batch.row_weights[:, None] * residual

    level_weights = np.asarray(schedule.weights)[batch.level]
    level_losses = np.bincount(
        batch.level,
        weights=batch.row_weights / level_weights * squared,
        minlength=len(schedule),
    )
    return loss, d_pred, level_losses


@dataclass
class DsmGradients:
    decoder: dict[str, Tensor]
    latent: Tensor


def dsm_loss(
    decoder: ScoreDecoder,
    latent: Optional[Tensor],
    cloud: PointCloud,
    schedule: NoiseSchedule,
    seed: int,
    train_mode: bool = True,
) -> tuple[float, DsmGradients]:
    rng = np.random.default_rng(seed)
    batch = perturb([cloud.points], schedule, rng)

    pred, tape = decoder.forward(
        batch.noisy, latent, batch.sigmas, train_mode=train_mode
    )
    loss, d_pred, _ = weighted_dsm_objective(pred, batch, schedule)
    grads = decoder.backward(tape, d_pred)

    latent_grad = grads.input[
        :, decoder.dim : decoder.dim + decoder.latent_dim
    ].sum(axis=0)
    return loss, DsmGradients(decoder=grads.params, latent=latent_grad)


@dataclass
class AutoencodingStep:
    loss: float
    level_losses: Tensor
    encoder_grads: dict[str, Tensor]
    decoder_grads: dict[str, Tensor]


def autoencoding_step(
    encoder: PointEncoder,
    decoder: ScoreDecoder,
    clouds: Sequence[PointCloud],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    points_per_shape: Optional[int] = None,
) -> AutoencodingStep:
    """
    One evaluation of the auto-encoding loss and of its gradients for
    both networks. All shapes and levels share one decoder pass.
    """
    latents, encoder_tapes = [], []
    for cloud in clouds:
        latent, tape = encoder.forward(cloud.points, train_mode=True)
        latents.append(latent)
        encoder_tapes.append(tape)

    batch = perturb(
        [cloud.points for cloud in clouds], schedule, rng, points_per_shape
    )
    row_latents = np.vstack(latents)[batch.shape_index]

    pred, decoder_tape = decoder.forward(
        batch.noisy, row_latents, batch.sigmas, train_mode=True
    )
    loss, d_pred, level_losses = weighted_dsm_objective(pred, batch, schedule)
    decoder_grads = decoder.backward(decoder_tape, d_pred)

    latent_rows = decoder_grads.input[
        :, decoder.dim : decoder.dim + decoder.latent_dim
    ]
    encoder_grads = {
        name: np.zeros_like(value)
        for name, value in encoder.parameters().items()
    }
    for s, tape in enumerate(encoder_tapes):
        d_latent = latent_rows[batch.shape_index == s].sum(
            axis=0, keepdims=True
        )
        grads = encoder.backward(tape, d_latent)
        for name, value in grads.params.items():
            encoder_grads[name] += value

    return AutoencodingStep(
        loss=loss,
        level_losses=level_losses,
        encoder_grads=encoder_grads,
        decoder_grads=decoder_grads.params,
    )


def autoencoding_loss(
    encoder: PointEncoder,
    decoder: ScoreDecoder,
    cloud: PointCloud,
    schedule: NoiseSchedule,
    seed: int,
) -> AutoencodingStep:
    return autoencoding_step(
        encoder, decoder, [cloud], schedule, np.random.default_rng(seed)
    )


class ScoreTrainer:
    def __init__(
        self,
        encoder: PointEncoder,
        decoder: ScoreDecoder,
        dataset: Union[Dataset, Sequence[PointCloud]],
        config: TrainConfig = TrainConfig(),
    ) -> None:
        if not isinstance(dataset, Dataset):
            dataset = Dataset(train=list(dataset), test=[], seed=config.seed)
        if not dataset.train:
            raise ValueError("Training needs at least one shape")
        if encoder.latent_dim != decoder.latent_dim:
            raise ValueError(
                f"Encoder emits {encoder.latent_dim}-dim codes, decoder "
                f"expects {decoder.latent_dim}"
            )
        for idx, cloud in enumerate(dataset.train):
            if cloud.dim != decoder.dim or cloud.dim != encoder.dim:
                raise ValueError(
                    f"Shape {idx} is {cloud.dim}D, networks expect "
                    f"{decoder.dim}D"
                )
            if np.abs(cloud.points).max() > 1 + CUBE_TOLERANCE:
                raise ValueError(
                    f"Shape {idx} is not normalized to the unit cube"
                )

        self.encoder = encoder
        self.decoder = decoder
        self.data = dataset
        self.dataset = dataset.train
        self.config = config

        self.encoder_state = AdamState.for_parameters(
            encoder.parameters(), lr=config.encoder_lr
        )
        self.decoder_state = AdamState.for_parameters(
            decoder.network.parameters(), lr=config.decoder_lr
        )
        self.iteration = 0
        self.training_results = []

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(shapes={len(self.dataset)}, "
            f"epochs={self.config.epochs}, levels={len(self.config.schedule)})"
        )

    def _one_batch(self, clouds: list[PointCloud]) -> AutoencodingStep:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.config.seed, self.iteration])
        )
        step = autoencoding_step(
            encoder=self.encoder,
            decoder=self.decoder,
            clouds=clouds,
            schedule=self.config.schedule,
            rng=rng,
            points_per_shape=self.config.points_per_shape,
        )

        if not np.isfinite(step.loss):
            bad = np.flatnonzero(~np.isfinite(step.level_losses))
            level = int(bad[0]) if bad.size else -1
            sigma = self.config.schedule.sigmas[level] if bad.size else None
            raise NumericError(
                f"Non-finite loss at iteration {self.iteration}, sigma "
                f"level {level} (sigma={sigma})"
            )

        adam_step(
            self.encoder_state, self.encoder.parameters(), step.encoder_grads
        )
        adam_step(
            self.decoder_state,
            self.decoder.network.parameters(),
            step.decoder_grads,
        )
        self.iteration += 1
        return step

    @mlflow_run_start_handle
    def fit(self, mlflow_run_name: Optional[str] = None) -> list[float]:
        to_mlflow = bool(mlflow_run_name)

        if to_mlflow:
            mlflow.log_params(self.config.to_dict())

        logger.info(
            f"training on {len(self.dataset)} shapes for "
            f"{self.config.epochs} epochs"
        )
        for epoch in tqdm(
            range(self.config.epochs), desc="Epoch", disable=DISABLE_PROGRESS
        ):
            encoder_lr, decoder_lr = self.config.learning_rates(epoch)
            self.encoder_state.lr = encoder_lr
            self.decoder_state.lr = decoder_lr

            batches = self.data.batches(self.config.batch_shapes, epoch)
            steps = [self._one_batch(batch) for batch in batches]
            loss = float(np.mean([step.loss for step in steps]))
            self._record(epoch, loss, encoder_lr, decoder_lr, to_mlflow)

        return self.get_loss_history()

    def _record(
        self,
        epoch: int,
        loss: float,
        encoder_lr: float,
        decoder_lr: float,
        to_mlflow: bool,
    ) -> None:
        self.training_results.append(
            {
                "epoch": epoch,
                "loss": loss,
                "encoder_lr": encoder_lr,
                "decoder_lr": decoder_lr,
            }
        )
        if to_mlflow:
            mlflow.log_metric("loss", loss, step=epoch)

        last = epoch == self.config.epochs - 1
        if last or (epoch + 1) % self.config.log_every == 0:
            logger.info(f"epoch {epoch + 1}: loss {loss:.6g}")

    def get_loss_history(self) -> list[float]:
        return [row["loss"] for row in self.training_results]

    def get_results(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.training_results,
            columns=["epoch", "loss", "encoder_lr", "decoder_lr"],
        )


def train(
    encoder: PointEncoder,
    decoder: ScoreDecoder,
    dataset: Union[Dataset, Sequence[PointCloud]],
    config: TrainConfig,
    mlflow_run_name: Optional[str] = None,
) -> pd.DataFrame:
    """Trains both networks in place and returns the per-epoch history."""
    trainer = ScoreTrainer(encoder, decoder, dataset, config)
    trainer.fit(mlflow_run_name=mlflow_run_name)
    return trainer.get_results()
