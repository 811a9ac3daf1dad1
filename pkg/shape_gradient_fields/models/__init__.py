from .autoencoder import interpolate_latents, reconstruct
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .decoder import LatentField, ScoreDecoder
from .encoder import PointEncoder, encode
from .latent_sampler import LatentSampler, fit_latent_sampler, sample_latent
from .trainer import (
    ScoreTrainer,
    TrainConfig,
    autoencoding_loss,
    dsm_loss,
    train,
)
