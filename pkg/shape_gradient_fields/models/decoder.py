from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike

from shape_gradient_fields.core import ScoreField, Tensor
from shape_gradient_fields.nnet import Gradients, ScoreNetwork, Tape


@dataclass
class DecoderTape:
    network_tape: Tape
    sigmas: Tensor


class ScoreDecoder(ScoreField):
    """
    Conditional score decoder g(x, z, sigma). The network reads the
    concatenation [x, z, sigma] (also used as the CBN conditioning
    vector) and, with `scale_by_sigma`, its raw output is divided by
    sigma so the head works at unit scale for every noise level.
    """

    def __init__(
        self,
        dim: int,
        latent_dim: int = 32,
        hidden: int = 64,
        n_blocks: int = 4,
        seed: int = 0,
        scale_by_sigma: bool = True,
        zero_output: bool = False,
    ) -> None:
        self.dimension = dim
        self.latent_dim = latent_dim
        self.scale_by_sigma = scale_by_sigma
        self.network = ScoreNetwork(
            in_features=dim + latent_dim + 1,
            out_features=dim,
            hidden=hidden,
            n_blocks=n_blocks,
            seed=seed,
            zero_output=zero_output,
        )

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(dim={self.dim}, "
            f"latent={self.latent_dim}, network={self.network!r})"
        )

    @property
    def dim(self) -> int:
        return self.dimension

    @property
    def in_features(self) -> int:
        return self.network.in_features

    def network_inputs(
        self,
        x: Tensor,
        latents: Optional[Tensor],
        sigmas: Union[float, Tensor],
    ) -> tuple[Tensor, Tensor]:
        n = x.shape[0]
        sigmas = np.broadcast_to(
            np.asarray(sigmas, dtype=np.float64), (n,)
        ).copy()
        if np.any(sigmas <= 0):
            raise ValueError("Noise levels fed to the decoder must be > 0")

        if self.latent_dim == 0:
            latents = np.zeros((n, 0))
        elif latents is None:
            raise ValueError(
                f"Decoder is conditioned on a {self.latent_dim}-dim latent "
                f"code, none was given"
            )
        else:
            latents = np.asarray(latents, dtype=np.float64)
            if latents.ndim == 1:
                latents = np.broadcast_to(latents, (n, latents.shape[0]))
            if latents.shape != (n, self.latent_dim):
                raise ValueError(
                    f"Latent codes must have shape ({n}, {self.latent_dim}), "
                    f"got {latents.shape}"
                )

        return np.hstack([x, latents, sigmas[:, None]]), sigmas

    def forward(
        self,
        x: Tensor,
        latents: Optional[Tensor],
        sigmas: Union[float, Tensor],
        train_mode: bool = False,
    ) -> tuple[Tensor, DecoderTape]:
        inputs, sigmas = self.network_inputs(x, latents, sigmas)
        output, tape = self.network.forward(inputs, inputs, train_mode)
        if self.scale_by_sigma:
            output = output / sigmas[:, None]
        return output, DecoderTape(network_tape=tape, sigmas=sigmas)

    def backward(self, tape: DecoderTape, grad: Tensor) -> Gradients:
        """Gradients of the parameters and of the full [x, z, sigma] input."""
        if self.scale_by_sigma:
            grad = grad / tape.sigmas[:, None]
        grads = self.network.backward(tape.network_tape, grad)
        return Gradients(params=grads.params, input=grads.total_input())

    def score(
        self, x: ArrayLike, sigma: float, latent: Optional[Tensor] = None
    ) -> Tensor:
        queries = np.asarray(x, dtype=np.float64)
        single = queries.ndim == 1
        queries = queries.reshape(-1, self.dim)
        output, _ = self.forward(queries, latent, sigma, train_mode=False)
        return output[0] if single else output


class LatentField(ScoreField):
    """A decoder bound to one latent code."""

    def __init__(self, decoder: ScoreDecoder, latent: Tensor) -> None:
        self.decoder = decoder
        self.latent = np.asarray(latent, dtype=np.float64).reshape(-1)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.decoder!r})"

    @property
    def dim(self) -> int:
        return self.decoder.dim

    def score(
        self, x: ArrayLike, sigma: float, latent: Optional[Tensor] = None
    ) -> Tensor:
        return self.decoder.score(
            x, sigma, self.latent if latent is None else latent
        )
