from typing import Optional, Sequence

import numpy as np

from shape_gradient_fields.core import PointCloud, Tensor
from shape_gradient_fields.nnet import Gradients, Network, Tape
from shape_gradient_fields.nnet.layers import (
    LinearLayer,
    relu,
    relu_backward,
)


class PointEncoder(Network):
    """
    Shared pointwise MLP, coordinatewise max-pool over the points and a
    linear head to the latent code. One forward call encodes one cloud
    given as an (m, D) array and returns a (1, latent_dim) row.
    """

    def __init__(
        self,
        dim: int,
        latent_dim: int = 32,
        widths: Sequence[int] = (64, 128),
        seed: int = 0,
    ) -> None:
        if not widths:
            raise ValueError("Encoder needs at least one pointwise layer")

        self.dim = dim
        self.latent_dim = latent_dim
        self.widths = tuple(widths)

        rng = np.random.default_rng(seed)
        sizes = (dim, *self.widths)
        self.point_layers = [
            LinearLayer(n_in, n_out, rng=rng)
            for n_in, n_out in zip(sizes, sizes[1:])
        ]
        self.head = LinearLayer(self.widths[-1], latent_dim, rng=rng)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(dim={self.dim}, "
            f"widths={self.widths}, latent={self.latent_dim})"
        )

    def _named_layers(self) -> dict[str, LinearLayer]:
        layers = {
            f"point_layers.{idx}": layer
            for idx, layer in enumerate(self.point_layers)
        }
        layers["head"] = self.head
        return layers

    def parameters(self) -> dict[str, Tensor]:
        return {
            f"{prefix}.{name}": value
            for prefix, layer in self._named_layers().items()
            for name, value in layer.parameters().items()
        }

    def forward(
        self,
        input: Tensor,
        cond: Optional[Tensor] = None,
        train_mode: bool = False,
    ) -> tuple[Tensor, Tape]:
        if input.ndim != 2 or input.shape[0] == 0:
            raise ValueError(
                f"Encoder expects a non-empty (m, {self.dim}) array, got "
                f"shape {input.shape}"
            )
        caches = {"linear": [], "pre_act": []}

        h = input
        for idx, layer in enumerate(self.point_layers):
            pre_act, cache = layer.forward(h, f"point_layers.{idx}")
            caches["linear"].append(cache)
            caches["pre_act"].append(pre_act)
            h = relu(pre_act)

        caches["argmax"] = np.argmax(h, axis=0)
        caches["n_points"] = h.shape[0]
        pooled = h.max(axis=0, keepdims=True)
        latent, caches["head"] = self.head.forward(pooled, "head")

        tape = Tape(
            network=self,
            caches=caches,
            output_shape=latent.shape,
            train_mode=train_mode,
        )
        return latent, tape

    def backward(self, tape: Tape, grad: Tensor) -> Gradients:
        self._check_tape(tape, grad)
        caches = tape.caches
        params = {}

        g_pooled, grads = self.head.backward(caches["head"], grad)
        params.update({f"head.{name}": v for name, v in grads.items()})

        # max-pool routes each feature gradient to its winning point
        g = np.zeros((caches["n_points"], g_pooled.shape[1]))
        g[caches["argmax"], np.arange(g_pooled.shape[1])] = g_pooled[0]

        for idx in reversed(range(len(self.point_layers))):
            g = relu_backward(caches["pre_act"][idx], g)
            g, grads = self.point_layers[idx].backward(
                caches["linear"][idx], g
            )
            params.update(
                {f"point_layers.{idx}.{name}": v for name, v in grads.items()}
            )

        return Gradients(params=params, input=g)


def encode(encoder: PointEncoder, cloud: PointCloud) -> Tensor:
    if cloud.dim != encoder.dim:
        raise ValueError(
            f"Encoder takes {encoder.dim}D clouds, got a {cloud.dim}D cloud"
        )
    latent, _ = encoder.forward(cloud.points)
    return latent[0]
