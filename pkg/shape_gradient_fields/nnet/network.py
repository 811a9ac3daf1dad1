from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from shape_gradient_fields.core import Tensor
from shape_gradient_fields.nnet.layers import (
    CondBatchNorm,
    LinearLayer,
    ResBlock,
    relu,
    relu_backward,
)


@dataclass
class Tape:
    """Everything one forward call recorded for the matching backward."""

    network: "Network"
    caches: dict[str, Any]
    output_shape: tuple[int, ...]
    train_mode: bool


@dataclass
class Gradients:
    params: dict[str, Tensor]
    input: Tensor
    cond: Optional[Tensor] = None

    def total_input(self) -> Tensor:
        """Input gradient when the same array was also fed as `cond`."""
        if self.cond is None:
            return self.input
        return self.input + self.cond


class Network(ABC):
    """
    All networks should inherit from this interface. In this way every
    network can be trained by the same Adam loop and stored in the
    same tensor container.
    """

    @abstractmethod
    def forward(
        self,
        input: Tensor,
        cond: Optional[Tensor] = None,
        train_mode: bool = False,
    ) -> tuple[Tensor, Tape]:
        """Output plus the tape needed by backward"""

    @abstractmethod
    def backward(self, tape: Tape, grad: Tensor) -> Gradients:
        """Reverse pass of one recorded forward call"""

    @abstractmethod
    def parameters(self) -> dict[str, Tensor]:
        """Trainable arrays by name, returned by reference"""

    def buffers(self) -> dict[str, Tensor]:
        return {}

    def n_parameters(self) -> int:
        return sum(param.size for param in self.parameters().values())

    def state_dict(self) -> dict[str, Tensor]:
        tensors = {**self.parameters(), **self.buffers()}
        return {name: value.copy() for name, value in tensors.items()}

    def load_state_dict(self, state: dict[str, Tensor]) -> None:
        targets = {**self.parameters(), **self.buffers()}

        missing = sorted(set(targets) - set(state))
        unexpected = sorted(set(state) - set(targets))
        if missing or unexpected:
            raise ValueError(
                f"State does not match {self.__class__.__name__}: missing "
                f"{missing}, unexpected {unexpected}"
            )

        for name, target in targets.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise ValueError(
                    f"Tensor '{name}' has shape {value.shape}, expected "
                    f"{target.shape}"
                )
            target[...] = value

    def _check_tape(self, tape: Tape, grad: Tensor) -> None:
        if tape.network is not self:
            raise ValueError("Tape was recorded by a different network")
        if grad.shape != tape.output_shape:
            raise ValueError(
                f"Output gradient has shape {grad.shape}, tape recorded "
                f"{tape.output_shape}"
            )


class ScoreNetwork(Network):
    """
    fc_in -> n_blocks x ResBlock -> CBN -> ReLU -> fc_out, with every
    CBN conditioned on `cond`.
    """

    def __init__(
        self,
        in_features: int,
        out_features: int,
        hidden: int = 64,
        n_blocks: int = 4,
        cond_features: Optional[int] = None,
        seed: int = 0,
        zero_output: bool = False,
    ) -> None:
        self.in_features = in_features
        self.out_features = out_features
        self.hidden = hidden
        self.n_blocks = n_blocks
        self.cond_features = (
            cond_features if cond_features is not None else in_features
        )

        rng = np.random.default_rng(seed)
        self.fc_in = LinearLayer(in_features, hidden, rng=rng)
        self.blocks = [
            ResBlock(hidden, self.cond_features, rng=rng)
            for _ in range(n_blocks)
        ]
        self.bn_out = CondBatchNorm(hidden, self.cond_features)
        self.fc_out = LinearLayer(
            hidden, out_features, rng=rng, zero_init=zero_output
        )

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(in={self.in_features}, "
            f"hidden={self.hidden}, blocks={self.n_blocks}, "
            f"out={self.out_features})"
        )

    def _named_layers(self) -> dict:
        layers = {"fc_in": self.fc_in}
        for idx, block in enumerate(self.blocks):
            layers[f"blocks.{idx}"] = block
        layers["bn_out"] = self.bn_out
        layers["fc_out"] = self.fc_out
        return layers

    def parameters(self) -> dict[str, Tensor]:
        return {
            f"{prefix}.{name}": value
            for prefix, layer in self._named_layers().items()
            for name, value in layer.parameters().items()
        }

    def buffers(self) -> dict[str, Tensor]:
        return {
            f"{prefix}.{name}": value
            for prefix, layer in self._named_layers().items()
            for name, value in layer.buffers().items()
        }

    def forward(
        self,
        input: Tensor,
        cond: Optional[Tensor] = None,
        train_mode: bool = False,
    ) -> tuple[Tensor, Tape]:
        cond = input if cond is None else cond
        if cond.shape[0] != input.shape[0]:
            raise ValueError(
                f"Got {cond.shape[0]} conditioning rows for "
                f"{input.shape[0]} inputs"
            )
        caches = {}

        h, caches["fc_in"] = self.fc_in.forward(input, "fc_in")
        for idx, block in enumerate(self.blocks):
            name = f"blocks.{idx}"
            h, caches[name] = block.forward(h, cond, train_mode, name)
        h, caches["bn_out"] = self.bn_out.forward(
            h, cond, train_mode, "bn_out"
        )
        caches["act_out"] = h
        output, caches["fc_out"] = self.fc_out.forward(relu(h), "fc_out")

        tape = Tape(
            network=self,
            caches=caches,
            output_shape=output.shape,
            train_mode=train_mode,
        )
        return output, tape

    def backward(self, tape: Tape, grad: Tensor) -> Gradients:
        self._check_tape(tape, grad)
        caches = tape.caches
        params = {}

        def collect(prefix: str, grads: dict[str, Tensor]) -> None:
            params.update(
                {f"{prefix}.{name}": value for name, value in grads.items()}
            )

        g, grads = self.fc_out.backward(caches["fc_out"], grad)
        collect("fc_out", grads)
        g = relu_backward(caches["act_out"], g)
        g, grad_cond, grads = self.bn_out.backward(caches["bn_out"], g)
        collect("bn_out", grads)

        for idx in reversed(range(self.n_blocks)):
            name = f"blocks.{idx}"
            g, block_cond, grads = self.blocks[idx].backward(caches[name], g)
            grad_cond = grad_cond + block_cond
            collect(name, grads)

        g, grads = self.fc_in.backward(caches["fc_in"], g)
        collect("fc_in", grads)

        return Gradients(params=params, input=g, cond=grad_cond)


def forward(
    network: Network,
    input: Tensor,
    cond: Optional[Tensor] = None,
    train_mode: bool = False,
) -> tuple[Tensor, Tape]:
    return network.forward(input, cond, train_mode)


def backward(tape: Tape, grad: Tensor) -> Gradients:
    return tape.network.backward(tape, grad)
