"""
Layers of the fixed decoder/encoder family with hand-written backward
passes. Every forward returns its output plus a cache; the matching
backward consumes that cache, so no layer keeps per-call state and
eval-mode forwards are safe to run concurrently.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from shape_gradient_fields.core import Tensor

MIN_TRAIN_BATCH = 2


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(x: Tensor, grad: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    return grad * (x > 0)


def _prefixed(prefix: str, tensors: dict[str, Tensor]) -> dict[str, Tensor]:
    return {f"{prefix}.{name}": value for name, value in tensors.items()}


class Layer(ABC):
    """
    All layers should inherit from this interface, in this way every
    layer exposes its parameters and buffers under stable names.
    """

    @abstractmethod
    def parameters(self) -> dict[str, Tensor]:
        """Trainable arrays, returned by reference"""

    def buffers(self) -> dict[str, Tensor]:
        """Non-trainable state (e.g. running statistics)"""
        return {}


class LinearLayer(Layer):
    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: Optional[np.random.Generator] = None,
        zero_init: bool = False,
    ) -> None:
        self.in_features = in_features
        self.out_features = out_features

        if zero_init:
            self.weight = np.zeros((out_features, in_features))
            self.bias = np.zeros(out_features)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            bound = 1.0 / np.sqrt(in_features)
            self.weight = rng.uniform(
                -bound, bound, size=(out_features, in_features)
            )
            self.bias = rng.uniform(-bound, bound, size=out_features)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}({self.in_features} -> "
            f"{self.out_features})"
        )

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x: Tensor, name: str = "linear") -> tuple[Tensor, Any]:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"Layer '{name}' expects input width {self.in_features}, "
                f"got shape {x.shape}"
            )
        return x @ self.weight.T + self.bias, x

    def backward(
        self, cache: Tensor, grad: Tensor
    ) -> tuple[Tensor, dict[str, Tensor]]:
        x = cache
        grads = {"weight": grad.T @ x, "bias": grad.sum(axis=0)}
        return grad @ self.weight, grads


@dataclass
class _CbnCache:
    x_hat: Tensor
    inv_std: Tensor
    gamma: Tensor
    gamma_cache: Any
    beta_cache: Any
    train_mode: bool


class CondBatchNorm(Layer):
    """
    Conditional batch normalization:
    out = gamma(c) * (x - mu) / sqrt(var + eps) + beta(c),
    with gamma and beta affine maps of the conditioning vector c.
    """

    def __init__(
        self,
        features: int,
        cond_features: int,
        momentum: float = 0.1,
        eps: float = 1e-5,
    ) -> None:
        self.features = features
        self.momentum = momentum
        self.eps = eps

        # gamma starts at 1 and beta at 0 for every conditioning vector
        self.gamma_map = LinearLayer(cond_features, features, zero_init=True)
        self.gamma_map.bias[:] = 1.0
        self.beta_map = LinearLayer(cond_features, features, zero_init=True)

        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.features})"

    def parameters(self) -> dict[str, Tensor]:
        return {
            **_prefixed("gamma_map", self.gamma_map.parameters()),
            **_prefixed("beta_map", self.beta_map.parameters()),
        }

    def buffers(self) -> dict[str, Tensor]:
        return {
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def forward(
        self, x: Tensor, cond: Tensor, train_mode: bool, name: str = "cbn"
    ) -> tuple[Tensor, _CbnCache]:
        if x.ndim != 2 or x.shape[1] != self.features:
            raise ValueError(
                f"Layer '{name}' expects {self.features} features, got "
                f"shape {x.shape}"
            )

        gamma, gamma_cache = self.gamma_map.forward(cond, f"{name}.gamma_map")
        beta, beta_cache = self.beta_map.forward(cond, f"{name}.beta_map")

        if train_mode:
            batch = x.shape[0]
            if batch < MIN_TRAIN_BATCH:
                raise ValueError(
                    f"Layer '{name}' needs at least {MIN_TRAIN_BATCH} rows "
                    f"in train mode, got {batch}"
                )
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean *= 1 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1 - self.momentum
            self.running_var += self.momentum * var * batch / (batch - 1)
        else:
            mean = self.running_mean
            var = self.running_var

        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        cache = _CbnCache(
            x_hat=x_hat,
            inv_std=inv_std,
            gamma=gamma,
            gamma_cache=gamma_cache,
            beta_cache=beta_cache,
            train_mode=train_mode,
        )
        return gamma * x_hat + beta, cache

    def backward(
        self, cache: _CbnCache, grad: Tensor
    ) -> tuple[Tensor, Tensor, dict[str, Tensor]]:
        grad_x_hat = grad * cache.gamma

        if cache.train_mode:
            batch = grad.shape[0]
            grad_x = (cache.inv_std / batch) * (
                batch * grad_x_hat
                - grad_x_hat.sum(axis=0)
                - cache.x_hat * (grad_x_hat * cache.x_hat).sum(axis=0)
            )
        else:
            grad_x = grad_x_hat * cache.inv_std

        grad_cond_gamma, gamma_grads = self.gamma_map.backward(
            cache.gamma_cache, grad * cache.x_hat
        )
        grad_cond_beta, beta_grads = self.beta_map.backward(
            cache.beta_cache, grad
        )
        grads = {
            **_prefixed("gamma_map", gamma_grads),
            **_prefixed("beta_map", beta_grads),
        }
        return grad_x, grad_cond_gamma + grad_cond_beta, grads


@dataclass
class _ResBlockCache:
    bn_0: _CbnCache
    act_0: Tensor
    fc_0: Tensor
    bn_1: _CbnCache
    act_1: Tensor
    fc_1: Tensor


class ResBlock(Layer):
    """
    Pre-activation residual block: two (CBN, ReLU, linear) stages whose
    output is added to the block input.
    """

    def __init__(
        self,
        width: int,
        cond_features: int,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        self.width = width
        self.bn_0 = CondBatchNorm(width, cond_features)
        self.fc_0 = LinearLayer(width, width, rng=rng)
        self.bn_1 = CondBatchNorm(width, cond_features)
        # the block starts as the identity map
        self.fc_1 = LinearLayer(width, width, zero_init=True)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.width})"

    def _stages(self) -> dict[str, Layer]:
        return {
            "bn_0": self.bn_0,
            "fc_0": self.fc_0,
            "bn_1": self.bn_1,
            "fc_1": self.fc_1,
        }

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for name, stage in self._stages().items():
            params.update(_prefixed(name, stage.parameters()))
        return params

    def buffers(self) -> dict[str, Tensor]:
        buffers = {}
        for name, stage in self._stages().items():
            buffers.update(_prefixed(name, stage.buffers()))
        return buffers

    def forward(
        self, x: Tensor, cond: Tensor, train_mode: bool, name: str = "block"
    ) -> tuple[Tensor, _ResBlockCache]:
        h, bn_0 = self.bn_0.forward(x, cond, train_mode, f"{name}.bn_0")
        act_0 = h
        h, fc_0 = self.fc_0.forward(relu(h), f"{name}.fc_0")
        h, bn_1 = self.bn_1.forward(h, cond, train_mode, f"{name}.bn_1")
        act_1 = h
        h, fc_1 = self.fc_1.forward(relu(h), f"{name}.fc_1")
        cache = _ResBlockCache(
            bn_0=bn_0,
            act_0=act_0,
            fc_0=fc_0,
            bn_1=bn_1,
            act_1=act_1,
            fc_1=fc_1,
        )
        return x + h, cache

    def backward(
        self, cache: _ResBlockCache, grad: Tensor
    ) -> tuple[Tensor, Tensor, dict[str, Tensor]]:
        grads = {}

        g, fc_1 = self.fc_1.backward(cache.fc_1, grad)
        g = relu_backward(cache.act_1, g)
        g, grad_cond, bn_1 = self.bn_1.backward(cache.bn_1, g)
        g, fc_0 = self.fc_0.backward(cache.fc_0, g)
        g = relu_backward(cache.act_0, g)
        g, grad_cond_0, bn_0 = self.bn_0.backward(cache.bn_0, g)

        for name, stage_grads in (
            ("bn_0", bn_0),
            ("fc_0", fc_0),
            ("bn_1", bn_1),
            ("fc_1", fc_1),
        ):
            grads.update(_prefixed(name, stage_grads))

        return grad + g, grad_cond + grad_cond_0, grads
