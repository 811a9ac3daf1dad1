"""
Adam with bias correction:

    m <- b1 m + (1 - b1) g
    v <- b2 v + (1 - b2) g^2
    p <- p - lr * m_hat / (sqrt(v_hat) + eps)
"""
from dataclasses import dataclass, field

import numpy as np

from shape_gradient_fields.core import Tensor
from shape_gradient_fields.exceptions import NumericError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta_1: float = 0.9
    beta_2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, Tensor] = field(default_factory=dict)
    v: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ValueError(f"Learning rate must be >= 0, got {self.lr}")
        if not (0 <= self.beta_1 < 1 and 0 <= self.beta_2 < 1):
            raise ValueError(
                f"Betas must lie in [0, 1), got {self.beta_1}, {self.beta_2}"
            )

    @classmethod
    def for_parameters(
        cls, params: dict[str, Tensor], lr: float, **kwargs
    ) -> "AdamState":
        return cls(
            lr=lr,
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
            **kwargs,
        )

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta_1": self.beta_1,
            "beta_2": self.beta_2,
            "eps": self.eps,
            "step": self.step,
        }


def adam_step(
    state: AdamState, params: dict[str, Tensor], grads: dict[str, Tensor]
) -> None:
    """Updates `params` and the moments of `state` in place."""
    if set(grads) != set(params):
        raise ValueError(
            f"Gradient names do not match parameters: "
            f"{sorted(set(grads) ^ set(params))}"
        )

    for name, grad in grads.items():
        if grad.shape != params[name].shape:
            raise ValueError(
                f"Gradient of '{name}' has shape {grad.shape}, parameter "
                f"has {params[name].shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise NumericError(
                f"Non-finite gradient for '{name}' at Adam step "
                f"{state.step + 1}"
            )

    state.step += 1
    correction_1 = 1 - state.beta_1**state.step
    correction_2 = 1 - state.beta_2**state.step

    for name, grad in grads.items():
        m = state.m.setdefault(name, np.zeros_like(grad))
        v = state.v.setdefault(name, np.zeros_like(grad))
        m *= state.beta_1
        m += (1 - state.beta_1) * grad
        v *= state.beta_2
        v += (1 - state.beta_2) * grad**2

        m_hat = m / correction_1
        v_hat = v / correction_2
        params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
