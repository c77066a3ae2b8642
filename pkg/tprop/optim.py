"""
Parameter update rules: plain SGD and RMSprop.

RMSprop is the plain form: no momentum and no centering.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DimensionError, ParameterError

DEFAULT_FORWARD_LR = 1e-3
DEFAULT_INVERSE_LR = 3e-4


class OptimizerKind(str, Enum):
    SGD = "sgd"
    RMSPROP = "rmsprop"


@dataclass
class OptimizerConfig:
    """Update rule and its hyper-parameters."""

    kind: OptimizerKind = OptimizerKind.RMSPROP
    lr: float = DEFAULT_FORWARD_LR
    rho: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        self.kind = OptimizerKind(self.kind)
        if self.lr <= 0:
            raise ParameterError(f"Learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.rho < 1.0:
            raise ParameterError(f"rho must lie in [0, 1), got {self.rho}")
        if self.eps <= 0:
            raise ParameterError(f"eps must be positive, got {self.eps}")

    def with_lr(self, lr: float) -> "OptimizerConfig":
        return OptimizerConfig(self.kind, lr, self.rho, self.eps)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "lr": self.lr, "rho": self.rho, "eps": self.eps}

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerConfig":
        return cls(**data)


@dataclass
class OptimizerState:
    """Squared-gradient running averages keyed by parameter name (rmsprop only)."""

    accumulators: Dict[str, np.ndarray] = field(default_factory=dict)


def step(
    cfg: OptimizerConfig, state: OptimizerState, key: str, param: np.ndarray, grad: np.ndarray
) -> Tuple[np.ndarray, OptimizerState]:
    """
    Apply one update to ``param`` in place.

    In-place updates keep views of the parameter (a tied decoder's W.T)
    pointing at live storage.

    Returns:
        (param, state)
    """
    if param.shape != grad.shape:
        raise DimensionError(f"optimizer step '{key}'", param.shape, grad.shape)
    if cfg.kind is OptimizerKind.SGD:
        param -= cfg.lr * grad
        return param, state

    acc = state.accumulators.get(key)
    if acc is None:
        acc = np.zeros_like(param)
        state.accumulators[key] = acc
    elif acc.shape != param.shape:
        raise DimensionError(f"optimizer state '{key}'", acc.shape, param.shape)
    acc *= cfg.rho
    acc += (1.0 - cfg.rho) * grad * grad
    param -= cfg.lr * grad / (np.sqrt(acc) + cfg.eps)
    return param, state


class Optimizer:
    """
    One update rule over a named set of parameters.

    Layer-specific learning rates are looked up by the prefix before the first
    dot of a parameter key, e.g. ``"f3"`` for ``"f3.W"``.
    """

    def __init__(self, config: OptimizerConfig, layer_lr: Optional[Dict[str, float]] = None):
        self.config = config
        self.layer_lr = dict(layer_lr or {})
        for name, lr in self.layer_lr.items():
            if lr <= 0:
                raise ParameterError(f"Learning rate for '{name}' must be positive, got {lr}")
        self.state = OptimizerState()
        self._configs: Dict[str, OptimizerConfig] = {}

    def config_for(self, key: str) -> OptimizerConfig:
        group = key.split(".", 1)[0]
        if group not in self._configs:
            lr = self.layer_lr.get(group)
            self._configs[group] = self.config if lr is None else self.config.with_lr(lr)
        return self._configs[group]

    def update(self, key: str, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        param, self.state = step(self.config_for(key), self.state, key, param, grad)
        return param

    def update_all(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Update every parameter that has a gradient, in sorted key order."""
        for key in sorted(grads):
            self.update(key, params[key], grads[key])
