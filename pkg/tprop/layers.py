"""
Forward mappings f_i, inverse (feedback) mappings g_i and their activations.

Every operation accepts a single vector or a features x samples batch; the
batched form applies the per-sample rule to every column.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError, ParameterError, UnsupportedOperationError
from .linalg import Rng


class Activation(str, Enum):
    IDENTITY = "identity"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    RELU = "relu"
    SIGN = "sign"
    SOFTMAX = "softmax"


class Transmit(str, Enum):
    """How a layer's activation travels to the next layer."""

    REAL = "real"
    DISCRETIZED = "discretized"
    STOCHASTIC_BINARY = "stochastic_binary"


def step(x: np.ndarray) -> np.ndarray:
    """The 0/1 sign used on discrete wires: 1 where x > 0, else 0."""
    return (np.asarray(x) > 0).astype(np.float64)


def apply_activation(act: Activation, pre: np.ndarray) -> np.ndarray:
    if act is Activation.IDENTITY:
        return pre.copy()
    if act is Activation.TANH:
        return np.tanh(pre)
    if act is Activation.SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * pre))
    if act is Activation.RELU:
        return np.maximum(pre, 0.0)
    if act is Activation.SIGN:
        return step(pre)
    if act is Activation.SOFTMAX:
        shifted = np.exp(pre - np.max(pre, axis=0, keepdims=True))
        return shifted / np.sum(shifted, axis=0, keepdims=True)
    raise ConfigurationError(f"Unknown activation {act!r}")


def activation_deriv(act: Activation, output: np.ndarray) -> np.ndarray:
    """
    Element-wise derivative expressed through the activation output.

    Raises:
        UnsupportedOperationError: for sign (use the straight-through rule)
            and softmax (not element-wise).
    """
    if act is Activation.TANH:
        return 1.0 - output * output
    if act is Activation.SIGMOID:
        return output * (1.0 - output)
    if act is Activation.RELU:
        return (output > 0).astype(np.float64)
    if act is Activation.IDENTITY:
        return np.ones_like(output)
    raise UnsupportedOperationError(f"Activation '{act.value}' has no element-wise derivative")


def _bias(bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    return bias if x.ndim == 1 else bias[:, None]


@dataclass
class ForwardLayer:
    """Feed-forward mapping h_i = s_i(W_i h_{i-1} + b_i)."""

    W: np.ndarray
    b: np.ndarray
    act: Activation = Activation.TANH
    transmit: Transmit = Transmit.REAL

    def __post_init__(self):
        """Validate shapes and the activation / transmission pairing."""
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.act = Activation(self.act)
        self.transmit = Transmit(self.transmit)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionError("ForwardLayer", self.W.shape, self.b.shape)
        if self.act is Activation.SOFTMAX and self.transmit is not Transmit.REAL:
            raise ConfigurationError("softmax output cannot be discretized or sampled", "transmit")
        if self.transmit is Transmit.STOCHASTIC_BINARY and self.act is not Activation.SIGMOID:
            raise ConfigurationError("stochastic binary units need sigmoid probabilities", "act")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def copy(self) -> "ForwardLayer":
        return ForwardLayer(self.W.copy(), self.b.copy(), self.act, self.transmit)


@dataclass
class InverseLayer:
    """Feedback mapping g_i(h_i) = s̄_i(V_i h_i + c_i), optionally reading sign(h_i)."""

    V: np.ndarray
    c: np.ndarray
    act: Activation = Activation.TANH
    sign_input: bool = False

    def __post_init__(self):
        """Validate shapes."""
        self.V = np.asarray(self.V, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.act = Activation(self.act)
        if self.V.ndim != 2 or self.c.shape != (self.V.shape[0],):
            raise DimensionError("InverseLayer", self.V.shape, self.c.shape)
        if self.act in (Activation.SOFTMAX, Activation.SIGN):
            raise ConfigurationError(f"'{self.act.value}' is not a valid inverse activation", "act")

    @property
    def in_dim(self) -> int:
        return self.V.shape[1]

    @property
    def out_dim(self) -> int:
        return self.V.shape[0]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"V": self.V, "c": self.c}

    def copy(self) -> "InverseLayer":
        return InverseLayer(self.V.copy(), self.c.copy(), self.act, self.sign_input)


def activate(layer: ForwardLayer, x: np.ndarray) -> np.ndarray:
    """Real-valued activation s(Wx + b), before any discretization or sampling."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != layer.in_dim:
        raise DimensionError("forward", layer.W.shape, x.shape)
    return apply_activation(layer.act, layer.W @ x + _bias(layer.b, x))


def transmit(layer: ForwardLayer, value: np.ndarray, rng: Optional[Rng] = None) -> np.ndarray:
    """Put an activation on the wire to the next layer."""
    if layer.transmit is Transmit.DISCRETIZED:
        return step(value)
    if layer.transmit is Transmit.STOCHASTIC_BINARY:
        if rng is None:
            raise ParameterError("Stochastic binary transmission needs an rng stream")
        return rng.bernoulli(value)
    return value


def learning_signal(layer: ForwardLayer, value: np.ndarray) -> np.ndarray:
    """
    What the next layer consumes on the learning path.

    Discrete wires still carry sign(h); stochastic layers pass their
    probabilities so no loss gradient depends on a Bernoulli draw.
    """
    if layer.transmit is Transmit.DISCRETIZED:
        return step(value)
    return value


def forward(
    layer: ForwardLayer, x: np.ndarray, rng: Optional[Rng] = None
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Apply f_i and emit its wire value.

    Returns:
        (output, prob) where prob is the sigmoid probability vector for
        stochastic binary layers and None otherwise.
    """
    value = activate(layer, x)
    if layer.transmit is Transmit.STOCHASTIC_BINARY:
        return transmit(layer, value, rng), value
    return transmit(layer, value, rng), None


def inverse_input(layer: InverseLayer, h: np.ndarray) -> np.ndarray:
    return step(h) if layer.sign_input else h


def inverse(layer: InverseLayer, x: np.ndarray) -> np.ndarray:
    """Apply g_i."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != layer.in_dim:
        raise DimensionError("inverse", layer.V.shape, x.shape)
    u = inverse_input(layer, x)
    return apply_activation(layer.act, layer.V @ u + _bias(layer.c, u))
