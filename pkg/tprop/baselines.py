"""
Gradient baselines: exact back-propagation, the straight-through estimator
and back-propagation with the lower layers frozen.

The network output is the real-valued activation of the top layer; a layer's
transmission mode only affects what the layer above receives.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, ParameterError, UnsupportedOperationError
from .layers import Activation, ForwardLayer, Transmit, activate, activation_deriv, transmit
from .linalg import Rng
from .tpengine import GlobalLoss, batch_size, dense_param_grads, global_loss, output_delta

logger = logging.getLogger(__name__)


@dataclass
class BackpropGrads:
    """Per-layer (gradW, gradb) for f_1..f_M."""

    weights: List[np.ndarray] = field(default_factory=list)
    biases: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise DimensionError("BackpropGrads", (len(self.weights),), (len(self.biases),))

    def __len__(self) -> int:
        return len(self.weights)

    def layer(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """(gradW_i, gradb_i) for 1 <= i <= M."""
        return self.weights[i - 1], self.biases[i - 1]

    def as_dict(self) -> Dict[str, np.ndarray]:
        grads = {}
        for i, (gw, gb) in enumerate(zip(self.weights, self.biases), start=1):
            grads[f"f{i}.W"] = gw
            grads[f"f{i}.b"] = gb
        return grads


def _layers(network) -> Sequence[ForwardLayer]:
    return network.forward if hasattr(network, "forward") else network


def _backprop(
    network,
    x: np.ndarray,
    y: np.ndarray,
    kind: GlobalLoss,
    straight_through: bool = False,
    freeze_below: int = 1,
    rng: Optional[Rng] = None,
) -> Tuple[float, BackpropGrads]:
    layers = _layers(network)
    depth = len(layers)
    if depth == 0:
        raise ParameterError("Network has no layers")

    # Forward: keep each layer's real activation and the value it put on the wire.
    wires = [np.asarray(x, dtype=np.float64)]
    values = []
    for i, layer in enumerate(layers, start=1):
        value = activate(layer, wires[-1])
        values.append(value)
        if i < depth:
            stream = rng.split(f"sample{i}") if rng is not None else None
            wires.append(transmit(layer, value, stream))

    top = layers[-1]
    output = values[-1]
    loss = global_loss(kind, output, y)

    weights = [np.zeros_like(layer.W) for layer in layers]
    biases = [np.zeros_like(layer.b) for layer in layers]
    if freeze_below > depth:
        return loss, BackpropGrads(weights, biases)

    grad_pre = output_delta(top, output, y, kind) / batch_size(output)
    for i in range(depth, freeze_below - 1, -1):
        layer = layers[i - 1]
        weights[i - 1], biases[i - 1] = dense_param_grads(grad_pre, wires[i - 1])
        if i == freeze_below or i == 1:
            break
        below = layers[i - 2]
        grad_value = layer.W.T @ grad_pre
        if below.transmit is not Transmit.REAL and not straight_through:
            raise UnsupportedOperationError(
                f"Layer {i - 1} transmits '{below.transmit.value}'; use the straight-through estimator"
            )
        if below.act is Activation.SIGN:
            if not straight_through:
                raise UnsupportedOperationError(f"Layer {i - 1} uses a sign activation")
            grad_pre = grad_value
        else:
            grad_pre = grad_value * activation_deriv(below.act, values[i - 2])
    return loss, BackpropGrads(weights, biases)


def backprop(network, x: np.ndarray, y: np.ndarray, kind: GlobalLoss) -> Tuple[float, BackpropGrads]:
    """
    Exact chain-rule gradients of the global loss, averaged over the batch.

    Raises:
        UnsupportedOperationError: if the chain rule has to cross a
            discretized or sampled transmission, or a sign activation.
    """
    return _backprop(network, x, y, kind)


def straight_through_backprop(
    network, x: np.ndarray, y: np.ndarray, kind: GlobalLoss, rng: Optional[Rng] = None
) -> Tuple[float, BackpropGrads]:
    """
    Back-propagation where every sign or sampling step has an identity Jacobian.

    The forward pass emits the real wire values (sign(h) or Bernoulli
    samples) and each layer's weight gradient uses what it actually
    received. For a stochastic layer the backward signal reaches the
    probabilities, giving dh^p_{i-1} = W_i^T (s'(W_i h_{i-1}) * dh^p_i).
    """
    return _backprop(network, x, y, kind, straight_through=True, rng=rng)


def frozen_lower_backprop(
    network,
    freeze_below: int,
    x: np.ndarray,
    y: np.ndarray,
    kind: GlobalLoss,
    rng: Optional[Rng] = None,
) -> Tuple[float, BackpropGrads]:
    """
    Back-propagation into layers ``freeze_below``..M only.

    Layers below the index (weights and biases) get zero gradients and the
    backward pass never crosses into them, so a discrete wire under the
    frozen part needs no estimator. ``freeze_below = M + 1`` freezes
    everything and returns the loss with all-zero gradients.
    """
    depth = len(_layers(network))
    if not 1 <= freeze_below <= depth + 1:
        raise ParameterError(f"freeze_below must lie in [1, {depth + 1}], got {freeze_below}")
    logger.debug("Frozen backprop: layers below %d receive no update", freeze_below)
    return _backprop(network, x, y, kind, freeze_below=freeze_below, rng=rng)
