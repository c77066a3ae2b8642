"""
Target computation and layer-local losses.

Targets: top-layer gradient step, vanilla target propagation through
approximate inverses, and difference target propagation. Losses: the
layer-local target loss L_i and the noise-injected inverse loss L_i^inv, each
with analytic gradients that only touch the layer's own parameters.

Batched inputs are column-stacked; losses are averaged over samples and so are
the parameter gradients, while targets stay per-sample.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError, ParameterError
from .layers import (
    Activation,
    ForwardLayer,
    InverseLayer,
    Transmit,
    activate,
    activation_deriv,
    inverse,
    inverse_input,
    step,
)
from .linalg import Rng, gaussian_noise

LOG_FLOOR = 1e-12


class GlobalLoss(str, Enum):
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


@dataclass
class NoiseSchedule:
    """sigma(e) = sigma0 / (1 + e / e0)."""

    sigma0: float = 0.0
    e0: float = 1.0

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ParameterError("sigma0 cannot be negative")
        if self.e0 <= 0:
            raise ParameterError("e0 must be positive")


@dataclass
class TargetBundle:
    """
    Activations h_0..h_M and targets ĥ_1..ĥ_{M-1} of one mini-batch step.

    ``probs`` holds the firing probabilities h_1^p..h_{M-1}^p when the hidden
    layers sample binary units, and stays None otherwise.
    """

    activations: List[np.ndarray]
    targets: List[np.ndarray] = field(default_factory=list)
    probs: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        depth = len(self.activations) - 1
        if self.targets and len(self.targets) != max(depth - 1, 0):
            raise DimensionError("TargetBundle", (len(self.activations),), (len(self.targets),))
        for i, target in enumerate(self.targets, start=1):
            if target.shape != self.activations[i].shape:
                raise DimensionError("TargetBundle", self.activations[i].shape, target.shape)
        if self.probs is not None and len(self.probs) != max(depth - 1, 0):
            raise DimensionError("TargetBundle.probs", (max(depth - 1, 0),), (len(self.probs),))

    @property
    def depth(self) -> int:
        return len(self.activations) - 1

    def target(self, i: int) -> np.ndarray:
        """ĥ_i for 1 <= i <= M-1."""
        return self.targets[i - 1]


def batch_size(x: np.ndarray) -> int:
    return 1 if np.ndim(x) == 1 else x.shape[1]


def mean_sq_norm(diff: np.ndarray) -> float:
    """Squared L2 norm per sample, averaged over the batch."""
    return float(np.sum(diff * diff) / batch_size(diff))


def dense_param_grads(grad_pre: np.ndarray, inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Weight and bias gradients of a dense layer from dL/d(pre-activation)."""
    if grad_pre.ndim == 1:
        return np.outer(grad_pre, inputs), grad_pre.copy()
    return grad_pre @ inputs.T, grad_pre.sum(axis=1)


def _check_same(operation: str, a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise DimensionError(operation, np.shape(a), np.shape(b))


# ==================== Global loss ====================

def global_loss(kind: GlobalLoss, output: np.ndarray, y: np.ndarray) -> float:
    """
    Global loss averaged over samples.

    mse: ||output - y||^2. cross_entropy: -sum y log(output), with output
    floored at 1e-12 so saturated softmax units stay finite.
    """
    kind = GlobalLoss(kind)
    _check_same("global_loss", output, y)
    if kind is GlobalLoss.MSE:
        return mean_sq_norm(output - y)
    sums = np.sum(output, axis=0)
    if np.any(np.abs(sums - 1.0) > 1e-9) or np.any(output < 0):
        raise ParameterError("cross_entropy needs a probability vector per sample")
    return float(-np.sum(y * np.log(np.maximum(output, LOG_FLOOR))) / batch_size(output))


def loss_output_grad(kind: GlobalLoss, output: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample dL/d(output)."""
    _check_same("loss_output_grad", output, y)
    if GlobalLoss(kind) is GlobalLoss.MSE:
        return 2.0 * (output - y)
    return -y / np.maximum(output, LOG_FLOOR)


def output_delta(layer: ForwardLayer, output: np.ndarray, y: np.ndarray, kind: GlobalLoss) -> np.ndarray:
    """Per-sample dL/d(pre-activation) of the output layer."""
    kind = GlobalLoss(kind)
    _check_same("output_delta", output, y)
    if kind is GlobalLoss.CROSS_ENTROPY:
        if layer.act is not Activation.SOFTMAX:
            raise ConfigurationError("cross_entropy requires a softmax output layer", "act")
        return output - y
    grad = 2.0 * (output - y)
    if layer.act is Activation.SOFTMAX:
        return output * (grad - np.sum(output * grad, axis=0, keepdims=True))
    return grad * activation_deriv(layer.act, output)


# ==================== Targets ====================

def top_target(h_top: np.ndarray, y: np.ndarray, kind: GlobalLoss, eta_hat: float) -> np.ndarray:
    """ĥ_M = h_M - eta_hat * dL/dh_M."""
    if eta_hat <= 0:
        raise ParameterError(f"eta_hat must be positive, got {eta_hat}")
    return h_top - eta_hat * loss_output_grad(kind, h_top, y)


def top_hidden_gradient(h_prev: np.ndarray, top: ForwardLayer, y: np.ndarray, kind: GlobalLoss) -> np.ndarray:
    """dL/dh_{M-1} through the output layer only."""
    output = activate(top, h_prev)
    return top.W.T @ output_delta(top, output, y, kind)


def top_hidden_target(
    h_prev: np.ndarray, top: ForwardLayer, y: np.ndarray, kind: GlobalLoss, eta_tilde: float
) -> np.ndarray:
    """
    ĥ_{M-1} = h_{M-1} - eta_tilde * dL/dh_{M-1}.

    A single chain-rule step inside the output layer; no inverse is involved.
    """
    if eta_tilde <= 0:
        raise ParameterError(f"eta_tilde must be positive, got {eta_tilde}")
    return h_prev - eta_tilde * top_hidden_gradient(h_prev, top, y, kind)


def vanilla_tp_target(g: InverseLayer, target: np.ndarray) -> np.ndarray:
    """ĥ_{i-1} = g_i(ĥ_i)."""
    return inverse(g, target)


def dtp_target(h_prev: np.ndarray, h: np.ndarray, target: np.ndarray, g: InverseLayer) -> np.ndarray:
    """ĥ_{i-1} = h_{i-1} + g_i(ĥ_i) - g_i(h_i)."""
    _check_same("dtp_target", h, target)
    if np.shape(h_prev)[0] != g.out_dim or np.ndim(h_prev) != np.ndim(h):
        raise DimensionError("dtp_target", np.shape(h_prev), g.V.shape)
    return h_prev + (inverse(g, target) - inverse(g, h))


# ==================== Local losses ====================

def local_forward_loss_grad(
    layer: ForwardLayer, inputs: np.ndarray, target: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    L_i = ||f_i(inputs) - target||^2 with the target held constant.

    Returns:
        (loss, gradW, gradb)
    """
    output = activate(layer, inputs)
    _check_same("local_forward_loss_grad", output, target)
    deriv = activation_deriv(layer.act, output)
    diff = output - target
    grad_pre = 2.0 * diff * deriv / batch_size(diff)
    grad_w, grad_b = dense_param_grads(grad_pre, inputs)
    return mean_sq_norm(diff), grad_w, grad_b


def top_layer_loss_grad(
    top: ForwardLayer, inputs: np.ndarray, y: np.ndarray, kind: GlobalLoss
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Global loss of the output layer and its gradients for W_M, b_M only."""
    output = activate(top, inputs)
    loss = global_loss(kind, output, y)
    grad_pre = output_delta(top, output, y, kind) / batch_size(output)
    grad_w, grad_b = dense_param_grads(grad_pre, inputs)
    return loss, grad_w, grad_b


def corrupt_and_encode(
    f: ForwardLayer, h_prev: np.ndarray, sigma: float, rng: Optional[Rng], prev_transmit: Transmit
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (h_prev + eps, f(h_prev + eps)) honouring a discrete wire below f."""
    if sigma > 0 and rng is None:
        raise ParameterError("A noise stream is required when sigma > 0")
    corrupted = h_prev + gaussian_noise(np.shape(h_prev), sigma, rng)
    fed = step(corrupted) if Transmit(prev_transmit) is Transmit.DISCRETIZED else corrupted
    return corrupted, activate(f, fed)


def inverse_loss_grad(
    f: ForwardLayer,
    g: InverseLayer,
    h_prev: np.ndarray,
    sigma: float,
    rng: Optional[Rng],
    prev_transmit: Transmit = Transmit.REAL,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    L_i^inv = ||g_i(f_i(h + eps)) - (h + eps)||^2, eps ~ N(0, sigma^2).

    One fresh draw of eps per call. Gradients are taken for V_i and c_i only;
    f_i's parameters are constants here.

    Returns:
        (loss, gradV, gradc)
    """
    if g.out_dim != f.in_dim or g.in_dim != f.out_dim:
        raise DimensionError("inverse_loss_grad", f.W.shape, g.V.shape)
    corrupted, encoded = corrupt_and_encode(f, h_prev, sigma, rng, prev_transmit)
    u = inverse_input(g, encoded)
    reconstruction = inverse(g, encoded)
    diff = reconstruction - corrupted
    grad_pre = 2.0 * diff * activation_deriv(g.act, reconstruction) / batch_size(diff)
    grad_v, grad_c = dense_param_grads(grad_pre, u)
    return mean_sq_norm(diff), grad_v, grad_c


def noise_sigma(schedule: NoiseSchedule, epoch: int) -> float:
    """sigma(e) = sigma0 / (1 + e / e0)."""
    if epoch < 0:
        raise ParameterError(f"epoch must be non-negative, got {epoch}")
    return schedule.sigma0 / (1.0 + epoch / schedule.e0)
