"""
Network parameter containers, builders and one-step trainers.

A network is f_1..f_M plus learned inverses g_2..g_{M-1}. Step functions
compute every gradient of a mini-batch first and only then hand them to the
optimizers, so targets always come from the inverses of the previous step.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import backprop, frozen_lower_backprop, straight_through_backprop
from .config import Method, TrainConfig
from .errors import ConfigurationError, DimensionError, ParameterError
from .layers import (
    Activation,
    ForwardLayer,
    InverseLayer,
    Transmit,
    activate,
    apply_activation,
    learning_signal,
    transmit,
)
from .linalg import Rng, gaussian_noise, orthogonal_init
from .optim import Optimizer
from .tpengine import (
    LOG_FLOOR,
    GlobalLoss,
    TargetBundle,
    batch_size,
    dense_param_grads,
    dtp_target,
    inverse_loss_grad,
    local_forward_loss_grad,
    mean_sq_norm,
    noise_sigma,
    top_hidden_target,
    top_layer_loss_grad,
    vanilla_tp_target,
)

logger = logging.getLogger(__name__)

MNIST_INPUTS = 784
N_CLASSES = 10


@dataclass
class NetworkParams:
    """Forward layers f_1..f_M and inverse layers g_2..g_{M-1}."""

    forward: List[ForwardLayer]
    inverse: List[InverseLayer] = field(default_factory=list)

    def __post_init__(self):
        """Check that shapes chain and every inverse mirrors its forward layer."""
        if not self.forward:
            raise ParameterError("A network needs at least one forward layer")
        for lower, upper in zip(self.forward, self.forward[1:]):
            if upper.in_dim != lower.out_dim:
                raise DimensionError("NetworkParams", lower.W.shape, upper.W.shape)
        if len(self.inverse) != max(self.depth - 2, 0):
            raise ParameterError(
                f"A depth-{self.depth} network needs {max(self.depth - 2, 0)} inverses, got {len(self.inverse)}"
            )
        for i in range(2, self.depth):
            g, f = self.g(i), self.f(i)
            if g.in_dim != f.out_dim or g.out_dim != f.in_dim:
                raise DimensionError(f"inverse g{i}", f.W.shape, g.V.shape)

    @property
    def depth(self) -> int:
        return len(self.forward)

    @property
    def is_stochastic(self) -> bool:
        return any(layer.transmit is Transmit.STOCHASTIC_BINARY for layer in self.forward[:-1])

    def f(self, i: int) -> ForwardLayer:
        """Forward layer f_i, 1 <= i <= M."""
        return self.forward[i - 1]

    def g(self, i: int) -> InverseLayer:
        """Inverse layer g_i, 2 <= i <= M-1."""
        if not 2 <= i <= self.depth - 1:
            raise ParameterError(f"No inverse g{i} in a depth-{self.depth} network")
        return self.inverse[i - 2]

    def forward_parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for i, layer in enumerate(self.forward, start=1):
            params[f"f{i}.W"] = layer.W
            params[f"f{i}.b"] = layer.b
        return params

    def inverse_parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for i in range(2, self.depth):
            params[f"g{i}.V"] = self.g(i).V
            params[f"g{i}.c"] = self.g(i).c
        return params

    def parameters(self) -> Dict[str, np.ndarray]:
        params = self.forward_parameters()
        params.update(self.inverse_parameters())
        return params

    def forward_parameter_count(self) -> int:
        return sum(p.size for p in self.forward_parameters().values())

    def copy(self) -> "NetworkParams":
        return NetworkParams([f.copy() for f in self.forward], [g.copy() for g in self.inverse])


@dataclass
class AutoEncoderParams:
    """Encoder f(x) = sig(Wx + b) and tied decoder g(h) = sig(W^T h + c)."""

    W: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],) or self.c.shape != (self.W.shape[1],):
            raise DimensionError("AutoEncoderParams", self.W.shape, self.b.shape, self.c.shape)

    @property
    def decoder_weight(self) -> np.ndarray:
        """W^T as a view on the encoder's storage."""
        return self.W.T

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    @property
    def n_visible(self) -> int:
        return self.W.shape[1]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b, "c": self.c}

    def copy(self) -> "AutoEncoderParams":
        return AutoEncoderParams(self.W.copy(), self.b.copy(), self.c.copy())


@dataclass
class StepMetrics:
    """What one mini-batch step measured, all before its own update."""

    loss: float
    local_losses: Dict[int, float] = field(default_factory=dict)
    inverse_losses: Dict[int, float] = field(default_factory=dict)
    sigma: float = 0.0


@dataclass
class AutoEncoderMetrics:
    reconstruction_loss: float
    encoder_loss: float
    sigma: float


# ==================== Builders ====================

def build_mlp(
    sizes: Sequence[int],
    act: Activation,
    rng: Rng,
    out_act: Activation = Activation.SOFTMAX,
    gain: float = 1.0,
    transmits: Optional[Dict[int, Transmit]] = None,
    inverse_act: Optional[Activation] = None,
    sign_inputs: Sequence[int] = (),
) -> NetworkParams:
    """
    Orthogonally initialised MLP with sizes[0] inputs and sizes[-1] outputs.

    Args:
        transmits: transmission mode per layer index (default real)
        inverse_act: activation of every g_i; defaults to the activation of
            the layer g_i reconstructs (f_{i-1})
        sign_inputs: indices i whose g_i reads sign(h_i)
    """
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise ParameterError(f"Layer sizes must be positive and at least two, got {list(sizes)}")
    transmits = transmits or {}
    depth = len(sizes) - 1
    forward = []
    for i in range(1, depth + 1):
        layer_rng = rng.split(f"f{i}")
        W = orthogonal_init(sizes[i], sizes[i - 1], gain, layer_rng)
        forward.append(
            ForwardLayer(
                W,
                np.zeros(sizes[i]),
                out_act if i == depth else act,
                transmits.get(i, Transmit.REAL),
            )
        )
    inverse = []
    for i in range(2, depth):
        V = orthogonal_init(sizes[i - 1], sizes[i], gain, rng.split(f"g{i}"))
        g_act = inverse_act or forward[i - 2].act
        inverse.append(InverseLayer(V, np.zeros(sizes[i - 1]), g_act, i in sign_inputs))
    logger.debug("Built network %s (%s hidden units)", "-".join(map(str, sizes)), Activation(act).value)
    return NetworkParams(forward, inverse)


def build_mnist_mlp(
    hidden_layers: int,
    width: int,
    act: Activation = Activation.TANH,
    rng: Optional[Rng] = None,
    gain: float = 1.0,
    n_inputs: int = MNIST_INPUTS,
) -> NetworkParams:
    """784 -> width x hidden_layers -> 10 softmax network."""
    if hidden_layers < 1 or width < 1:
        raise ParameterError("hidden_layers and width must be at least 1")
    sizes = [n_inputs] + [width] * hidden_layers + [N_CLASSES]
    return build_mlp(sizes, Activation(act), rng or Rng(0), gain=gain)


def build_discrete_net(rng: Optional[Rng] = None, gain: float = 1.0, width: int = 500) -> NetworkParams:
    """
    784-500-500-10 with layer 1 transmitting sign(h_1).

    g_2 reads sign(h_2): g_2(h_2) = tanh(V_2 sign(h_2) + c_2).
    """
    return build_mlp(
        [MNIST_INPUTS, width, width, N_CLASSES],
        Activation.TANH,
        rng or Rng(0),
        gain=gain,
        transmits={1: Transmit.DISCRETIZED},
        sign_inputs=(2,),
    )


def build_stochastic_net(rng: Optional[Rng] = None, gain: float = 1.0, width: int = 200) -> NetworkParams:
    """784-200-200-10 with stochastic binary hidden units and tanh inverses."""
    return build_mlp(
        [MNIST_INPUTS, width, width, N_CLASSES],
        Activation.SIGMOID,
        rng or Rng(0),
        gain=gain,
        transmits={1: Transmit.STOCHASTIC_BINARY, 2: Transmit.STOCHASTIC_BINARY},
        inverse_act=Activation.TANH,
    )


def build_autoencoder(
    n_visible: int = MNIST_INPUTS, n_hidden: int = 1000, rng: Optional[Rng] = None, gain: float = 1.0
) -> AutoEncoderParams:
    if n_visible < 1 or n_hidden < 1:
        raise ParameterError("Auto-encoder sizes must be positive")
    W = orthogonal_init(n_hidden, n_visible, gain, (rng or Rng(0)).split("ae.W"))
    return AutoEncoderParams(W, np.zeros(n_hidden), np.zeros(n_visible))


# ==================== Forward passes ====================

def learning_pass(net: NetworkParams, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Deterministic pass used for learning.

    Returns:
        (values, feeds): values[i-1] = h_i, the real activation of layer i;
        feeds[i] is what layer i+1 consumes (feeds[0] = x). Discrete wires
        carry sign(h_i); stochastic layers pass their probabilities.
    """
    feeds = [np.asarray(x, dtype=np.float64)]
    values = []
    for layer in net.forward:
        value = activate(layer, feeds[-1])
        values.append(value)
        feeds.append(learning_signal(layer, value))
    feeds.pop()
    return values, feeds


def sample_pass(net: NetworkParams, x: np.ndarray, rng: Optional[Rng]) -> np.ndarray:
    """Output of one forward pass that samples every stochastic layer."""
    wire = np.asarray(x, dtype=np.float64)
    for i, layer in enumerate(net.forward, start=1):
        value = activate(layer, wire)
        if i == net.depth:
            return value
        stream = rng.split(f"layer{i}") if rng is not None else None
        wire = transmit(layer, value, stream)
    return wire


def predict_proba(net: NetworkParams, x: np.ndarray, samples: int = 1, rng: Optional[Rng] = None) -> np.ndarray:
    """
    Output probabilities averaged over ``samples`` stochastic passes.

    Deterministic networks need a single pass; every pass would be identical.
    """
    if samples < 1:
        raise ParameterError(f"samples must be at least 1, got {samples}")
    if not net.is_stochastic:
        return sample_pass(net, x, None)
    if rng is None:
        raise ParameterError("Sampling a stochastic network needs an rng stream")
    total = sample_pass(net, x, rng.split("pass0"))
    for s in range(1, samples):
        total = total + sample_pass(net, x, rng.split(f"pass{s}"))
    return total / samples


def evaluate(
    net: NetworkParams, x: np.ndarray, labels: np.ndarray, samples: int = 1, rng: Optional[Rng] = None
) -> Tuple[float, float]:
    """
    Classification error rate and mean negative log-likelihood.

    Args:
        x: features x samples batch
        labels: integer class ids, one per column
    """
    labels = np.asarray(labels)
    probs = predict_proba(net, x, samples, rng)
    if probs.ndim != 2 or probs.shape[1] != labels.shape[0]:
        raise DimensionError("evaluate", probs.shape, labels.shape)
    predicted = np.argmax(probs, axis=0)
    error = float(np.mean(predicted != labels))
    picked = probs[labels, np.arange(labels.shape[0])]
    nll = float(-np.mean(np.log(np.maximum(picked, LOG_FLOOR))))
    return error, nll


# ==================== Target-propagation steps ====================

TargetRule = Callable[[np.ndarray, np.ndarray, np.ndarray, InverseLayer], np.ndarray]


def _difference_rule(h_prev, h, target, g):
    return dtp_target(h_prev, h, target, g)


def _vanilla_rule(h_prev, h, target, g):
    return vanilla_tp_target(g, target)


def compute_targets(
    net: NetworkParams,
    values: List[np.ndarray],
    feeds: List[np.ndarray],
    y: np.ndarray,
    cfg: TrainConfig,
    rule: TargetRule = _difference_rule,
) -> TargetBundle:
    """Activations h_0..h_M of the learning pass with targets ĥ_1..ĥ_{M-1}."""
    depth = net.depth
    targets: Dict[int, np.ndarray] = {}
    activations = [feeds[0]] + list(values)
    probs = list(values[: depth - 1]) if net.is_stochastic else None
    if depth < 2:
        return TargetBundle(activations, probs=probs)
    wire = feeds[depth - 1]
    top_hidden = top_hidden_target(wire, net.f(depth), y, cfg.loss, cfg.eta_tilde)
    if net.f(depth - 1).transmit is Transmit.DISCRETIZED:
        # the displacement found on the wire moves the pre-sign value
        top_hidden = values[depth - 2] + (top_hidden - wire)
    targets[depth - 1] = top_hidden
    for i in range(depth - 1, 1, -1):
        targets[i - 1] = rule(values[i - 2], values[i - 1], targets[i], net.g(i))
    return TargetBundle(activations, [targets[i] for i in range(1, depth)], probs)


def _tp_train_step(
    net: NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    forward_opt: Optimizer,
    inverse_opt: Optimizer,
    epoch: int,
    rng: Rng,
    rule: TargetRule,
) -> StepMetrics:
    depth = net.depth
    values, feeds = learning_pass(net, x)
    bundle = compute_targets(net, values, feeds, y, cfg, rule)
    sigma = noise_sigma(cfg.noise, epoch)
    metrics = StepMetrics(loss=0.0, sigma=sigma)

    inverse_grads: Dict[str, np.ndarray] = {}
    for i in range(depth - 1, 1, -1):
        loss, grad_v, grad_c = inverse_loss_grad(
            net.f(i), net.g(i), values[i - 2], sigma, rng.split(f"noise{i}"), net.f(i - 1).transmit
        )
        metrics.inverse_losses[i] = loss
        inverse_grads[f"g{i}.V"] = grad_v
        inverse_grads[f"g{i}.c"] = grad_c

    forward_grads: Dict[str, np.ndarray] = {}
    for i in range(1, depth):
        loss, grad_w, grad_b = local_forward_loss_grad(net.f(i), feeds[i - 1], bundle.target(i))
        metrics.local_losses[i] = loss
        forward_grads[f"f{i}.W"] = grad_w
        forward_grads[f"f{i}.b"] = grad_b
    metrics.loss, grad_w, grad_b = top_layer_loss_grad(net.f(depth), feeds[depth - 1], y, cfg.loss)
    forward_grads[f"f{depth}.W"] = grad_w
    forward_grads[f"f{depth}.b"] = grad_b

    inverse_opt.update_all(net.inverse_parameters(), inverse_grads)
    forward_opt.update_all(net.forward_parameters(), forward_grads)
    return metrics


def dtp_train_step(
    net: NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    forward_opt: Optimizer,
    inverse_opt: Optimizer,
    epoch: int,
    rng: Rng,
) -> StepMetrics:
    """
    One difference target propagation step on a mini-batch.

    Order: forward pass storing every h_i; ĥ_{M-1} from the global-loss
    gradient through f_M; ĥ_{i-1} = h_{i-1} + g_i(ĥ_i) - g_i(h_i) down to ĥ_1;
    inverse losses for i = M-1..2 at sigma(epoch); local losses for i < M
    and the global loss for f_M. Updates are applied after all gradients
    have been computed.
    """
    return _tp_train_step(net, x, y, cfg, forward_opt, inverse_opt, epoch, rng, _difference_rule)


def vanilla_tp_train_step(
    net: NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    forward_opt: Optimizer,
    inverse_opt: Optimizer,
    epoch: int,
    rng: Rng,
) -> StepMetrics:
    """Same schedule as :func:`dtp_train_step` with ĥ_{i-1} = g_i(ĥ_i)."""
    return _tp_train_step(net, x, y, cfg, forward_opt, inverse_opt, epoch, rng, _vanilla_rule)


def backprop_train_step(
    net: NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    method: Method,
    loss: GlobalLoss,
    forward_opt: Optimizer,
    rng: Optional[Rng] = None,
    freeze_below: int = 2,
) -> StepMetrics:
    """One optimizer step of a gradient baseline; inverse layers are left alone."""
    method = Method(method)
    if method is Method.BACKPROP:
        value, grads = backprop(net, x, y, loss)
    elif method is Method.STRAIGHT_THROUGH:
        value, grads = straight_through_backprop(net, x, y, loss, rng)
    elif method is Method.FROZEN_LOWER:
        value, grads = frozen_lower_backprop(net, freeze_below, x, y, loss, rng)
    else:
        raise ConfigurationError(f"'{method.value}' is not a gradient baseline", "method")
    grad_dict = grads.as_dict()
    if method is Method.FROZEN_LOWER:
        grad_dict = {k: v for k, v in grad_dict.items() if int(k[1:].split(".")[0]) >= freeze_below}
    forward_opt.update_all(net.forward_parameters(), grad_dict)
    return StepMetrics(loss=value)


# ==================== Auto-encoder ====================

def _sigmoid(pre: np.ndarray) -> np.ndarray:
    return apply_activation(Activation.SIGMOID, pre)


def _bias(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    return v if x.ndim == 1 else v[:, None]


def encode(ae: AutoEncoderParams, x: np.ndarray) -> np.ndarray:
    return _sigmoid(ae.W @ x + _bias(ae.b, x))


def decode(ae: AutoEncoderParams, h: np.ndarray) -> np.ndarray:
    return _sigmoid(ae.decoder_weight @ h + _bias(ae.c, h))


def reconstruct(ae: AutoEncoderParams, x: np.ndarray) -> np.ndarray:
    """Noise-free reconstruction g(f(x))."""
    if np.shape(x)[0] != ae.n_visible:
        raise DimensionError("reconstruct", ae.W.shape, np.shape(x))
    return decode(ae, encode(ae, x))


def autoencoder_grads(
    ae: AutoEncoderParams, x: np.ndarray, sigma: float, rng: Optional[Rng]
) -> Tuple[AutoEncoderMetrics, Dict[str, np.ndarray]]:
    """
    Decoder and encoder gradients of one auto-encoder step.

    The decoder sees h + eps_1 and its target is x. The encoder's target is
    ĥ = 2h - f(z), and it is trained from x + eps_2. Keys: ``dec.W`` is the
    gradient for the decoder matrix W^T, ``W``/``b`` for the encoder and
    ``c`` for the decoder bias.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != ae.n_visible or x.ndim not in (1, 2):
        raise DimensionError("dtp_autoencoder_step", ae.W.shape, x.shape)
    if sigma > 0 and rng is None:
        raise ParameterError("A noise stream is required when sigma > 0")
    n = batch_size(x)

    h = encode(ae, x)
    h_noisy = h + gaussian_noise(h.shape, sigma, rng.split("hidden") if rng is not None else None)
    z = decode(ae, h_noisy)
    z_diff = z - x
    grad_pre_z = 2.0 * z_diff * z * (1.0 - z) / n
    grad_dec, grad_c = dense_param_grads(grad_pre_z, h_noisy)

    h_target = 2.0 * h - encode(ae, z)
    x_noisy = x + gaussian_noise(x.shape, sigma, rng.split("visible") if rng is not None else None)
    h_f = encode(ae, x_noisy)
    f_diff = h_f - h_target
    grad_pre_h = 2.0 * f_diff * h_f * (1.0 - h_f) / n
    grad_w, grad_b = dense_param_grads(grad_pre_h, x_noisy)

    metrics = AutoEncoderMetrics(mean_sq_norm(z_diff), mean_sq_norm(f_diff), sigma)
    return metrics, {"dec.W": grad_dec, "c": grad_c, "W": grad_w, "b": grad_b}


def dtp_autoencoder_step(
    ae: AutoEncoderParams, x: np.ndarray, sigma: float, optimizer: Optimizer, rng: Optional[Rng]
) -> AutoEncoderMetrics:
    """
    One back-propagation-free auto-encoder step.

    The decoder update is written through the W^T view, then the encoder
    update goes to W itself; both gradients are taken before either update.
    """
    metrics, grads = autoencoder_grads(ae, x, sigma, rng)
    optimizer.update("dec.W", ae.decoder_weight, grads["dec.W"])
    optimizer.update("c", ae.c, grads["c"])
    optimizer.update("W", ae.W, grads["W"])
    optimizer.update("b", ae.b, grads["b"])
    return metrics
