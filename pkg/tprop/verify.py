"""
Numerical checks of the target-propagation guarantees.

- angle bound: with exact inverses and a small top step, the target
  propagation update of a layer stays within 90 degrees of the
  back-propagation update, with cos >= lambda_min / lambda_max of the
  interposed Jacobian product (up to small-step remainders).
- local-loss decrease: when ||I - J_f J_g||^2 < 1, a difference target
  ĥ_{i-1} brings f_i(ĥ_{i-1}) closer to ĥ_i than h_i was.
- inverse convergence: with Robbins-Monro rates a linear inverse V tracks
  W^-1 while W itself is being trained.
- gradient audit: every analytic gradient against central differences.

Each suite is a pure function of its seed and writes one CSV.
"""

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .baselines import backprop, straight_through_backprop
from .data import synthetic_regression
from .errors import NumericalError, ParameterError, UnsupportedOperationError
from .layers import (
    Activation,
    ForwardLayer,
    InverseLayer,
    Transmit,
    activate,
    activation_deriv,
    apply_activation,
    inverse,
)
from .linalg import (
    Rng,
    condition_number,
    cosine,
    largest_eigenvalue_sym,
    orthogonal_init,
    svd_singular_values,
)
from .models import AutoEncoderParams, autoencoder_grads, encode
from .optim import Optimizer, OptimizerConfig, OptimizerKind
from .tpengine import (
    GlobalLoss,
    dtp_target,
    global_loss,
    inverse_loss_grad,
    local_forward_loss_grad,
    top_hidden_gradient,
    top_target,
)

logger = logging.getLogger(__name__)

MAX_RESAMPLE = 50
SCALE_LOW = 0.5
SCALE_HIGH = 1.5
PREACT_LIMIT = 1.0
ANGLE_SLACK = 0.05
FD_STEP = 1e-6
GRAD_TOL = 1e-5
KINK_MARGIN = 1e-3
THM2_START_SCALE = 1e-1
THM2_MIN_SCALE = 1e-6
THM2_PASS_FRACTION = 0.99
PROP2_WINDOWS = (1000, 10000, 100000)
PROP2_STEPS = 110001
PROP2_COND_LIMIT = 1e6

SUITES = ("thm1", "thm2", "prop2", "gradients")


class _OutOfDomain(Exception):
    """An exact inverse was asked to invert outside the activation's range."""


# ==================== Angle bound ====================

@dataclass
class AngleReport:
    """Angle between the target-propagation and back-propagation updates of one layer."""

    eta_hat: float
    cos_alpha: float
    lambda_max: float
    lambda_min: float
    bound_kappa_inverse: float
    cos_alpha_trace: float = float("nan")

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.cos_alpha <= 1.0 + 1e-12:
            raise NumericalError(f"cosine {self.cos_alpha} outside [-1, 1]")

    def satisfies_bound(self, slack: float = ANGLE_SLACK) -> bool:
        return self.cos_alpha > 0 and self.cos_alpha >= self.bound_kappa_inverse - slack


@dataclass
class AngleNet:
    """
    h_k = W_k s_k(h_{k-1}) written as a layer stack.

    Layer k computes s_{k+1}(W_k z_{k-1}); the top layer is linear, so its
    output is h_M. ``z0`` is s_1(h_0).
    """

    layers: List[ForwardLayer]
    z0: np.ndarray
    y: np.ndarray


def _inverse_activation(act: Activation, u: np.ndarray) -> np.ndarray:
    if act is Activation.IDENTITY:
        return u
    if act is Activation.TANH:
        if np.any(np.abs(u) >= 1.0):
            raise _OutOfDomain()
        return np.arctanh(u)
    raise UnsupportedOperationError(f"No exact inverse for '{act.value}'")


def _conditioned_weight(width: int, rng: Rng) -> np.ndarray:
    """Q diag(d) with Q orthogonal and d in [SCALE_LOW, SCALE_HIGH], so cond(W) <= SCALE_HIGH / SCALE_LOW."""
    Q = orthogonal_init(width, width, 1.0, rng.split("Q"))
    d = rng.split("d").uniform(width, SCALE_LOW, SCALE_HIGH)
    return Q * d[None, :]


def build_angle_net(depth: int, width: int, rng: Rng, orthogonal: bool = False) -> AngleNet:
    """
    Random invertible net for the angle check.

    Tanh nets rescale each W_k so that |h_k| <= PREACT_LIMIT at the sampled
    input, which keeps tanh' above 0.4 on every hidden unit.
    Orthogonal nets use linear layers with orthogonal weights, which makes
    every interposed Jacobian orthogonal.
    """
    if depth < 1 or width < 1:
        raise ParameterError("depth and width must be at least 1")
    z = np.tanh(rng.split("h0").standard_normal(width))
    z0 = z
    layers = []
    for k in range(1, depth + 1):
        act = Activation.IDENTITY if (orthogonal or k == depth) else Activation.TANH
        if orthogonal:
            W = orthogonal_init(width, width, 1.0, rng.split(f"W{k}"))
        else:
            W = _conditioned_weight(width, rng.split(f"W{k}"))
            peak = np.max(np.abs(W @ z))
            if peak > PREACT_LIMIT:
                W = W * (PREACT_LIMIT / peak)
        layer = ForwardLayer(W, np.zeros(width), act)
        layers.append(layer)
        z = activate(layer, z)
    y = z + rng.split("y").standard_normal(width)
    return AngleNet(layers, z0, y)


def angle_report(net: AngleNet, eta_hat: float, layer: int = 1) -> AngleReport:
    """Compare the two updates of W_layer on one example with mse loss."""
    depth = len(net.layers)
    if not 1 <= layer <= depth:
        raise ParameterError(f"layer must lie in [1, {depth}], got {layer}")
    zs = [net.z0]
    hs = []
    for f in net.layers:
        hs.append(f.W @ zs[-1])
        zs.append(apply_activation(f.act, hs[-1]))

    _, grads = backprop(net.layers, net.z0, net.y, GlobalLoss.MSE)
    delta_bp = -grads.layer(layer)[0]

    target = top_target(hs[-1], net.y, GlobalLoss.MSE, eta_hat)
    for k in range(depth, layer, -1):
        u = np.linalg.solve(net.layers[k - 1].W, target)
        target = _inverse_activation(net.layers[k - 2].act, u)
    delta_tp = np.outer(target - hs[layer - 1], zs[layer - 1])

    width = hs[layer - 1].shape[0]
    jac = np.eye(width)
    for k in range(layer + 1, depth + 1):
        below = net.layers[k - 2]
        jac = (net.layers[k - 1].W * activation_deriv(below.act, zs[k - 1])[None, :]) @ jac
    singular = svd_singular_values(jac.T)

    trace = float(np.trace(delta_tp.T @ delta_bp)) / (np.linalg.norm(delta_tp) * np.linalg.norm(delta_bp))
    return AngleReport(
        eta_hat=eta_hat,
        cos_alpha=cosine(delta_tp, delta_bp),
        lambda_max=float(singular[0]),
        lambda_min=float(singular[-1]),
        bound_kappa_inverse=float(singular[-1] / singular[0]),
        cos_alpha_trace=trace,
    )


def theorem1_check(
    depth: int, width: int, eta_hat: float, rng: Rng, layer: int = 1, orthogonal: bool = False
) -> AngleReport:
    """
    Angle between δW^tp and δW^bp for layer ``layer`` of a fresh random net.

    Nets whose exact inverse leaves the tanh range at this eta_hat are
    redrawn, up to a bounded number of times.
    """
    if eta_hat <= 0:
        raise ParameterError(f"eta_hat must be positive, got {eta_hat}")
    for attempt in range(MAX_RESAMPLE):
        net = build_angle_net(depth, width, rng.split(f"attempt{attempt}"), orthogonal)
        try:
            return angle_report(net, eta_hat, layer)
        except _OutOfDomain:
            logger.debug("Exact inverse left the tanh range; redrawing (attempt %d)", attempt)
    raise NumericalError(f"No invertible net for eta_hat={eta_hat:g} after {MAX_RESAMPLE} draws")


# ==================== Local-loss decrease ====================

@dataclass
class Thm2Report:
    """Both sides of ||ĥ_i - f_i(ĥ_{i-1})||^2 < ||ĥ_i - h_i||^2 and the eigenvalue condition."""

    lam: float
    lhs: float
    rhs: float
    target_norm: float

    @property
    def holds(self) -> bool:
        return self.lhs < self.rhs


def theorem2_check(f: ForwardLayer, g: InverseLayer, h_prev: np.ndarray, e: np.ndarray) -> Thm2Report:
    """
    Set ĥ_i = f(h_prev) + e, form ĥ_{i-1} with the difference rule and
    measure both sides, plus the largest eigenvalue of
    (I - J_f J_g)^T (I - J_f J_g) with J_f at h_prev and J_g at h_i.
    """
    if g.sign_input:
        raise UnsupportedOperationError("g reads sign(h); its Jacobian is zero almost everywhere")
    h = activate(f, h_prev)
    target = h + e
    h_hat_prev = dtp_target(h_prev, h, target, g)
    lhs = float(np.sum((target - activate(f, h_hat_prev)) ** 2))
    rhs = float(np.sum(e * e))

    jac_f = activation_deriv(f.act, h)[:, None] * f.W
    jac_g = activation_deriv(g.act, inverse(g, h))[:, None] * g.V
    residual = np.eye(h.shape[0]) - jac_f @ jac_g
    lam = largest_eigenvalue_sym(residual.T @ residual)
    return Thm2Report(lam=max(lam, 0.0), lhs=lhs, rhs=rhs, target_norm=float(np.sqrt(rhs)))


def exact_linear_pair(dim: int, rng: Rng) -> Tuple[ForwardLayer, InverseLayer]:
    """f(h) = Wh + b with g its exact inverse W^-1 (h - b)."""
    W = _conditioned_weight(dim, rng.split("W"))
    b = 0.1 * rng.split("b").standard_normal(dim)
    W_inv = np.linalg.inv(W)
    return ForwardLayer(W, b, Activation.IDENTITY), InverseLayer(W_inv, -W_inv @ b, Activation.IDENTITY)


def _sample_inputs(rng: Rng, dim: int, n: int = None) -> np.ndarray:
    shape = dim if n is None else (dim, n)
    return 0.5 * np.tanh(rng.standard_normal(shape))


def trained_tanh_pair(
    dim: int, rng: Rng, steps: int = 3000, batch: int = 20, lr: float = 0.1, sigma: float = 0.05
) -> Tuple[ForwardLayer, InverseLayer]:
    """A tanh layer and a tanh inverse fitted by SGD on the noisy inverse loss."""
    W = orthogonal_init(dim, dim, 0.8, rng.split("W"))
    f = ForwardLayer(W, 0.1 * rng.split("b").standard_normal(dim), Activation.TANH)
    g = InverseLayer(W.T.copy(), np.zeros(dim), Activation.TANH)
    opt = Optimizer(OptimizerConfig(OptimizerKind.SGD, lr))
    inputs, noise = rng.split("inputs"), rng.split("noise")
    loss = float("nan")
    for _ in range(steps):
        loss, grad_v, grad_c = inverse_loss_grad(f, g, _sample_inputs(inputs, dim, batch), sigma, noise)
        opt.update("g.V", g.V, grad_v)
        opt.update("g.c", g.c, grad_c)
    logger.debug("Trained inverse pair: final inverse loss %.3e", loss)
    return f, g


def _unit(rng: Rng, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def theorem2_sweep(
    f: ForwardLayer, g: InverseLayer, h_prev: np.ndarray, directions: int, rng: Rng
) -> List[Tuple[float, List[Thm2Report]]]:
    """
    Shrink ||e|| from 1e-1 by factors of ten until lhs < rhs holds in at
    least 99% of ``directions`` random directions, or 1e-6 is passed.

    Returns:
        (scale, reports) for every scale tried, the last one being final
    """
    sweep = []
    scale = THM2_START_SCALE
    while scale >= THM2_MIN_SCALE * (1 - 1e-9):
        stream = rng.split(f"scale{len(sweep)}")
        reports = [theorem2_check(f, g, h_prev, scale * _unit(stream, h_prev.shape[0])) for _ in range(directions)]
        sweep.append((scale, reports))
        if np.mean([r.holds for r in reports]) >= THM2_PASS_FRACTION:
            break
        scale /= 10.0
    return sweep


# ==================== Inverse convergence ====================

@dataclass
class Prop2Trace:
    """gamma_t = ||V_t - W_t^-1||_F^2 for t = 0..steps."""

    gammas: np.ndarray
    max_condition: float = 1.0

    def __post_init__(self):
        if np.any(self.gammas < 0):
            raise NumericalError("gamma must be non-negative")

    def window_mean(self, t: int, half_width: float = 0.1) -> float:
        lo, hi = int((1 - half_width) * t), int((1 + half_width) * t)
        if hi >= len(self.gammas):
            raise ParameterError(f"Trace of {len(self.gammas)} points has no window around t={t}")
        return float(np.mean(self.gammas[lo:hi + 1]))


def robbins_monro(eta0: float, t0: float) -> Callable[[int], float]:
    """eta(t) = eta0 / (1 + t / t0)."""
    return lambda t: eta0 / (1.0 + t / t0)


def prop2_check(
    dim: int,
    steps: int,
    eta_w: Callable[[int], float],
    eta_v: Callable[[int], float],
    rng: Rng,
    sigma: float = 0.1,
    v_at_optimum: bool = False,
) -> Prop2Trace:
    """
    Jointly train f(h) = Wh toward a noisy linear regression and g(h) = Vh
    on the noisy inverse loss, recording gamma_t against V*(W) = W^-1.

    Raises:
        NumericalError: if W drifts to a condition number above 1e6
    """
    if dim < 1 or steps < 1:
        raise ParameterError("dim and steps must be at least 1")
    W = orthogonal_init(dim, dim, 1.0, rng.split("W0"))
    W_goal = W + 0.1 * rng.split("goal").standard_normal((dim, dim)) / np.sqrt(dim)
    V = np.linalg.inv(W) if v_at_optimum else 0.5 * orthogonal_init(dim, dim, 1.0, rng.split("V0"))

    data = rng.split("data")
    corrupted = data.standard_normal((steps, dim)) + data.normal((steps, dim), sigma)
    regress_x = data.standard_normal((steps, dim))
    regress_noise = data.normal((steps, dim), sigma)

    gammas = np.empty(steps + 1)
    gammas[0] = float(np.sum((V - np.linalg.inv(W)) ** 2))
    max_cond = 1.0
    for t in range(steps):
        u = corrupted[t]
        encoded = W @ u
        V -= eta_v(t) * 2.0 * np.outer(V @ encoded - u, encoded)
        rate_w = eta_w(t)
        if rate_w > 0:
            x = regress_x[t]
            W -= rate_w * 2.0 * np.outer(W @ x - (W_goal @ x + regress_noise[t]), x)
            if t % 1000 == 0:
                cond = condition_number(W)
                max_cond = max(max_cond, cond)
                if cond > PROP2_COND_LIMIT:
                    raise NumericalError(f"W became ill-conditioned at step {t}: condition number {cond:.3e}")
        gammas[t + 1] = float(np.sum((V - np.linalg.inv(W)) ** 2))
    return Prop2Trace(gammas, max_cond)


# ==================== Gradient audit ====================

@dataclass
class GradientCheck:
    target: str
    trial: int
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < GRAD_TOL


def numeric_gradient(loss: Callable[[], float], param: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of ``loss`` with respect to every entry of ``param`` (perturbed in place)."""
    grad = np.zeros_like(param)
    for idx in np.ndindex(param.shape):
        old = param[idx]
        param[idx] = old + step
        plus = loss()
        param[idx] = old - step
        minus = loss()
        param[idx] = old
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def _dense(rng: Rng, n_out: int, n_in: int, act: Activation, transmit=Transmit.REAL) -> ForwardLayer:
    W = rng.split("W").standard_normal((n_out, n_in)) / np.sqrt(n_in)
    return ForwardLayer(W, 0.1 * rng.split("b").standard_normal(n_out), act, transmit)


def _away_from_kinks(layers: List[ForwardLayer], rng: Rng, n_in: int, batch: int) -> np.ndarray:
    """Inputs whose relu pre-activations all sit at least 1e-3 from zero."""
    for attempt in range(MAX_RESAMPLE):
        x = rng.split(f"x{attempt}").standard_normal((n_in, batch))
        z, ok = x, True
        for layer in layers:
            pre = layer.W @ z + layer.b[:, None]
            if layer.act is Activation.RELU and np.min(np.abs(pre)) <= KINK_MARGIN:
                ok = False
                break
            z = apply_activation(layer.act, pre)
        if ok:
            return x
    raise NumericalError("Could not draw inputs away from relu kinks")


def _audit_local_forward(rng: Rng) -> float:
    layer = _dense(rng.split("f"), 4, 3, Activation.TANH)
    planted = synthetic_regression(5, 3, rng.split("data"), out_dim=4)
    x, target = planted.inputs.T, planted.targets.T
    _, gw, gb = local_forward_loss_grad(layer, x, target)
    loss = lambda: local_forward_loss_grad(layer, x, target)[0]
    return max(relative_error(gw, numeric_gradient(loss, layer.W)), relative_error(gb, numeric_gradient(loss, layer.b)))


def _audit_inverse(rng: Rng) -> float:
    f = _dense(rng.split("f"), 4, 3, Activation.TANH)
    g = InverseLayer(rng.split("V").standard_normal((3, 4)) / 2.0, 0.1 * rng.split("c").standard_normal(3))
    h = np.tanh(rng.split("h").standard_normal((3, 5)))
    _, gv, gc = inverse_loss_grad(f, g, h, 0.0, None)
    loss = lambda: inverse_loss_grad(f, g, h, 0.0, None)[0]
    return max(relative_error(gv, numeric_gradient(loss, g.V)), relative_error(gc, numeric_gradient(loss, g.c)))


def _audit_network(layers: List[ForwardLayer], x: np.ndarray, y: np.ndarray, grads, first: int = 1) -> float:
    def loss():
        z = x
        for i, layer in enumerate(layers, start=1):
            z = activate(layer, z)
            if i < len(layers) and layer.transmit is Transmit.DISCRETIZED:
                z = (z > 0).astype(np.float64)
        return global_loss(GlobalLoss.CROSS_ENTROPY, z, y)

    worst = 0.0
    for i in range(first, len(layers) + 1):
        gw, gb = grads.layer(i)
        layer = layers[i - 1]
        worst = max(worst, relative_error(gw, numeric_gradient(loss, layer.W)))
        worst = max(worst, relative_error(gb, numeric_gradient(loss, layer.b)))
    return worst


def _labels(rng: Rng, n_classes: int, batch: int) -> np.ndarray:
    y = np.zeros((n_classes, batch))
    y[rng.integers(0, n_classes, batch), np.arange(batch)] = 1.0
    return y


def _audit_backprop(rng: Rng, act: Activation = Activation.TANH) -> float:
    layers = [
        _dense(rng.split("f1"), 5, 4, act),
        _dense(rng.split("f2"), 4, 5, act),
        _dense(rng.split("f3"), 3, 4, Activation.SOFTMAX),
    ]
    x = _away_from_kinks(layers, rng.split("x"), 4, 6)
    y = _labels(rng.split("y"), 3, 6)
    _, grads = backprop(layers, x, y, GlobalLoss.CROSS_ENTROPY)
    return _audit_network(layers, x, y, grads)


def _audit_straight_through(rng: Rng) -> float:
    layers = [
        _dense(rng.split("f1"), 5, 4, Activation.TANH, Transmit.DISCRETIZED),
        _dense(rng.split("f2"), 4, 5, Activation.TANH),
        _dense(rng.split("f3"), 3, 4, Activation.SOFTMAX),
    ]
    x = rng.split("x").standard_normal((4, 6))
    y = _labels(rng.split("y"), 3, 6)
    _, grads = straight_through_backprop(layers, x, y, GlobalLoss.CROSS_ENTROPY)
    return _audit_network(layers, x, y, grads, first=2)


def _audit_top_hidden(rng: Rng) -> float:
    top = _dense(rng.split("top"), 3, 4, Activation.SOFTMAX)
    h = np.tanh(rng.split("h").standard_normal((4, 1)))
    y = _labels(rng.split("y"), 3, 1)
    analytic = top_hidden_gradient(h, top, y, GlobalLoss.CROSS_ENTROPY)
    numeric = numeric_gradient(lambda: global_loss(GlobalLoss.CROSS_ENTROPY, activate(top, h), y), h)
    return relative_error(analytic, numeric)


def _audit_autoencoder(rng: Rng) -> float:
    W = rng.split("W").standard_normal((4, 6)) / np.sqrt(6)
    ae = AutoEncoderParams(W, 0.1 * rng.split("b").standard_normal(4), 0.1 * rng.split("c").standard_normal(6))
    x = rng.split("x").uniform((6, 5))
    _, grads = autoencoder_grads(ae, x, 0.0, None)

    h = encode(ae, x)
    decoder = ae.decoder_weight.copy()
    c = ae.c.copy()
    dec_loss = lambda: float(np.sum((apply_activation(Activation.SIGMOID, decoder @ h + c[:, None]) - x) ** 2) / 5)
    z = apply_activation(Activation.SIGMOID, decoder @ h + c[:, None])
    h_target = 2.0 * h - encode(ae, z)
    enc_W, enc_b = ae.W.copy(), ae.b.copy()
    enc_loss = lambda: float(
        np.sum((apply_activation(Activation.SIGMOID, enc_W @ x + enc_b[:, None]) - h_target) ** 2) / 5
    )
    return max(
        relative_error(grads["dec.W"], numeric_gradient(dec_loss, decoder)),
        relative_error(grads["c"], numeric_gradient(dec_loss, c)),
        relative_error(grads["W"], numeric_gradient(enc_loss, enc_W)),
        relative_error(grads["b"], numeric_gradient(enc_loss, enc_b)),
    )


AUDITS: Dict[str, Callable[[Rng], float]] = {
    "local_forward": _audit_local_forward,
    "inverse": _audit_inverse,
    "backprop_tanh": _audit_backprop,
    "backprop_relu": lambda rng: _audit_backprop(rng, Activation.RELU),
    "straight_through": _audit_straight_through,
    "top_hidden": _audit_top_hidden,
    "autoencoder": _audit_autoencoder,
}


def gradient_audit(selector: str, trials: int, rng: Rng) -> List[GradientCheck]:
    """
    Finite-difference audit of the analytic gradients named by ``selector``
    (a key of AUDITS, or "all").
    """
    if selector == "all":
        names = list(AUDITS)
    elif selector in AUDITS:
        names = [selector]
    else:
        raise ParameterError(f"Unknown gradient target '{selector}'; choose from {sorted(AUDITS)} or 'all'")
    checks = []
    for name in names:
        for trial in range(trials):
            checks.append(GradientCheck(name, trial, AUDITS[name](rng.split(name).split(f"trial{trial}"))))
    return checks


# ==================== Suites ====================

@dataclass
class SuiteResult:
    suite: str
    header: List[str]
    rows: List[List] = field(default_factory=list)
    passed: bool = True
    path: Optional[str] = None
    failures: List[str] = field(default_factory=list)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _thm1_suite(seed: int, trials: int, eta_hat: float = 1e-4) -> SuiteResult:
    result = SuiteResult(
        "thm1",
        ["seed", "case", "trial", "eta_hat", "cos_alpha", "cos_alpha_trace", "lambda_max", "lambda_min",
         "bound_kappa_inverse", "passed"],
    )
    root = Rng(seed).split("thm1")

    def record(case, trial, report, ok):
        if abs(report.cos_alpha - report.cos_alpha_trace) > 1e-12:
            ok = False
            result.failures.append(f"{case} trial {trial}: cosine forms disagree")
        result.rows.append([seed, case, trial, report.eta_hat, report.cos_alpha, report.cos_alpha_trace,
                            report.lambda_max, report.lambda_min, report.bound_kappa_inverse, ok])
        if not ok:
            result.passed = False
            result.failures.append(f"{case} trial {trial}: cos={report.cos_alpha:.6f} bound={report.bound_kappa_inverse:.6f}")

    for trial in range(trials):
        report = theorem1_check(4, 8, eta_hat, root.split("random").split(f"trial{trial}"))
        record("random", trial, report, report.satisfies_bound())

    for trial in range(min(trials, 10)):
        stream = root.split("top").split(f"trial{trial}")
        report = theorem1_check(4, 8, eta_hat, stream, layer=4)
        record("top", trial, report, abs(report.cos_alpha - 1.0) < 1e-9)

    for trial in range(min(trials, 10)):
        net = build_angle_net(4, 8, root.split("orthogonal").split(f"trial{trial}"), orthogonal=True)
        previous = -np.inf
        for step in (1e-2, 1e-3, 1e-4):
            report = angle_report(net, step)
            ok = report.cos_alpha >= previous - 1e-12
            if step == 1e-4:
                ok = ok and report.cos_alpha >= 0.99
            record("orthogonal", trial, report, ok)
            previous = report.cos_alpha
    return result


def _thm2_suite(seed: int, trials: int, dim: int = 4) -> SuiteResult:
    result = SuiteResult("thm2", ["seed", "case", "trial", "scale", "lambda", "lhs", "rhs", "target_norm", "passed"])
    root = Rng(seed).split("thm2")

    f, g = exact_linear_pair(dim, root.split("exact"))
    inputs = root.split("exact.inputs")
    for trial in range(trials):
        h_prev = _sample_inputs(inputs, dim)
        report = theorem2_check(f, g, h_prev, THM2_START_SCALE * _unit(inputs, dim))
        ok = report.holds and report.lam < 1e-10
        result.rows.append([seed, "exact", trial, THM2_START_SCALE, report.lam, report.lhs, report.rhs,
                            report.target_norm, ok])
        if not ok:
            result.passed = False
            result.failures.append(f"exact trial {trial}: lambda={report.lam:.3e} lhs={report.lhs:.3e}")

    f, g = trained_tanh_pair(dim, root.split("trained"))
    h_prev = _sample_inputs(root.split("trained.inputs"), dim)
    sweep = theorem2_sweep(f, g, h_prev, trials, root.split("trained.directions"))
    for scale, reports in sweep:
        final = scale == sweep[-1][0]
        for trial, report in enumerate(reports):
            ok = report.holds and report.lam < 1.0
            result.rows.append([seed, "trained", trial, scale, report.lam, report.lhs, report.rhs,
                                report.target_norm, ok])
        if final:
            lam = reports[0].lam
            fraction = float(np.mean([r.holds for r in reports]))
            if lam >= 1.0 or fraction < THM2_PASS_FRACTION:
                result.passed = False
                result.failures.append(f"trained pair: lambda={lam:.3f}, inequality held in {fraction:.0%} at |e|={scale:g}")
    return result


def _prop2_suite(seed: int, trials: int, steps: int = PROP2_STEPS, dim: int = 4) -> SuiteResult:
    result = SuiteResult("prop2", ["seed", "case", "t", "gamma", "passed"])
    root = Rng(seed).split("prop2")
    rate = robbins_monro(0.02, 100.0)
    frozen = lambda t: 0.0

    trace = prop2_check(dim, steps, frozen, rate, root.split("frozen"))
    t_end = min(100000, steps)
    ok = trace.gammas[t_end] < 1e-4
    result.rows.append([seed, "frozen", t_end, float(trace.gammas[t_end]), ok])
    if not ok:
        result.passed = False
        result.failures.append(f"frozen W: gamma={trace.gammas[t_end]:.3e} at t={t_end}")

    trace = prop2_check(dim, steps, rate, rate, root.split("joint"))
    means = []
    for t in PROP2_WINDOWS:
        if int(1.1 * t) >= len(trace.gammas):
            break
        means.append(trace.window_mean(t))
        decreasing = len(means) == 1 or means[-1] < means[-2]
        result.rows.append([seed, "joint", t, means[-1], decreasing])
        if not decreasing:
            result.passed = False
            result.failures.append(f"joint: window mean at t={t} did not decrease ({means[-1]:.3e})")

    short = min(steps, 10000)
    trace = prop2_check(dim, short, frozen, rate, root.split("optimum"), v_at_optimum=True)
    peak = float(np.max(trace.gammas))
    ok = peak < 1e-12
    result.rows.append([seed, "at_optimum", short, peak, ok])
    if not ok:
        result.passed = False
        result.failures.append(f"V started at W^-1 drifted to gamma={peak:.3e}")
    return result


def _gradients_suite(seed: int, trials: int) -> SuiteResult:
    result = SuiteResult("gradients", ["seed", "target", "trial", "max_rel_err", "passed"])
    for check in gradient_audit("all", trials, Rng(seed).split("gradients")):
        result.rows.append([seed, check.target, check.trial, check.max_rel_err, check.passed])
        if not check.passed:
            result.passed = False
            result.failures.append(f"{check.target} trial {check.trial}: relative error {check.max_rel_err:.3e}")
    return result


SUITE_RUNNERS = {
    "thm1": _thm1_suite,
    "thm2": _thm2_suite,
    "prop2": _prop2_suite,
    "gradients": _gradients_suite,
}


def write_suite_csv(result: SuiteResult, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"verify_{result.suite}.csv")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(result.header)
        for row in result.rows:
            writer.writerow([_fmt(v) for v in row])
    result.path = path
    return path


def run_suite(
    name: str, seed: int, trials: int, out_dir: str = ".", eta_hat: Optional[float] = None
) -> List[SuiteResult]:
    """
    Run one suite (or "all") and write ``verify_<suite>.csv`` for each.

    ``eta_hat`` overrides the top step size of the angle-bound suite.

    "all" also writes ``verify_all.csv`` with one pass flag per suite.
    """
    if trials < 1:
        raise ParameterError(f"trials must be at least 1, got {trials}")
    names = list(SUITES) if name == "all" else [name]
    for suite in names:
        if suite not in SUITE_RUNNERS:
            raise ParameterError(f"Unknown suite '{suite}'; choose from {', '.join(SUITES)} or 'all'")
    results = []
    for suite in names:
        logger.info("Running verification suite %s (seed %d, %d trials)", suite, seed, trials)
        if suite == "thm1" and eta_hat is not None:
            result = _thm1_suite(seed, trials, eta_hat)
        else:
            result = SUITE_RUNNERS[suite](seed, trials)
        write_suite_csv(result, out_dir)
        results.append(result)
    if name == "all":
        summary = SuiteResult("all", ["suite", "rows", "passed"])
        summary.rows = [[r.suite, len(r.rows), r.passed] for r in results]
        summary.passed = all(r.passed for r in results)
        write_suite_csv(summary, out_dir)
    return results
