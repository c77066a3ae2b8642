"""
Experiment configuration.

Configs are strict JSON: unknown keys are rejected by name, keys that start
with an underscore are annotations and are skipped.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

from .errors import ConfigurationError, DataNotFoundError, ParameterError
from .layers import Activation
from .optim import DEFAULT_INVERSE_LR, OptimizerConfig
from .tpengine import GlobalLoss, NoiseSchedule

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "TPROP_DATA_DIR"


class Experiment(str, Enum):
    MNIST_MLP = "mnist_mlp"
    MNIST_RELU = "mnist_relu"
    CIFAR_MLP = "cifar_mlp"
    DISCRETE = "discrete"
    STOCHASTIC = "stochastic"
    AUTOENCODER = "autoencoder"


class Method(str, Enum):
    DTP = "dtp"
    VANILLA_TP = "vanilla_tp"
    BACKPROP = "backprop"
    STRAIGHT_THROUGH = "straight_through"
    FROZEN_LOWER = "frozen_lower"


@dataclass
class TrainConfig:
    """
    Step sizes, global loss and noise schedule used inside one training step.

    ``eta_hat`` is kept for the record only: the training step builds its
    top-hidden target with ``eta_tilde`` and never reads it.
    """

    loss: GlobalLoss = GlobalLoss.CROSS_ENTROPY
    eta_hat: float = 0.5
    eta_tilde: float = 0.1
    noise: NoiseSchedule = field(default_factory=NoiseSchedule)

    def __post_init__(self):
        self.loss = GlobalLoss(self.loss)
        if self.eta_hat <= 0:
            raise ParameterError(f"eta_hat must be positive, got {self.eta_hat}")
        if self.eta_tilde <= 0:
            raise ParameterError(f"eta_tilde must be positive, got {self.eta_tilde}")


METHODS_FOR = {
    Experiment.MNIST_MLP: {Method.DTP, Method.VANILLA_TP, Method.BACKPROP},
    Experiment.MNIST_RELU: {Method.DTP, Method.VANILLA_TP, Method.BACKPROP},
    Experiment.CIFAR_MLP: {Method.DTP, Method.VANILLA_TP, Method.BACKPROP},
    Experiment.DISCRETE: {Method.DTP, Method.VANILLA_TP, Method.STRAIGHT_THROUGH, Method.FROZEN_LOWER},
    Experiment.STOCHASTIC: {Method.DTP, Method.VANILLA_TP, Method.STRAIGHT_THROUGH},
    Experiment.AUTOENCODER: {Method.DTP},
}


def _strict(section: str, data: Any, allowed) -> Dict[str, Any]:
    """Drop annotation keys and reject anything not in ``allowed``."""
    if not isinstance(data, dict):
        raise ConfigurationError("expected a JSON object", section)
    clean = {k: v for k, v in data.items() if not k.startswith("_")}
    for key in clean:
        if key not in allowed:
            name = f"{section}.{key}" if section else key
            raise ConfigurationError("unknown configuration key", name)
    return clean


def _number(name: str, value: Any, kind=float, minimum: float = None, strict_min: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", name)
    if kind is int and int(value) != value:
        raise ConfigurationError(f"expected an integer, got {value!r}", name)
    value = kind(value)
    if minimum is not None and (value <= minimum if strict_min else value < minimum):
        relation = ">" if strict_min else ">="
        raise ConfigurationError(f"must be {relation} {minimum}, got {value}", name)
    return value


@dataclass
class ExperimentConfig:
    """Everything one training run needs; reproducible from (config, seed)."""

    experiment: Experiment = Experiment.MNIST_MLP
    method: Method = Method.DTP
    epochs: int = 10
    batch_size: int = 100
    seed: int = 0
    hidden_layers: int = 3
    width: int = 240
    act: Activation = Activation.TANH
    gain: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    inverse_lr: float = DEFAULT_INVERSE_LR
    layer_lr: Dict[str, float] = field(default_factory=dict)
    freeze_below: int = 2
    train_samples: int = 1
    eval_samples: int = 1
    data_dir: Optional[str] = None
    out_dir: str = "runs/default"
    limit: Optional[int] = None
    valid_size: Optional[int] = None

    def __post_init__(self):
        """Validate field ranges and the experiment / method pairing."""
        try:
            self.experiment = Experiment(self.experiment)
        except ValueError:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}", "experiment") from None
        try:
            self.method = Method(self.method)
        except ValueError:
            raise ConfigurationError(f"unknown method {self.method!r}", "method") from None
        try:
            self.act = Activation(self.act)
        except ValueError:
            raise ConfigurationError(f"unknown activation {self.act!r}", "act") from None
        for name in ("epochs", "batch_size", "hidden_layers", "width", "train_samples", "eval_samples"):
            setattr(self, name, _number(name, getattr(self, name), int, 1))
        self.seed = _number("seed", self.seed, int, 0)
        self.freeze_below = _number("freeze_below", self.freeze_below, int, 1)
        self.gain = _number("gain", self.gain, float, 0.0, strict_min=True)
        self.inverse_lr = _number("inverse_lr", self.inverse_lr, float, 0.0, strict_min=True)
        if self.limit is not None:
            self.limit = _number("limit", self.limit, int, 1)
        if self.valid_size is not None:
            self.valid_size = _number("valid_size", self.valid_size, int, 0)
        for key, lr in self.layer_lr.items():
            _number(f"layer_lr.{key}", lr, float, 0.0, strict_min=True)
            if not (key[:1] in ("f", "g") and key[1:].isdigit()):
                raise ConfigurationError("layer keys look like 'f3' or 'g2'", f"layer_lr.{key}")
        if self.method not in METHODS_FOR[self.experiment]:
            allowed = ", ".join(sorted(m.value for m in METHODS_FOR[self.experiment]))
            raise ConfigurationError(
                f"'{self.method.value}' cannot train '{self.experiment.value}' (use {allowed})", "method"
            )
        if self.experiment is Experiment.MNIST_RELU and self.act is not Activation.RELU:
            raise ConfigurationError("mnist_relu needs act 'relu'", "act")
        if self.act in (Activation.SIGN, Activation.SOFTMAX):
            raise ConfigurationError(f"'{self.act.value}' is not a hidden-layer activation", "act")

    @property
    def is_stochastic(self) -> bool:
        return self.experiment is Experiment.STOCHASTIC

    def to_dict(self) -> dict:
        """Convert the config to a JSON-ready dictionary."""
        return {
            "experiment": self.experiment.value,
            "method": self.method.value,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "hidden_layers": self.hidden_layers,
            "width": self.width,
            "act": self.act.value,
            "gain": self.gain,
            "loss": self.train.loss.value,
            "eta_hat": self.train.eta_hat,
            "eta_tilde": self.train.eta_tilde,
            "noise": {"sigma0": self.train.noise.sigma0, "e0": self.train.noise.e0},
            "optimizer": self.optimizer.to_dict(),
            "inverse_lr": self.inverse_lr,
            "layer_lr": dict(sorted(self.layer_lr.items())),
            "freeze_below": self.freeze_below,
            "train_samples": self.train_samples,
            "eval_samples": self.eval_samples,
            "data_dir": self.data_dir,
            "out_dir": self.out_dir,
            "limit": self.limit,
            "valid_size": self.valid_size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Create a config from parsed JSON, rejecting unknown keys."""
        train_keys = {"loss", "eta_hat", "eta_tilde", "noise"}
        top_fields = {f.name for f in dataclasses.fields(cls)} - {"train"}
        clean = _strict("", data, top_fields | train_keys)

        train_args = {}
        for key in ("eta_hat", "eta_tilde"):
            if key in clean:
                train_args[key] = _number(key, clean.pop(key), float, 0.0, strict_min=True)
        if "loss" in clean:
            loss = clean.pop("loss")
            try:
                train_args["loss"] = GlobalLoss(loss)
            except ValueError:
                raise ConfigurationError(f"unknown loss {loss!r}", "loss") from None
        if "noise" in clean:
            noise = _strict("noise", clean.pop("noise"), {"sigma0", "e0"})
            train_args["noise"] = NoiseSchedule(
                sigma0=_number("noise.sigma0", noise.get("sigma0", 0.0), float, 0.0),
                e0=_number("noise.e0", noise.get("e0", 1.0), float, 0.0, strict_min=True),
            )
        if "optimizer" in clean:
            opt = _strict("optimizer", clean.pop("optimizer"), {"kind", "lr", "rho", "eps"})
            try:
                clean["optimizer"] = OptimizerConfig(**opt)
            except (ValueError, TypeError) as e:
                raise ConfigurationError(str(e), "optimizer") from e
        if "layer_lr" in clean:
            rates = clean["layer_lr"]
            if not isinstance(rates, dict):
                raise ConfigurationError("expected a JSON object", "layer_lr")
            clean["layer_lr"] = {k: v for k, v in rates.items() if not k.startswith("_")}
        return cls(train=TrainConfig(**train_args), **clean)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with command-line flag values applied (None means keep)."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def resolve_data_dir(self) -> str:
        """
        Data directory from the config (flags already applied), then $TPROP_DATA_DIR.

        Raises:
            DataNotFoundError: if neither names a directory
        """
        directory = self.data_dir or os.environ.get(DATA_DIR_ENV)
        if not directory:
            raise DataNotFoundError(f"<no data directory: pass --data-dir or set {DATA_DIR_ENV}>")
        return directory


def load_config(path: str) -> ExperimentConfig:
    """
    Read an ExperimentConfig from a JSON file.

    Raises:
        ConfigurationError: on unreadable JSON, unknown keys or bad values
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}", "config")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid JSON in {path}: {e}", "config") from e
    config = ExperimentConfig.from_dict(data)
    logger.debug("Loaded config %s: %s/%s", path, config.experiment.value, config.method.value)
    return config
