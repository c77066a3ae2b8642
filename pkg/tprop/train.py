"""
Training runs: the Trainer owns data, parameters, optimizers and random
streams of one experiment and writes its artifacts.
"""

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .config import Experiment, ExperimentConfig, Method
from .data import CIFAR_VALID, MNIST_VALID, Dataset, load_cifar10, load_mnist, shuffled_batches
from .errors import CheckpointFormatError, ConfigurationError
from .linalg import Rng
from .models import (
    AutoEncoderParams,
    NetworkParams,
    backprop_train_step,
    build_autoencoder,
    build_discrete_net,
    build_mlp,
    build_stochastic_net,
    dtp_autoencoder_step,
    dtp_train_step,
    evaluate,
    reconstruct,
    vanilla_tp_train_step,
)
from .optim import Optimizer
from .storage import CheckpointStorage
from .tpengine import noise_sigma

logger = logging.getLogger(__name__)

EVAL_CHUNK = 5000
METRICS_FILE = "metrics.csv"
TIMING_FILE = "timing.csv"
FINAL_FILE = "final.json"
CHECKPOINT_FILE = "checkpoint.tprop"

Model = Union[NetworkParams, AutoEncoderParams]


@dataclass
class MetricsRow:
    """
    One epoch of measurements.

    For the auto-encoder the three error columns hold the mean per-pixel
    reconstruction MSE of each split.
    """

    epoch: int
    train_loss: float
    train_err: float
    valid_err: float
    test_err: float
    sigma: float
    inverse_losses: Dict[int, float] = field(default_factory=dict)

    def to_row(self, inverse_layers: List[int]) -> List[str]:
        values = [self.train_loss, self.train_err, self.valid_err, self.test_err, self.sigma]
        values += [self.inverse_losses.get(i, float("nan")) for i in inverse_layers]
        return [str(self.epoch)] + [repr(float(v)) for v in values]


def metrics_header(inverse_layers: List[int]) -> List[str]:
    return ["epoch", "train_loss", "train_err", "valid_err", "test_err", "sigma"] + [
        f"inverse_loss_g{i}" for i in inverse_layers
    ]


# ==================== Builders ====================

def read_dataset(
    experiment: Experiment, directory: str, limit: Optional[int] = None, valid_size: Optional[int] = None
) -> Dataset:
    """Read the dataset an experiment trains on from ``directory``."""
    if experiment is Experiment.CIFAR_MLP:
        return load_cifar10(directory, limit, CIFAR_VALID if valid_size is None else valid_size)
    return load_mnist(directory, limit, MNIST_VALID if valid_size is None else valid_size)


def load_dataset(config: ExperimentConfig, directory: Optional[str] = None) -> Dataset:
    """Read the configured experiment's dataset, resolving the data directory."""
    directory = directory or config.resolve_data_dir()
    return read_dataset(config.experiment, directory, config.limit, config.valid_size)


def build_model(config: ExperimentConfig, n_inputs: int, rng: Rng) -> Model:
    """Initial parameters for the configured experiment."""
    experiment = config.experiment
    if experiment in (Experiment.MNIST_MLP, Experiment.MNIST_RELU, Experiment.CIFAR_MLP):
        sizes = [n_inputs] + [config.width] * config.hidden_layers + [10]
        return build_mlp(sizes, config.act, rng, gain=config.gain)
    if experiment is Experiment.DISCRETE:
        return build_discrete_net(rng, config.gain, config.width)
    if experiment is Experiment.STOCHASTIC:
        return build_stochastic_net(rng, config.gain, config.width)
    return build_autoencoder(n_inputs, config.width, rng, config.gain)


def _split_layer_lr(layer_lr: Dict[str, float], prefix: str) -> Dict[str, float]:
    return {k: v for k, v in layer_lr.items() if k.startswith(prefix)}


# ==================== Evaluation ====================

def evaluate_split(
    net: NetworkParams, ds: Dataset, split: str, samples: int, rng: Rng, chunk: int = EVAL_CHUNK
) -> Tuple[float, float]:
    """
    Error rate and NLL of one split, evaluated in fixed chunks.

    Chunk ``k`` samples from ``rng.split("chunk<k>")``, so the result depends
    only on the parameters, the split and the stream.
    """
    idx = ds.splits.get(split, np.arange(0))
    if len(idx) == 0:
        return float("nan"), float("nan")
    errors = 0.0
    nll = 0.0
    for k, start in enumerate(range(0, len(idx), chunk)):
        rows = idx[start:start + chunk]
        x, _ = ds.columns(rows)
        err, loss = evaluate(net, x, ds.labels[rows], samples, rng.split(f"chunk{k}"))
        errors += err * len(rows)
        nll += loss * len(rows)
    return errors / len(idx), nll / len(idx)


def reconstruction_error(ae: AutoEncoderParams, ds: Dataset, split: str, chunk: int = EVAL_CHUNK) -> float:
    """Mean per-pixel squared reconstruction error of one split."""
    idx = ds.splits.get(split, np.arange(0))
    if len(idx) == 0:
        return float("nan")
    total = 0.0
    for start in range(0, len(idx), chunk):
        x, _ = ds.columns(idx[start:start + chunk])
        total += float(np.sum((reconstruct(ae, x) - x) ** 2))
    return total / (len(idx) * ds.dim)


def eval_stream(seed: int, split: str) -> Rng:
    """The stream every evaluation of ``split`` samples from."""
    return Rng(seed).split("eval").split(split)


class Trainer:
    """
    Main training class: runs epochs of the configured method and records
    metrics, timings, the final summary and a checkpoint.
    """

    def __init__(self, config: ExperimentConfig, dataset: Optional[Dataset] = None):
        """
        Initialize the trainer.

        Args:
            config: validated experiment configuration
            dataset: preloaded data; read from the configured directory if omitted
        """
        self.config = config
        self.rng = Rng(config.seed)
        self.dataset = dataset if dataset is not None else load_dataset(config)
        self.model = build_model(config, self.dataset.dim, self.rng.split("init"))
        self.forward_opt = Optimizer(config.optimizer, _split_layer_lr(config.layer_lr, "f"))
        self.inverse_opt = Optimizer(
            config.optimizer.with_lr(config.inverse_lr), _split_layer_lr(config.layer_lr, "g")
        )
        self.history: List[MetricsRow] = []
        self.timings: List[float] = []
        if isinstance(self.model, NetworkParams) and config.method is Method.FROZEN_LOWER:
            if not 1 <= config.freeze_below <= self.model.depth + 1:
                raise ConfigurationError(f"must lie in [1, {self.model.depth + 1}]", "freeze_below")

    @property
    def is_autoencoder(self) -> bool:
        return isinstance(self.model, AutoEncoderParams)

    @property
    def inverse_layers(self) -> List[int]:
        if self.is_autoencoder:
            return []
        return list(range(2, self.model.depth))

    # ==================== Training ====================

    def _step(self, x: np.ndarray, y: np.ndarray, epoch: int, rng: Rng):
        cfg = self.config
        if self.is_autoencoder:
            sigma = noise_sigma(cfg.train.noise, epoch)
            return dtp_autoencoder_step(self.model, x, sigma, self.forward_opt, rng)
        if cfg.method is Method.DTP:
            return dtp_train_step(self.model, x, y, cfg.train, self.forward_opt, self.inverse_opt, epoch, rng)
        if cfg.method is Method.VANILLA_TP:
            return vanilla_tp_train_step(
                self.model, x, y, cfg.train, self.forward_opt, self.inverse_opt, epoch, rng
            )
        return backprop_train_step(
            self.model, x, y, cfg.method, cfg.train.loss, self.forward_opt, rng, cfg.freeze_below
        )

    def run_epoch(self, epoch: int) -> MetricsRow:
        """Train on every mini-batch once, then evaluate all splits."""
        stream = self.rng.split(f"epoch{epoch}")
        batches = shuffled_batches(self.dataset, self.config.batch_size, stream.split("shuffle"))
        total_loss = 0.0
        n_seen = 0
        inverse_sums: Dict[int, float] = {i: 0.0 for i in self.inverse_layers}
        n_batches = 0
        sigma = noise_sigma(self.config.train.noise, epoch)

        for t, (x, y) in enumerate(batches):
            metrics = self._step(x, y, epoch, stream.split(f"step{t}"))
            size = x.shape[1]
            loss = metrics.reconstruction_loss if self.is_autoencoder else metrics.loss
            if not np.isfinite(loss):
                logger.warning("Non-finite training loss at epoch %d step %d", epoch, t)
            total_loss += loss * size
            n_seen += size
            n_batches += 1
            if not self.is_autoencoder:
                for i, value in metrics.inverse_losses.items():
                    inverse_sums[i] += value

        row = MetricsRow(
            epoch=epoch,
            train_loss=total_loss / max(n_seen, 1),
            train_err=float("nan"),
            valid_err=float("nan"),
            test_err=float("nan"),
            sigma=sigma,
            inverse_losses={i: s / max(n_batches, 1) for i, s in inverse_sums.items()}
            if self.config.method in (Method.DTP, Method.VANILLA_TP) else {},
        )
        row.train_err, row.valid_err, row.test_err = self.split_errors()
        return row

    def split_errors(self) -> Tuple[float, float, float]:
        """(train, valid, test) error rates, or reconstruction MSE for the auto-encoder."""
        if self.is_autoencoder:
            return tuple(reconstruction_error(self.model, self.dataset, s) for s in ("train", "valid", "test"))
        cfg = self.config
        train_err, _ = evaluate_split(
            self.model, self.dataset, "train", cfg.train_samples, eval_stream(cfg.seed, "train")
        )
        valid_err, _ = evaluate_split(
            self.model, self.dataset, "valid", cfg.eval_samples, eval_stream(cfg.seed, "valid")
        )
        test_err, _ = evaluate_split(
            self.model, self.dataset, "test", cfg.eval_samples, eval_stream(cfg.seed, "test")
        )
        return train_err, valid_err, test_err

    def run(self, out_dir: Optional[str] = None) -> dict:
        """
        Train for the configured number of epochs and write every artifact.

        Raises:
            CheckpointFormatError: if the checkpoint cannot be written

        Returns:
            The summary that is also written to final.json
        """
        out_dir = out_dir or self.config.out_dir
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, METRICS_FILE)
        with open(metrics_path, "w", newline="", encoding="utf-8") as f:
            csv.writer(f).writerow(metrics_header(self.inverse_layers))

        logger.info(
            "Training %s with %s for %d epochs (seed %d)",
            self.config.experiment.value, self.config.method.value, self.config.epochs, self.config.seed,
        )
        for epoch in range(self.config.epochs):
            started = time.perf_counter()
            row = self.run_epoch(epoch)
            self.timings.append(time.perf_counter() - started)
            self.history.append(row)
            with open(metrics_path, "a", newline="", encoding="utf-8") as f:
                csv.writer(f).writerow(row.to_row(self.inverse_layers))
            logger.info(
                "epoch %d: loss %.5f train %.4f valid %.4f test %.4f",
                epoch, row.train_loss, row.train_err, row.valid_err, row.test_err,
            )

        with open(os.path.join(out_dir, TIMING_FILE), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "wall_seconds"])
            for epoch, seconds in enumerate(self.timings):
                writer.writerow([epoch, f"{seconds:.3f}"])

        summary = self.summary()
        with open(os.path.join(out_dir, FINAL_FILE), "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        checkpoint_path = os.path.join(out_dir, CHECKPOINT_FILE)
        if not self.save_checkpoint(checkpoint_path):
            raise CheckpointFormatError(f"Could not write checkpoint {checkpoint_path}")
        return summary

    # ==================== Reports ====================

    def summary(self) -> dict:
        """Best-valid test error, final test NLL and the final training loss."""
        cfg = self.config
        summary = {
            "experiment": cfg.experiment.value,
            "method": cfg.method.value,
            "seed": cfg.seed,
            "epochs": len(self.history),
        }
        if not self.history:
            return summary
        valid = [r.valid_err for r in self.history]
        best = int(np.nanargmin(valid)) if not np.all(np.isnan(valid)) else len(self.history) - 1
        summary.update({
            "best_epoch": best,
            "best_valid_err": _json_float(self.history[best].valid_err),
            "test_err_at_best_valid": _json_float(self.history[best].test_err),
            "final_test_err": _json_float(self.history[-1].test_err),
            "final_train_loss": _json_float(self.history[-1].train_loss),
        })
        if self.is_autoencoder:
            summary["final_test_recon_mse"] = summary["final_test_err"]
        else:
            _, nll = evaluate_split(self.model, self.dataset, "test", cfg.eval_samples, eval_stream(cfg.seed, "test"))
            summary["final_test_nll"] = _json_float(nll)
            summary["forward_params"] = self.model.forward_parameter_count()
        return summary

    def generate_report(self) -> str:
        """Human-readable table of the recorded epochs."""
        lines = [
            "=" * 66,
            f"TRAINING REPORT  {self.config.experiment.value} / {self.config.method.value}",
            "=" * 66,
            f"{'Epoch':>5} {'Loss':>12} {'Train':>10} {'Valid':>10} {'Test':>10} {'Sigma':>10}",
            "-" * 66,
        ]
        for r in self.history:
            lines.append(
                f"{r.epoch:>5} {r.train_loss:>12.5f} {r.train_err:>10.4f} "
                f"{r.valid_err:>10.4f} {r.test_err:>10.4f} {r.sigma:>10.4f}"
            )
        lines.append("-" * 66)
        return "\n".join(lines)

    # ==================== Utility ====================

    def save_checkpoint(self, path: str) -> bool:
        meta = {
            "seed": self.config.seed,
            "limit": self.config.limit,
            "experiment": self.config.experiment.value,
            "method": self.config.method.value,
            "valid_size": self.config.valid_size,
            "train_samples": self.config.train_samples,
            "eval_samples": self.config.eval_samples,
        }
        return CheckpointStorage(path).save(self.model, meta)


def _json_float(value: float) -> Optional[float]:
    return None if value is None or not np.isfinite(value) else float(value)
