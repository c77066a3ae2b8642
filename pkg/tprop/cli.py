"""
Command-line interface for tprop.

    tprop train           train one experiment from a JSON config
    tprop eval            score a checkpoint on a dataset split
    tprop verify          run the numerical checks and write verify_*.csv
    tprop export-filters  render auto-encoder filters as a PGM image
"""

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import (
    CheckpointFormatError,
    ConfigurationError,
    DataFormatError,
    DataNotFoundError,
    NumericalError,
    ParameterError,
    TPropError,
)
from .linalg import Rng
from .models import AutoEncoderParams
from .storage import KIND_AUTOENCODER, CheckpointStorage
from .train import Trainer, eval_stream, evaluate_split, read_dataset, reconstruction_error
from .verify import SUITES, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FORMAT = 4

FILTER_SIDE = 28
FILTER_GRID = 10
MID_GRAY = 128


def filter_grid(W: np.ndarray, units: np.ndarray, side: int = FILTER_SIDE, cols: int = FILTER_GRID) -> np.ndarray:
    """
    Tile the weight rows ``units`` of W as side x side images, each
    min-max normalized into 0..255. Constant rows render as mid-gray.
    """
    if W.shape[1] != side * side:
        raise CheckpointFormatError(f"Filters need {side * side} visible units, checkpoint has {W.shape[1]}")
    rows = -(-len(units) // cols)
    image = np.zeros((rows * side, cols * side), dtype=np.uint8)
    for k, unit in enumerate(units):
        w = W[unit]
        lo, hi = float(np.min(w)), float(np.max(w))
        if hi == lo:
            tile = np.full(side * side, MID_GRAY, dtype=np.uint8)
        else:
            tile = np.round(255.0 * (w - lo) / (hi - lo)).astype(np.uint8)
        r, c = divmod(k, cols)
        image[r * side:(r + 1) * side, c * side:(c + 1) * side] = tile.reshape(side, side)
    return image


def write_pgm(path: str, image: np.ndarray) -> None:
    """Binary (P5) grayscale PGM."""
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header + np.ascontiguousarray(image, dtype=np.uint8).tobytes())


class TPropCLI:
    """Parses arguments, runs one command and maps errors to exit codes."""

    def __init__(self):
        self.parser = self._build_parser()

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="tprop", description="Difference target propagation toolkit")
        parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        sub = parser.add_subparsers(dest="command", required=True)

        train = sub.add_parser("train", help="train one experiment")
        train.add_argument("--config", help="experiment config (JSON)")
        train.add_argument("--seed", type=int)
        train.add_argument("--out", dest="out_dir", help="output directory")
        train.add_argument("--limit", type=int, help="keep the first N samples of each data file")
        train.add_argument("--epochs", type=int)
        train.add_argument("--data-dir")

        ev = sub.add_parser("eval", help="evaluate a checkpoint")
        ev.add_argument("--checkpoint", required=True)
        ev.add_argument("--split", default="test", choices=["train", "valid", "test"])
        ev.add_argument("--eval-samples", type=int, help="probability passes averaged per input")
        ev.add_argument("--seed", type=int, help="evaluation seed (default: the training seed)")
        ev.add_argument("--limit", type=int, help="default: the limit the checkpoint was trained with")
        ev.add_argument("--data-dir")

        verify = sub.add_parser("verify", help="numerical checks of the method's guarantees")
        verify.add_argument("suite", choices=list(SUITES) + ["all"])
        verify.add_argument("--seed", type=int, default=0)
        verify.add_argument("--trials", type=int, default=20)
        verify.add_argument("--out", dest="out_dir", default=".")
        verify.add_argument("--eta-hat", type=float, help="top step size of the angle-bound suite")

        export = sub.add_parser("export-filters", help="write auto-encoder filters as a PGM grid")
        export.add_argument("--checkpoint", required=True)
        export.add_argument("--out", dest="out_path", default="filters.pgm")
        export.add_argument("--seed", type=int, default=0)
        return parser

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = self.parser.parse_args(argv)
        logging.basicConfig(
            level=getattr(logging, args.log_level),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        handlers = {
            "train": self.cmd_train,
            "eval": self.cmd_eval,
            "verify": self.cmd_verify,
            "export-filters": self.cmd_export_filters,
        }
        try:
            return handlers[args.command](args)
        except (ConfigurationError, ParameterError) as e:
            print(f"\n[!] Configuration error: {e}")
            return EXIT_USAGE
        except (DataNotFoundError, DataFormatError) as e:
            print(f"\n[!] Data error: {e}")
            return EXIT_DATA
        except CheckpointFormatError as e:
            print(f"\n[!] Checkpoint error: {e}")
            return EXIT_FORMAT
        except NumericalError as e:
            print(f"\n[!] Numerical failure: {e}")
            return EXIT_VERIFY_FAILED
        except TPropError as e:
            print(f"\n[!] {e}")
            return EXIT_USAGE

    # ==================== Commands ====================

    def cmd_train(self, args) -> int:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = config.with_overrides(
            seed=args.seed, out_dir=args.out_dir, limit=args.limit, epochs=args.epochs, data_dir=args.data_dir
        )
        trainer = Trainer(config)
        summary = trainer.run()
        print()
        print(trainer.generate_report())
        print(f"\n[✓] Wrote metrics.csv, final.json and the checkpoint to {config.out_dir}")
        if "test_err_at_best_valid" in summary:
            print(f"[i] Best valid epoch {summary['best_epoch']}: test {summary['test_err_at_best_valid']}")
        return EXIT_OK

    def cmd_eval(self, args) -> int:
        checkpoint = CheckpointStorage(args.checkpoint).load()
        meta = checkpoint.meta
        logger.debug("Loaded %s checkpoint %s", checkpoint.kind, args.checkpoint)
        try:
            config = ExperimentConfig(
                experiment=meta.get("experiment", "mnist_mlp"),
                method=meta.get("method", "dtp"),
                act="relu" if meta.get("experiment") == "mnist_relu" else "tanh",
            )
        except ConfigurationError as e:
            raise CheckpointFormatError(f"Checkpoint metadata names no valid run: {e}") from e
        config = config.with_overrides(data_dir=args.data_dir)
        limit = args.limit if args.limit is not None else meta.get("limit")
        dataset = read_dataset(config.experiment, config.resolve_data_dir(), limit, meta.get("valid_size"))

        model = checkpoint.model
        n_inputs = model.n_visible if isinstance(model, AutoEncoderParams) else model.f(1).in_dim
        if n_inputs != dataset.dim:
            raise CheckpointFormatError(f"Checkpoint expects {n_inputs} inputs, dataset has {dataset.dim}")

        print(f"\n--- Evaluation: {args.checkpoint} ({args.split}) ---")
        if checkpoint.kind == KIND_AUTOENCODER:
            mse = reconstruction_error(model, dataset, args.split)
            print(f"Reconstruction MSE: {mse!r}")
            return EXIT_OK

        default_samples = meta.get("train_samples", 1) if args.split == "train" else meta.get("eval_samples", 1)
        samples = args.eval_samples if args.eval_samples is not None else default_samples
        if samples < 1:
            raise ParameterError(f"eval samples must be at least 1, got {samples}")
        seed = args.seed if args.seed is not None else meta.get("seed", 0)
        error, nll = evaluate_split(model, dataset, args.split, samples, eval_stream(seed, args.split))
        print(f"Samples:    {samples}")
        print(f"Error rate: {error!r}")
        print(f"NLL:        {nll!r}")
        return EXIT_OK

    def cmd_verify(self, args) -> int:
        results = run_suite(args.suite, args.seed, args.trials, args.out_dir, args.eta_hat)
        print(f"\n{'Suite':<12} {'Rows':>6}  {'Result':<8} File")
        print("-" * 60)
        for result in results:
            status = "pass" if result.passed else "FAIL"
            print(f"{result.suite:<12} {len(result.rows):>6}  {status:<8} {result.path}")
        print("-" * 60)
        failures = [(r.suite, f) for r in results for f in r.failures]
        for suite, message in failures:
            print(f"[!] {suite}: {message}")
        if failures:
            return EXIT_VERIFY_FAILED
        print("[✓] All checks passed")
        return EXIT_OK

    def cmd_export_filters(self, args) -> int:
        checkpoint = CheckpointStorage(args.checkpoint).load()
        if checkpoint.kind != KIND_AUTOENCODER:
            raise CheckpointFormatError(f"Filters need an auto-encoder checkpoint, got '{checkpoint.kind}'")
        ae = checkpoint.model
        n_units = min(FILTER_GRID * FILTER_GRID, ae.n_hidden)
        units = Rng(args.seed).split("filters").choice(ae.n_hidden, n_units)
        image = filter_grid(ae.W, units)
        write_pgm(args.out_path, image)
        print(f"\n[✓] Wrote {n_units} filters to {args.out_path}")
        return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the CLI."""
    return TPropCLI().run(argv)


if __name__ == "__main__":
    sys.exit(main())
