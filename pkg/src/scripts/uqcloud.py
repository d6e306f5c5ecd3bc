#!/usr/bin/env python3
"""
Uncertainty-aware Point Cloud Segmentation CLI

Generates synthetic scenes, trains frequentist, MC-dropout and Bayesian
segmentation networks, evaluates them with uncertainty filtering and writes
prediction and uncertainty maps.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

# Add the project root to the Python path
project_root = Path(__file__).parent.parent.parent
sys.path.append(str(project_root))

from src.autodiff.rng import RngStream
from src.core.config import Config, load_config_file
from src.core.errors import UQCloudError
from src.core.logging import LoggerManager, timed_command
from src.data.blocks import training_blocks
from src.data.cloud_io import CloudReader, list_clouds, write_ply
from src.data.models import PointCloud
from src.data.synthgen import SceneSpec, generate_scenes, train_test_split
from src.inference.sampling import predict
from src.model.arch import REGIMES, SegNet
from src.model.mc_dropout import PRESETS
from src.storage.atomic import write_csv
from src.storage.checkpoint import load_checkpoint, load_stack, save_stack
from src.training.evaluate import Evaluator, predict_cloud
from src.training.trainer import TrainConfig, Trainer
from src.uncertainty.export import (quantile_table, write_points_csv, write_prediction_ply, write_quantiles,
                                    write_uncertainty_ply)
from src.uncertainty.measures import MEASURES, check_measure, uncertainty_report

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

DEFAULT_SCENES = 8
DEFAULT_TEST_FRACTION = 0.25
DATA_STREAM, TRAIN_STREAM = 0, 1


def setup_components(config: Config, command: str = "-") -> Tuple[logging.Logger, LoggerManager, CloudReader]:
    """
    Set up logging and shared components with the given configuration.

    Args:
        config: Configuration object
        command: Subcommand stamped on every log line

    Returns:
        Tuple of (logger, logger_manager, cloud_reader)
    """
    global logger
    log_level = getattr(logging, config.log_level.upper(), logging.INFO)
    logger_manager = LoggerManager(
        "uqcloud",
        command=command,
        log_dir=config.log_dir,
        console_level=log_level,
        file_level=logging.DEBUG
    )
    logger_manager.route("src")
    logger = logger_manager.get_logger()

    if config.debug_mode:
        logger_manager.set_debug_mode(True)

    config.set_logger(logger)
    reader = CloudReader()
    reader.set_logger(logger)
    return logger, logger_manager, reader


def float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Flat key = value file; flags override its values")
    common.add_argument("--threads", type=int, help="Worker threads for Monte-Carlo sampling")
    common.add_argument("--seed", type=int, help="Seed of the root random stream")

    parser = argparse.ArgumentParser(prog="uqcloud", description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    synth = commands.add_parser("synth", parents=[common], help="Generate labeled synthetic scenes")
    synth.add_argument("--spec", help="Scene description (key = value)")
    synth.add_argument("--out", required=True, help="Output directory")

    train = commands.add_parser("train", parents=[common], help="Train a segmentation network")
    train.add_argument("--model", required=True, choices=REGIMES)
    train.add_argument("--data", required=True, help="Scene directory (uses DATA/train when present)")
    train.add_argument("--out", required=True, help="Final checkpoint path")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--lr", type=float, help="Initial learning rate (regime default when omitted)")
    train.add_argument("--decay-factor", type=float)
    train.add_argument("--decay-every", type=int)
    train.add_argument("--momentum", type=float)
    train.add_argument("--drop-prob", type=float)
    train.add_argument("--weight-decay", type=float)
    train.add_argument("--dropout-preset", choices=sorted(PRESETS))
    train.add_argument("--sigma-w", type=float)
    train.add_argument("--sigma-b", type=float)
    train.add_argument("--checkpoint-every", type=int)
    train.add_argument("--num-classes", type=int, help="Class count (default: largest label + 1)")
    train.add_argument("--block-size", type=float)
    train.add_argument("--stride", type=float)

    evaluate = commands.add_parser("evaluate", parents=[common], help="Score a checkpoint on test scenes")
    evaluate.add_argument("--ckpt", required=True)
    evaluate.add_argument("--data", required=True, help="Scene directory (uses DATA/test when present)")
    evaluate.add_argument("--k", type=int, help="Monte-Carlo samples K")
    evaluate.add_argument("--measure", choices=MEASURES + ("all",))
    evaluate.add_argument("--threshold-sigma", type=float)
    evaluate.add_argument("--csv", help="Metrics CSV path (printed to stdout when omitted)")
    evaluate.add_argument("--sweep", type=float_list, help="Extra threshold multipliers, e.g. 1,2,3")
    evaluate.add_argument("--export-dir", help="Directory for per-scene uncertainty maps")
    evaluate.add_argument("--block-size", type=float)

    predict_cmd = commands.add_parser("predict", parents=[common], help="Predict classes of one cloud")
    predict_cmd.add_argument("--ckpt", required=True)
    predict_cmd.add_argument("--cloud", required=True)
    predict_cmd.add_argument("--out", required=True, help="Prediction PLY")
    predict_cmd.add_argument("--k", type=int)
    predict_cmd.add_argument("--stack-out", help="Write the per-point sample stack here")
    predict_cmd.add_argument("--block-size", type=float)

    uncertainty = commands.add_parser("uncertainty", parents=[common], help="Write an uncertainty map")
    uncertainty.add_argument("--ckpt", required=True)
    uncertainty.add_argument("--cloud", required=True)
    uncertainty.add_argument("--measure", required=True, choices=MEASURES)
    uncertainty.add_argument("--out", required=True, help="Uncertainty PLY (red uncertain, black certain)")
    uncertainty.add_argument("--k", type=int)
    uncertainty.add_argument("--threshold-sigma", type=float)
    uncertainty.add_argument("--csv", help="Per-point CSV")
    uncertainty.add_argument("--stack-out")
    uncertainty.add_argument("--block-size", type=float)

    export = commands.add_parser("export", parents=[common], help="Quantiles of one point's samples")
    export.add_argument("--stack", required=True)
    export.add_argument("--point", required=True, type=int)
    export.add_argument("--quantiles", help="Output CSV (printed to stdout when omitted)")

    return parser


class Settings:
    """Flag > config file > environment > default lookups for one invocation."""

    def __init__(self, args: argparse.Namespace, config: Config):
        self.args = args
        self.config = config
        self.file_values = load_config_file(args.config)

    def get(self, key: str, default=None, cast=str):
        flag_value = getattr(self.args, key.replace('-', '_'), None)
        return self.config.resolve(key, flag_value, self.file_values, default, cast)

    @property
    def seed(self) -> int:
        return self.get("seed", self.config.seed, int)

    @property
    def threads(self) -> int:
        return max(1, self.get("threads", self.config.threads, int))

    @property
    def k(self) -> int:
        return self.get("k", self.config.mc_samples, int)


def scene_dir(data: Path, split: str) -> Path:
    """DATA/<split> when it exists, else DATA itself."""
    nested = data / split
    return nested if nested.is_dir() else data


def load_scenes(reader: CloudReader, directory: Path) -> List[PointCloud]:
    paths = list_clouds(directory)
    if not paths:
        raise UQCloudError(f"No point clouds (.ply, .txt, .xyz, .pts) in {directory}")
    scenes = [reader.load(path) for path in paths]
    logger.info(f"📊 Loaded {len(scenes)} clouds ({sum(len(s) for s in scenes)} points) from {directory}")
    return scenes


def effective_k(net: SegNet, k: int) -> int:
    return 1 if net.cfg.regime == "frequentist" else k


@timed_command(logging.getLogger(__name__))
def cmd_synth(args, settings: Settings, reader: CloudReader) -> int:
    values: Dict[str, str] = load_config_file(args.spec) if args.spec else {}
    if args.seed is not None or 'seed' not in values:
        values['seed'] = str(settings.seed)
    spec = SceneSpec.from_dict(values)
    count = int(values.get('scenes', DEFAULT_SCENES))
    fraction = float(values.get('test_fraction', DEFAULT_TEST_FRACTION))

    scenes = generate_scenes(spec, count)
    train_scenes, test_scenes = train_test_split(scenes, fraction, spec.seed)
    out = Path(args.out)
    rows = []
    for split, group in (("train", train_scenes), ("test", test_scenes)):
        for cloud in group:
            write_ply(out / split / f"{cloud.source_id}.ply", cloud.xyz, cloud.rgb, cloud.labels)
            counts = cloud.class_counts(spec.num_classes)
            row = {'scene': cloud.source_id, 'split': split, 'points': len(cloud)}
            row.update({name: int(c) for name, c in zip(spec.classes, counts)})
            rows.append(row)
    write_csv(out / "manifest.csv", pd.DataFrame(rows))
    logger.info(f"✅ Wrote {len(train_scenes)} training and {len(test_scenes)} test scenes to {out}")
    return 0


@timed_command(logging.getLogger(__name__))
def cmd_train(args, settings: Settings, reader: CloudReader) -> int:
    scenes = load_scenes(reader, scene_dir(Path(args.data), "train"))
    num_classes = settings.get("num-classes", None, int)
    if num_classes is None:
        labeled = [s.labels for s in scenes if s.labels is not None]
        if len(labeled) != len(scenes):
            raise UQCloudError("Every training cloud must carry labels")
        num_classes = int(max(labels.max() for labels in labeled)) + 1

    cfg = TrainConfig.for_regime(
        args.model,
        epochs=settings.get("epochs", None, int),
        batch_size=settings.get("batch-size", None, int),
        lr0=settings.get("lr", None, float),
        decay_factor=settings.get("decay-factor", None, float),
        decay_every=settings.get("decay-every", None, int),
        momentum=settings.get("momentum", None, float),
        drop_prob=settings.get("drop-prob", None, float),
        weight_decay=settings.get("weight-decay", None, float),
        dropout_preset=settings.get("dropout-preset", None),
        sigma_w=settings.get("sigma-w", None, float),
        sigma_b=settings.get("sigma-b", None, float),
        checkpoint_every=settings.get("checkpoint-every", None, int),
        seed=settings.seed,
    )
    block_size = settings.get("block-size", 1.0, float)
    stride = settings.get("stride", block_size, float)

    root = RngStream(settings.seed)
    data_rng = root.split(DATA_STREAM)
    blocks = []
    for i, cloud in enumerate(scenes):
        cloud.check_labels(num_classes)
        blocks.extend(training_blocks(cloud, data_rng.split(i), block_size, stride))
    logger.info(f"📊 {len(blocks)} training blocks over {num_classes} classes")

    trainer = Trainer(cfg)
    trainer.set_logger(logger)
    result = trainer.train(blocks, root.split(TRAIN_STREAM), num_classes, out=Path(args.out))
    final = result.history.iloc[-1]
    logger.info(f"✅ Final loss={final['loss']:.5f} train_acc={final['train_accuracy']:.4f}")
    return 0


@timed_command(logging.getLogger(__name__))
def cmd_evaluate(args, settings: Settings, reader: CloudReader) -> int:
    net, metadata = load_checkpoint(args.ckpt)
    scenes = load_scenes(reader, scene_dir(Path(args.data), "test"))
    sweep = args.sweep if args.sweep is not None else float_list(settings.get("sweep", ""))
    evaluator = Evaluator(
        net,
        effective_k(net, settings.k),
        measures=settings.get("measure", "all"),
        sigmas=settings.get("threshold-sigma", 2.0, float),
        sweep=sweep,
        threads=settings.threads,
        block_size=settings.get("block-size", 1.0, float),
        model_name=Path(args.ckpt).stem,
    )
    evaluator.set_logger(logger)
    export_dir = settings.get("export-dir", None)
    result = evaluator.evaluate(scenes, RngStream(settings.seed), Path(export_dir) if export_dir else None)
    csv_path = settings.get("csv", None)
    if csv_path:
        evaluator.write_metrics(Path(csv_path), result.table)
        logger.info(f"✅ Wrote {len(result.table)} metric rows to {csv_path}")
    else:
        sys.stdout.write(result.table.to_csv(index=False, float_format="%.6f"))
    return 0


def _predict(args, settings: Settings, reader: CloudReader):
    net, _ = load_checkpoint(args.ckpt)
    cloud = reader.load(args.cloud)
    k = effective_k(net, settings.k)
    if getattr(args, "measure", None):
        check_measure(args.measure, k)
    stack = predict_cloud(net, cloud, k, RngStream(settings.seed), settings.threads,
                          settings.get("block-size", 1.0, float))
    if args.stack_out:
        save_stack(args.stack_out, stack)
        logger.info(f"✅ Wrote {stack.K}×{stack.P}×{stack.m} sample stack to {args.stack_out}")
    return cloud, stack, predict(stack)


@timed_command(logging.getLogger(__name__))
def cmd_predict(args, settings: Settings, reader: CloudReader) -> int:
    cloud, _, preds = _predict(args, settings, reader)
    write_prediction_ply(args.out, cloud, preds)
    if cloud.labels is not None:
        logger.info(f"📊 Point accuracy against stored labels: {(preds == cloud.labels).mean():.4f}")
    return 0


@timed_command(logging.getLogger(__name__))
def cmd_uncertainty(args, settings: Settings, reader: CloudReader) -> int:
    cloud, stack, preds = _predict(args, settings, reader)
    report = uncertainty_report(stack, args.measure, settings.get("threshold-sigma", 2.0, float))
    write_uncertainty_ply(args.out, cloud, report.certain, preds)
    if args.csv:
        write_points_csv(args.csv, cloud, preds, report)
    logger.info(f"📊 {args.measure}: {report.drop_rate:.2%} of {len(cloud)} points marked uncertain")
    return 0


def cmd_export(args, settings: Settings, reader: CloudReader) -> int:
    stack = load_stack(args.stack)
    if args.quantiles:
        write_quantiles(args.quantiles, stack, args.point)
    else:
        sys.stdout.write(quantile_table(stack, args.point).to_csv(index=False, float_format="%.6f"))
    return 0


COMMANDS = {
    'synth': cmd_synth,
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'predict': cmd_predict,
    'uncertainty': cmd_uncertainty,
    'export': cmd_export,
}


def run_log_path(args) -> Optional[Path]:
    """Where this run's log goes: next to its main artifact, if it writes one."""
    if args.command == "synth":
        return Path(args.out) / "synth.log"
    target = getattr(args, "out", None) or getattr(args, "csv", None)
    return Path(target).with_suffix(".log") if target else None


def run(argv: Optional[Sequence[str]] = None, env_file: Optional[str] = None) -> int:
    """
    Run one CLI invocation.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])
        env_file: Optional .env file for Config

    Returns:
        Exit code: 0 success, 1 runtime error, 2 usage error
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    start_time = time.time()
    config = Config(env_file)
    logger, logger_manager, reader = setup_components(config, args.command)
    code = 1
    try:
        log_path = run_log_path(args)
        if log_path is not None:
            logger_manager.attach_run_log(log_path)
        logger_manager.log_run_start({k: v for k, v in vars(args).items() if v is not None and k != "command"})
        logger.debug(f"📋 Configuration: {config}")
        settings = Settings(args, config)
        code = COMMANDS[args.command](args, settings, reader)
        return code
    except (UQCloudError, OSError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return 1
    except Exception as e:
        logger.exception(f"❌ Unexpected error in {args.command}: {e}")
        return 1
    finally:
        logger_manager.log_run_end(code, time.time() - start_time)
        logger_manager.close()


def main() -> int:
    """Main function."""
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
