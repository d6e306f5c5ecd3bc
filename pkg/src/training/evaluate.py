"""
Evaluation Module

Scores a trained network on held-out scenes: plain accuracy and mean IoU,
then for every requested uncertainty measure the accuracy over the points
it marks certain and the share of points it drops.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.autodiff.rng import RngStream
from src.core.errors import ContractError
from src.data.blocks import assemble_predictions, evaluation_blocks
from src.data.models import BLOCK_POINTS, PointCloud
from src.evaluation.metrics import (ConfusionMatrix, accuracy, filtered_metrics, mean_iou, metrics_frame,
                                    metrics_row)
from src.inference.sampling import SampleStack, mc_forward, predict
from src.model.arch import SegNet
from src.storage.atomic import AtomicFile
from src.uncertainty.export import write_uncertainty_ply
from src.uncertainty.measures import UncertaintyReport, resolve_measures, threshold_sweep, uncertainty_report

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

PLAIN_MEASURE = "none"


@dataclass
class SceneResult:
    """Predictions and uncertainty reports for one scene."""
    cloud: PointCloud
    stack: SampleStack
    preds: np.ndarray
    confusion: ConfusionMatrix
    reports: Dict[str, UncertaintyReport] = field(default_factory=dict)


def predict_cloud(net: SegNet, cloud: PointCloud, K: int, rng: RngStream, threads: int = 1,
                  block_size: float = 1.0, batch_size: int = 4) -> SampleStack:
    """Per-original-point SampleStack for a whole cloud."""
    blocks = evaluation_blocks(cloud, rng.split(0), block_size)
    stack = mc_forward(net, blocks, K, rng.split(1), threads=threads, batch_size=batch_size)
    per_block = stack.split([BLOCK_POINTS] * len(blocks))
    return assemble_predictions(cloud, blocks, per_block)


class Evaluator:
    """Runs uncertainty-filtered evaluation over a list of scenes."""

    def __init__(self, net: SegNet, K: int, measures: Union[str, Sequence[str]] = "all",
                 sigmas: float = 2.0, sweep: Optional[Sequence[float]] = None, threads: int = 1,
                 block_size: float = 1.0, model_name: Optional[str] = None):
        self.net = net
        self.K = 1 if net.cfg.regime == "frequentist" else K
        if self.K < 1:
            raise ContractError(f"K must be >= 1, got {K}")
        if isinstance(measures, str):
            self.measures = resolve_measures(measures, self.K)
        else:
            self.measures = [m for requested in measures for m in resolve_measures(requested, self.K)]
        self.sigmas = sigmas
        self.sweep = list(sweep or [])
        self.threads = threads
        self.block_size = block_size
        self.model_name = model_name or net.cfg.regime
        self.atomic = AtomicFile()

    def set_logger(self, custom_logger):
        """Set a custom logger for the evaluator."""
        global logger
        logger = custom_logger
        self.atomic.set_logger(custom_logger)

    def evaluate_scene(self, cloud: PointCloud, rng: RngStream) -> SceneResult:
        if cloud.labels is None:
            raise ContractError(f"Scene {cloud.source_id} has no labels to evaluate against")
        cloud.check_labels(self.net.num_classes)
        stack = predict_cloud(self.net, cloud, self.K, rng, self.threads, self.block_size)
        preds = predict(stack)
        confusion = ConfusionMatrix.from_labels(cloud.labels, preds, self.net.num_classes)
        reports = {measure: uncertainty_report(stack, measure, self.sigmas) for measure in self.measures}
        return SceneResult(cloud, stack, preds, confusion, reports)

    def rows_for(self, result: SceneResult) -> List[Dict[str, object]]:
        room = result.cloud.source_id
        cm = result.confusion
        plain = metrics_row(room, self.model_name, PLAIN_MEASURE, cm, accuracy(cm), 0.0)
        rows = [plain]
        logger.info(f"📊 {room}: accuracy={plain['accuracy']:.4f} mIoU={plain['miou']:.4f}")
        for measure, report in result.reports.items():
            filtered_accuracy, drop_rate = filtered_metrics(result.cloud.labels, result.preds, report.certain)
            rows.append(metrics_row(room, self.model_name, measure, cm, filtered_accuracy, drop_rate))
            logger.info(f"📊 {room} [{measure}]: filtered_accuracy={filtered_accuracy:.4f} "
                        f"drop_rate={drop_rate:.2%}")
            if self.sweep and report.values is not None:
                for entry in threshold_sweep(report.values, result.cloud.labels, result.preds, self.sweep):
                    rows.append(metrics_row(room, self.model_name, f"{measure}@{entry['sigmas']:g}", cm,
                                            entry['filtered_accuracy'], entry['drop_rate']))
        return rows

    def evaluate(self, scenes: Sequence[PointCloud], rng: RngStream,
                 export_dir: Optional[Path] = None) -> "EvaluationResult":
        """
        Evaluate every scene; scene i uses rng.split(i).

        Args:
            scenes: Labeled test clouds
            rng: Parent stream
            export_dir: Directory for per-scene, per-measure uncertainty maps

        Returns:
            EvaluationResult with the metrics table and per-scene results
        """
        if not scenes:
            raise ContractError("Evaluation needs at least one scene")
        logger.info(f"🚀 Evaluating {self.model_name} on {len(scenes)} scenes with K={self.K}, "
                    f"measures={self.measures}")
        rows, results = [], []
        for i, cloud in enumerate(scenes):
            result = self.evaluate_scene(cloud, rng.split(i))
            rows.extend(self.rows_for(result))
            results.append(result)
            if export_dir is not None:
                for measure, report in result.reports.items():
                    write_uncertainty_ply(Path(export_dir) / f"{cloud.source_id}_{measure}.ply",
                                          cloud, report.certain, result.preds)

        total = ConfusionMatrix.merge(r.confusion for r in results)
        logger.info(f"✅ Overall accuracy={accuracy(total):.4f} mIoU={mean_iou(total):.4f}")
        return EvaluationResult(metrics_frame(rows), results)

    def write_metrics(self, path: Path, table: pd.DataFrame) -> Path:
        return self.atomic.atomic_csv_update(path, table, float_format="%.6f")


@dataclass
class EvaluationResult:
    table: pd.DataFrame
    scenes: List[SceneResult]

    def reports(self) -> Dict[str, Dict[str, UncertaintyReport]]:
        return {result.cloud.source_id: result.reports for result in self.scenes}


def evaluate(net: SegNet, scenes: Sequence[PointCloud], K: int, measures: Union[str, Sequence[str]],
             sigmas: float, rng: RngStream, csv_path: Optional[Path] = None,
             sweep: Optional[Sequence[float]] = None, threads: int = 1) -> EvaluationResult:
    """Evaluate a network and optionally write the metrics CSV."""
    evaluator = Evaluator(net, K, measures, sigmas, sweep, threads)
    result = evaluator.evaluate(scenes, rng)
    if csv_path is not None:
        evaluator.write_metrics(Path(csv_path), result.table)
    return result
