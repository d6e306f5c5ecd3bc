"""
Uncertainty Measures Module

Per-point uncertainty measures computed from a SampleStack, and the rules
that turn them into certain/uncertain decisions.

Entropies are in nats with 0 * log(0) taken as 0. The epistemic part is the
predictive entropy minus the aleatoric (expected) entropy, i.e. the mutual
information between prediction and weights.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.core.errors import ConsistencyError, ContractError, IncompatibleMeasureError
from src.evaluation.metrics import filtered_metrics
from src.inference.sampling import SampleStack, predict, predictive_mean

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

MEASURES = ("predictive", "aleatoric", "epistemic", "variance", "credible")
EPISTEMIC_TOLERANCE = 1e-9
MIN_SAMPLES = {"variance": 2, "credible": 20}


def _entropy(probs: np.ndarray) -> np.ndarray:
    safe = np.where(probs > 0, probs, 1.0)
    return -np.sum(np.where(probs > 0, probs * np.log(safe), 0.0), axis=-1)


def u_pred(stack: SampleStack) -> np.ndarray:
    """Entropy of the predictive mean."""
    return _entropy(predictive_mean(stack))


def u_alea(stack: SampleStack) -> np.ndarray:
    """Mean over samples of the per-sample entropy."""
    return _entropy(stack.values).mean(axis=0)


def u_epi(stack: SampleStack) -> np.ndarray:
    """
    Predictive minus aleatoric entropy.

    Rounding can push the difference slightly below zero; values in
    [-1e-9, 0) are clamped to 0.

    Raises:
        ConsistencyError: If any value falls below -1e-9
    """
    if stack.K == 1:
        return np.zeros(stack.P)
    diff = u_pred(stack) - u_alea(stack)
    if np.any(diff < -EPISTEMIC_TOLERANCE):
        worst = float(diff.min())
        raise ConsistencyError(f"Epistemic uncertainty is negative ({worst:.3e}); sample stack is inconsistent")
    return np.maximum(diff, 0.0)


def u_var(stack: SampleStack) -> np.ndarray:
    """
    Unbiased sample variance (ddof=1) over K of the predicted class probability.

    Raises:
        ContractError: If K < 2
    """
    if stack.K < 2:
        raise IncompatibleMeasureError(f"Variance needs K >= 2 samples, got K={stack.K}")
    per_class = stack.values.var(axis=0, ddof=1)
    predicted = predict(stack)
    return np.take_along_axis(per_class, predicted[:, None], axis=1)[:, 0]


def credible_bounds(stack: SampleStack, level: float = 0.95):
    """Per class (lower, upper) percentile bounds over K, each P×m."""
    if not 0.0 < level < 1.0:
        raise ContractError(f"Credible level must lie in (0, 1), got {level}")
    tail = 100.0 * (1.0 - level) / 2.0
    lower = np.percentile(stack.values, tail, axis=0, method="linear")
    upper = np.percentile(stack.values, 100.0 - tail, axis=0, method="linear")
    return lower, upper


def credible_overlap(stack: SampleStack, level: float = 0.95) -> np.ndarray:
    """
    Certain mask from credible-interval overlap.

    A point is certain iff the lower bound of its predicted class is
    strictly above the upper bound of every other class.

    Raises:
        ContractError: If K < 20
    """
    if stack.K < MIN_SAMPLES["credible"]:
        raise IncompatibleMeasureError(
            f"Credible intervals need K >= {MIN_SAMPLES['credible']} samples, got K={stack.K}")
    lower, upper = credible_bounds(stack, level)
    predicted = predict(stack)
    rows = np.arange(stack.P)
    predicted_lower = lower[rows, predicted]
    others = upper.copy()
    others[rows, predicted] = -np.inf
    return predicted_lower > others.max(axis=1)


def threshold_filter(values: np.ndarray, sigmas: float = 2.0) -> np.ndarray:
    """
    Certain mask: value <= mean + sigmas * std over the evaluated point set.

    The standard deviation is the sample (ddof=1) estimate. Values that equal
    the limit up to rounding count as certain.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ContractError(f"threshold_filter needs at least 2 values, got {values.size}")
    if np.isposinf(sigmas):
        return np.ones(values.shape, dtype=bool)
    limit = values.mean() + sigmas * values.std(ddof=1)
    return (values <= limit) | np.isclose(values, limit, rtol=1e-12, atol=0.0)


def measure_values(stack: SampleStack, measure: str) -> Optional[np.ndarray]:
    """Per-point values of a measure; None for the boolean-only credible rule."""
    if measure == "predictive":
        return u_pred(stack)
    if measure == "aleatoric":
        return u_alea(stack)
    if measure == "epistemic":
        return u_epi(stack)
    if measure == "variance":
        return u_var(stack)
    if measure == "credible":
        return None
    raise ContractError(f"Unknown measure '{measure}'; choose from {MEASURES}")


def check_measure(measure: str, K: int):
    """Raise IncompatibleMeasureError when K is too small for the measure."""
    if measure not in MEASURES:
        raise ContractError(f"Unknown measure '{measure}'; choose from {MEASURES}")
    needed = MIN_SAMPLES.get(measure, 1)
    if K < needed:
        raise IncompatibleMeasureError(f"Measure '{measure}' needs K >= {needed} samples, got K={K}")


def resolve_measures(requested: str, K: int) -> List[str]:
    """
    Expand a measure selection into the list to compute.

    "all" silently narrows to the measures K supports (with a warning); an
    explicitly named measure that K cannot support is an error.
    """
    if requested != "all":
        check_measure(requested, K)
        return [requested]
    usable = [m for m in MEASURES if K >= MIN_SAMPLES.get(m, 1)]
    skipped = [m for m in MEASURES if m not in usable]
    if skipped:
        logger.warning(f"⚠️ Skipping measures {skipped}: K={K} is too small")
    return usable


@dataclass
class UncertaintyReport:
    """Values, decisions and threshold for one measure."""
    measure: str
    values: Optional[np.ndarray]
    certain: np.ndarray
    threshold: Optional[float] = None
    sigmas: Optional[float] = None
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def drop_rate(self) -> float:
        return float(1.0 - self.certain.mean()) if self.certain.size else 0.0


def uncertainty_report(stack: SampleStack, measure: str, sigmas: float = 2.0,
                       level: float = 0.95) -> UncertaintyReport:
    """Compute one measure and its certain mask."""
    check_measure(measure, stack.K)
    if measure == "credible":
        return UncertaintyReport(measure, None, credible_overlap(stack, level), extras={'level': level})
    values = measure_values(stack, measure)
    certain = threshold_filter(values, sigmas)
    threshold = float(values.mean() + sigmas * values.std(ddof=1)) if np.isfinite(sigmas) else float("inf")
    return UncertaintyReport(measure, values, certain, threshold, sigmas)


def threshold_sweep(values: np.ndarray, labels: np.ndarray, preds: np.ndarray,
                    sigmas_list: Sequence[float]) -> List[Dict[str, float]]:
    """
    Filtered accuracy and drop rate for several threshold multipliers.

    Returns:
        One dict per multiplier with keys sigmas, filtered_accuracy, drop_rate
    """
    rows = []
    for sigmas in sigmas_list:
        certain = threshold_filter(values, sigmas)
        filtered_accuracy, drop_rate = filtered_metrics(labels, preds, certain)
        rows.append({'sigmas': float(sigmas), 'filtered_accuracy': filtered_accuracy, 'drop_rate': drop_rate})
    return rows
