"""
Evaluation metrics.

Forecasting: MSE and MAE over every predicted value (standardized space).
Classification: accuracy plus macro-averaged precision, recall and F1 over
all K classes, as percentages. A ratio with a zero denominator is 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from simmtm.exceptions import DimensionError
from simmtm.tensor import Array

FORECAST_METRICS = ("mse", "mae")
CLASSIFY_METRICS = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class MetricsReport:
    task: str
    split: str
    samples: int
    metrics: dict[str, float]

    def __getitem__(self, name: str) -> float:
        return self.metrics[name]

    def render(self) -> str:
        """key=value lines; reals with 17 significant digits."""
        lines = [f"task={self.task}", f"split={self.split}", f"samples={self.samples}"]
        lines.extend(f"{name}={value:.17g}" for name, value in self.metrics.items())
        return "\n".join(lines) + "\n"


def forecast_metrics(prediction: Array, target: Array, split: str = "test") -> MetricsReport:
    if prediction.shape != target.shape:
        raise DimensionError(f"prediction {prediction.shape} and target {target.shape} differ")
    error = prediction - target
    return MetricsReport(
        task="forecast",
        split=split,
        samples=int(prediction.shape[0]),
        metrics={"mse": float(np.mean(error * error)), "mae": float(np.mean(np.abs(error)))},
    )


def confusion_matrix(
    labels: npt.NDArray[np.int_],
    predictions: npt.NDArray[np.int_],
    classes: int,
) -> npt.NDArray[np.int_]:
    """counts[true, predicted]"""
    labels = np.asarray(labels, dtype=int)
    predictions = np.asarray(predictions, dtype=int)
    for name, values in (("labels", labels), ("predictions", predictions)):
        if values.size and (values.min() < 0 or values.max() >= classes):
            raise DimensionError(f"{name} must be class indices in [0, {classes}), got {values.min()}..{values.max()}")
    counts = np.zeros((classes, classes), dtype=int)
    np.add.at(counts, (labels, predictions), 1)
    return counts


def _ratio(numerator: Array, denominator: Array) -> Array:
    safe = np.where(denominator > 0, denominator, 1)
    return np.where(denominator > 0, numerator / safe, 0.0)


def classification_metrics(
    labels: npt.NDArray[np.int_],
    predictions: npt.NDArray[np.int_],
    classes: int,
    split: str = "test",
) -> MetricsReport:
    if labels.shape != predictions.shape:
        raise DimensionError(f"labels {labels.shape} and predictions {predictions.shape} differ")
    counts = confusion_matrix(labels, predictions, classes).astype(np.float64)
    hits = np.diag(counts)
    precision = _ratio(hits, counts.sum(axis=0))
    recall = _ratio(hits, counts.sum(axis=1))
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    return MetricsReport(
        task="classify",
        split=split,
        samples=int(labels.shape[0]),
        metrics={
            "accuracy": 100.0 * float(hits.sum() / counts.sum()),
            "precision": 100.0 * float(precision.mean()),
            "recall": 100.0 * float(recall.mean()),
            "f1": 100.0 * float(f1.mean()),
        },
    )
