"""ICBHI challenge scoring.

Specificity is the fraction of Normal cycles predicted Normal; sensitivity
is the fraction of anomalous cycles predicted as their exact anomalous
class; the ICBHI score is the mean of the two.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from respkit.dataio import Label
from respkit.errors import ContractError

N_CLASSES = 4


@dataclass
class ConfusionCounts:
    """4x4 counts, rows = true class, cols = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (N_CLASSES, N_CLASSES) or np.any(self.counts < 0):
            raise ContractError("confusion counts must be a nonnegative 4x4 matrix")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    spec: float
    sen: float
    icb: float
    counts: ConfusionCounts

    def to_json(self) -> str:
        """Full-precision machine-readable report."""
        return json.dumps(
            {
                "spec": self.spec,
                "sen": self.sen,
                "icb": self.icb,
                "confusion": self.counts.counts.tolist(),
            },
            indent=2,
        )

    def to_markdown(self) -> str:
        """One-decimal 'Spec./Sen./ICB.' table row."""
        return (
            "| Spec. | Sen. | ICB. |\n"
            "|-------|------|------|\n"
            f"| {self.spec:.1f} | {self.sen:.1f} | {self.icb:.1f} |"
        )


def confusion(true_labels, predicted_labels) -> ConfusionCounts:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    if true_labels.shape != predicted_labels.shape or true_labels.ndim != 1:
        raise ContractError("label lists must be 1-D and of equal length")
    for arr in (true_labels, predicted_labels):
        if arr.size and (arr.min() < 0 or arr.max() >= N_CLASSES):
            raise ContractError("labels must be in 0..3")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (true_labels, predicted_labels), 1)
    return ConfusionCounts(counts)


def icbhi_scores(counts: ConfusionCounts) -> MetricsReport:
    c = counts.counts
    normal = int(Label.NORMAL)
    n_normal = c[normal].sum()
    anomalous_rows = [i for i in range(N_CLASSES) if i != normal]
    n_anomalous = c[anomalous_rows].sum()
    if n_normal == 0 or n_anomalous == 0:
        raise ContractError(
            "scores need at least one Normal and one anomalous cycle"
        )
    spec = 100.0 * c[normal, normal] / n_normal
    sen = 100.0 * sum(c[i, i] for i in anomalous_rows) / n_anomalous
    return MetricsReport(spec=spec, sen=sen, icb=(spec + sen) / 2.0, counts=counts)
