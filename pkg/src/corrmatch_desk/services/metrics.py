"""Metrics-Service - mIoU und Verhaeltniszahlen zu Schwelle und Pseudo-Labels.

Alle Funktionen nehmen Karten beliebiger Form; ein ganzer Batch laesst sich als
gestapeltes Array uebergeben und zaehlt dann als eine Pixelmenge.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..models.step_result import RATIO_FIELDS
from ..numeric.ops import IGNORE
from ..numeric.tensor import ShapeError


class ConfusionMatrix:
    """Akkumuliert eine K x K Konfusionsmatrix (Zeile = Wahrheit, Spalte = Vorhersage)."""

    def __init__(self, num_classes: int) -> None:
        self.num_classes = num_classes
        self.matrix = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, pred: ArrayLike, gt: ArrayLike) -> None:
        """Zaehlt ein Paar; Pixel mit IGNORE in ``gt`` fallen heraus.

        Raises:
            ShapeError: Bei unterschiedlichen Formen.
        """
        p = np.asarray(pred).astype(np.int64)
        g = np.asarray(gt).astype(np.int64)
        if p.shape != g.shape:
            raise ShapeError(f"miou: Formen {p.shape} und {g.shape} passen nicht zusammen")
        keep = (g != IGNORE) & (g >= 0) & (g < self.num_classes) & (p >= 0) & (p < self.num_classes)
        k = self.num_classes
        self.matrix += np.bincount(k * g[keep] + p[keep], minlength=k * k).reshape(k, k)

    def iou_per_class(self) -> NDArray[np.float64]:
        """IoU je Klasse; NaN fuer Klassen, die weder vorhergesagt noch vorhanden sind."""
        intersection = np.diag(self.matrix).astype(np.float64)
        union = self.matrix.sum(axis=0) + self.matrix.sum(axis=1) - np.diag(self.matrix)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(union > 0, intersection / np.maximum(union, 1), np.nan)

    def miou(self) -> float:
        """Mittel ueber die bewerteten Klassen; 0.0 ohne jede bewertete Klasse."""
        ious = self.iou_per_class()
        scored = ious[~np.isnan(ious)]
        return float(scored.mean()) if scored.size else 0.0

    def pixel_accuracy(self) -> float:
        """Anteil richtig vorhergesagter Pixel."""
        total = int(self.matrix.sum())
        return float(np.trace(self.matrix)) / total if total else 0.0


def miou(pred: ArrayLike, gt: ArrayLike, num_classes: int) -> float:
    """mIoU einer einzelnen Karte."""
    matrix = ConfusionMatrix(num_classes)
    matrix.update(pred, gt)
    return matrix.miou()


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def _bool(array: ArrayLike) -> NDArray[np.bool_]:
    return np.asarray(array).astype(bool)


def mask_ratio(mask: ArrayLike, valid: ArrayLike | None = None) -> float:
    """Anteil der Pixel mit Maske 1 (an den gueltigen Pixeln)."""
    m = _bool(mask)
    if valid is None:
        return _ratio(int(m.sum()), m.size)
    v = _bool(valid)
    return _ratio(int((m & v).sum()), int(v.sum()))


def mining_ratio(mask: ArrayLike, pseudo: ArrayLike, gt: ArrayLike) -> float:
    """Anteil der richtig vorhergesagten Pixel, die die Schwelle passieren."""
    correct = np.asarray(pseudo) == np.asarray(gt)
    return _ratio(int((correct & _bool(mask)).sum()), int(correct.sum()))


def diagnostic_ratios(mask: ArrayLike, pseudo: ArrayLike, gt: ArrayLike) -> dict[str, float]:
    """Filteranteil, Anteil richtiger gefilterter Pseudo-Labels und Pixelgenauigkeit.

    Nenner ist die Zahl der Pixel, deren ``gt`` nicht IGNORE ist.
    """
    truth = np.asarray(gt)
    valid = truth != IGNORE
    m = _bool(mask) & valid
    correct = (np.asarray(pseudo) == truth) & valid
    pixels = int(valid.sum())
    return {
        "mask_ratio": _ratio(int(m.sum()), pixels),
        "mining_ratio": _ratio(int((m & correct).sum()), int(correct.sum())),
        "filter_ratio": _ratio(int(m.sum()), pixels),
        "correct_pseudo_ratio": _ratio(int((m & correct).sum()), pixels),
        "pixel_accuracy": _ratio(int(correct.sum()), pixels),
    }


def summarize(rows: Sequence[Mapping[str, float]], fraction: float = 0.25) -> dict[str, float]:
    """Mittel der Verhaeltniszahlen ueber den letzten Anteil der Zeilen (mindestens eine)."""
    if not rows:
        return dict.fromkeys(RATIO_FIELDS, 0.0)
    count = max(1, int(np.ceil(len(rows) * fraction)))
    tail = rows[-count:]
    return {name: float(np.mean([float(row[name]) for row in tail])) for name in RATIO_FIELDS}


def summarize_head(rows: Sequence[Mapping[str, float]], fraction: float, key: str) -> float:
    """Mittel einer Spalte ueber den ersten Anteil der Zeilen."""
    if not rows:
        return 0.0
    count = max(1, int(np.ceil(len(rows) * fraction)))
    return float(np.mean([float(row[key]) for row in rows[:count]]))
