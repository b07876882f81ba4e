"""Ergebnisse eines Trainingsschritts: Verlustterme und Diagnosewerte."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from ..numeric import Tensor

LOSS_TERMS = ("ls_h", "ls_c", "lu_h", "lu_s", "lu_c")
RATIO_FIELDS = ("mask_ratio", "mining_ratio", "filter_ratio", "correct_pseudo_ratio", "pixel_accuracy")


@dataclass(frozen=True)
class LossBreakdown:
    """Die fuenf Verlustterme, ihre Gewichte und die Summe.

    ``total`` ist ``0.5 * (0.5 * (ls_h + ls_c) + lambda1 * lu_h + lambda2 * lu_s
    + lambda3 * lu_c)`` und haengt am Band; die Rueckwaertsrechnung startet dort.
    """

    ls_h: Tensor
    ls_c: Tensor
    lu_h: Tensor
    lu_s: Tensor
    lu_c: Tensor
    lambda1: float
    lambda2: float
    lambda3: float
    total: Tensor

    def values(self) -> dict[str, float]:
        """Die Terme und die Summe als Zahlen."""
        result = {name: getattr(self, name).item() for name in LOSS_TERMS}
        result["total"] = self.total.item()
        return result


@dataclass(frozen=True)
class StepDiagnostics:
    """Verhaeltniszahlen eines Schritts, ausgewertet auf der schwachen Sicht.

    Der Nenner ist jeweils die Zahl der gueltigen Pixel (ohne Auffuellrand der
    Augmentierung). ``correct_pseudo_ratio`` kann nie groesser sein als
    ``filter_ratio`` oder ``pixel_accuracy``.
    """

    iteration: int
    tau: float
    mask_ratio: float = 0.0
    mining_ratio: float = 0.0
    filter_ratio: float = 0.0
    correct_pseudo_ratio: float = 0.0
    pixel_accuracy: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        """Wandelt die Diagnose in ein Dictionary."""
        return {
            "iteration": self.iteration,
            "tau": self.tau,
            "mask_ratio": self.mask_ratio,
            "mining_ratio": self.mining_ratio,
            "filter_ratio": self.filter_ratio,
            "correct_pseudo_ratio": self.correct_pseudo_ratio,
            "pixel_accuracy": self.pixel_accuracy,
        }
