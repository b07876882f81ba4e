"""Zustand der Konfidenzschwelle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .run_config import ThresholdMode


@dataclass(frozen=True)
class ThresholdState:
    """Schwelle tau mit der Buchfuehrung des gleitenden Mittels.

    Attributes:
        tau:
            Aktuelle globale Schwelle, immer in [0, 1].
        tau0:
            Startwert; wird beim ersten Update gesetzt.
        momentum:
            Gewicht des bisherigen Werts im gleitenden Mittel (lambda).
        step:
            Anzahl bisheriger Updates.
        mode:
            Feste, global gelockerte oder klassenweise gelockerte Schwelle.
        per_class_tau:
            Klassenweise Schwellen, nur im klassenweisen Modus.
    """

    tau: float
    tau0: float
    momentum: float
    step: int = 0
    mode: ThresholdMode = ThresholdMode.RELAXED_GLOBAL
    per_class_tau: tuple[float, ...] | None = None

    @classmethod
    def initial(
        cls,
        tau0: float,
        momentum: float,
        mode: ThresholdMode = ThresholdMode.RELAXED_GLOBAL,
        num_classes: int = 0,
    ) -> ThresholdState:
        """Zustand vor dem ersten Update."""
        per_class = (tau0,) * num_classes if mode is ThresholdMode.RELAXED_PER_CLASS else None
        return cls(tau=tau0, tau0=tau0, momentum=momentum, mode=mode, per_class_tau=per_class)

    @classmethod
    def fixed(cls, value: float) -> ThresholdState:
        """Feste Schwelle, die von Updates unberuehrt bleibt."""
        return cls(tau=value, tau0=value, momentum=1.0, mode=ThresholdMode.FIXED)

    def class_thresholds(self, num_classes: int) -> NDArray[np.float64]:
        """Wirksame Schwelle je Klasse.

        Im klassenweisen Modus wird mit dem Maximum normiert:
        ``tau * per_class_tau[l] / max(per_class_tau)``. Sonst gilt fuer alle
        Klassen die globale Schwelle.
        """
        if self.per_class_tau is None:
            return np.full(num_classes, self.tau)
        per_class = np.asarray(self.per_class_tau, dtype=np.float64)
        peak = float(per_class.max())
        if peak <= 0.0:
            return np.full(num_classes, self.tau)
        result: NDArray[np.float64] = self.tau * (per_class / peak)
        return result

    def to_dict(self) -> dict[str, Any]:
        """Wandelt den Zustand in ein Dictionary."""
        return {
            "tau": self.tau,
            "tau0": self.tau0,
            "momentum": self.momentum,
            "step": self.step,
            "mode": self.mode.value,
            "per_class_tau": list(self.per_class_tau) if self.per_class_tau is not None else None,
        }
