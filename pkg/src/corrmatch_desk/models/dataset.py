"""Datenmodelle des synthetischen Datensatzes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

MODEL_STRIDE = 4
"""Gesamtschrittweite des Encoders; Bildgroessen muessen Vielfache davon sein."""


class ConfigError(ValueError):
    """Ungueltige oder unbekannte Konfiguration."""


@dataclass(frozen=True)
class DatasetSpec:
    """Beschreibt einen Datensatz vollstaendig - gleiche Spec, gleiche Bytes.

    Attributes:
        seed:
            Startwert; zusammen mit der Proben-ID bestimmt er jedes Bild.
        n_labeled:
            Anzahl beschrifteter Proben (N_l).
        n_unlabeled:
            Anzahl unbeschrifteter Proben (N_u).
        n_val:
            Proben des Validierungsanteils, erzeugt wie die unbeschrifteten.
        height, width:
            Bildgroesse, Vielfache der Encoder-Schrittweite.
        in_channels:
            Farbkanaele (Cin).
        num_classes:
            Klassen einschliesslich Hintergrund (K).
        noise_std:
            Standardabweichung des Pixelrauschens.
        min_shapes, max_shapes:
            Anzahl Formen je Bild (inklusive).
    """

    seed: int
    n_labeled: int = 4
    n_unlabeled: int = 256
    n_val: int = 32
    height: int = 32
    width: int = 32
    in_channels: int = 3
    num_classes: int = 4
    noise_std: float = 0.08
    min_shapes: int = 1
    max_shapes: int = 3

    def validate(self) -> None:
        """Prueft die Invarianten.

        Raises:
            ConfigError: Mit dem Namen des verletzten Feldes.
        """
        if self.seed < 0:
            raise ConfigError(f"seed darf nicht negativ sein, ist {self.seed}")
        if self.n_labeled < 1:
            raise ConfigError(f"n_labeled muss >= 1 sein, ist {self.n_labeled}")
        if self.n_unlabeled < 0 or self.n_val < 0:
            raise ConfigError("n_unlabeled und n_val duerfen nicht negativ sein")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes muss >= 2 sein, ist {self.num_classes}")
        if self.num_classes > 255:
            raise ConfigError("num_classes muss unter dem IGNORE-Wert 255 liegen")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels muss >= 1 sein, ist {self.in_channels}")
        for name, size in (("height", self.height), ("width", self.width)):
            if size < MODEL_STRIDE or size % MODEL_STRIDE:
                raise ConfigError(f"{name} muss ein Vielfaches von {MODEL_STRIDE} sein, ist {size}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std darf nicht negativ sein, ist {self.noise_std}")
        if not 1 <= self.min_shapes <= self.max_shapes:
            raise ConfigError(f"Formbereich {self.min_shapes}..{self.max_shapes} ungueltig")

    def to_dict(self) -> dict[str, Any]:
        """Wandelt die Spec in ein Dictionary."""
        return {
            "seed": self.seed,
            "n_labeled": self.n_labeled,
            "n_unlabeled": self.n_unlabeled,
            "n_val": self.n_val,
            "height": self.height,
            "width": self.width,
            "in_channels": self.in_channels,
            "num_classes": self.num_classes,
            "noise_std": self.noise_std,
            "min_shapes": self.min_shapes,
            "max_shapes": self.max_shapes,
        }


@dataclass(frozen=True, eq=False)
class Sample:
    """Eine Probe.

    ``label`` gibt es nur bei beschrifteten Proben. ``ground_truth`` ist bei
    allen Proben vorhanden, darf aber ausserhalb des beschrifteten Anteils nur
    fuer Auswertungen gelesen werden - nie vom Training.
    """

    id: int
    image: NDArray[np.float64]
    ground_truth: NDArray[np.uint8]
    label: NDArray[np.uint8] | None = None

    @property
    def is_labeled(self) -> bool:
        """Hat die Probe ein Trainingslabel?"""
        return self.label is not None


@dataclass(eq=False)
class Dataset:
    """Die drei Anteile eines erzeugten Datensatzes."""

    spec: DatasetSpec
    labeled: list[Sample] = field(default_factory=list)
    unlabeled: list[Sample] = field(default_factory=list)
    val: list[Sample] = field(default_factory=list)

    def all_samples(self) -> list[Sample]:
        """Alle Proben in ID-Reihenfolge."""
        return [*self.labeled, *self.unlabeled, *self.val]
