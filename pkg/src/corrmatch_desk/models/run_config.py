"""Konfiguration eines Trainingslaufs.

Die Datei ist ein flaches JSON-Objekt. Nichts wird stillschweigend ersetzt:
ein unbekannter Schluessel oder ein falscher Typ bricht mit ``ConfigError`` ab.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from enum import StrEnum
from pathlib import Path
from typing import Any

from .dataset import ConfigError, DatasetSpec

logger = logging.getLogger(__name__)

SEED_ENV = "CORRMATCH_SEED"

TOGGLES = (
    "use_unlabeled",
    "use_hard_loss",
    "use_soft_loss",
    "use_corr_loss",
    "use_feature_perturb",
    "use_cutmix",
)


class ThresholdMode(StrEnum):
    """Art der Konfidenzschwelle."""

    FIXED = "fixed"
    RELAXED_GLOBAL = "relaxed_global"
    RELAXED_PER_CLASS = "relaxed_per_class"


@dataclass(frozen=True)
class RunConfig:
    """Alle Stellschrauben eines Laufs; waehrend des Laufs unveraenderlich.

    Die Vorgaben ergeben das Rezept fuer einen Lauf von wenigen Minuten auf
    einem CPU-Kern. ``seed`` hat keine Vorgabe und muss in der Datei stehen.
    """

    seed: int
    # Datensatz
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
    # Modell
    feature_dim: int = 16
    # Verlustgewichte fuer harten, weichen und Korrelationsanteil
    lambda1: float = 0.5
    lambda2: float = 0.25
    lambda3: float = 0.25
    # Schwelle
    tau0: float = 0.85
    ema_momentum: float = 0.999
    threshold_mode: ThresholdMode = ThresholdMode.RELAXED_GLOBAL
    threshold_value: float = 0.95
    # Schalter
    use_unlabeled: bool = True
    use_hard_loss: bool = True
    use_soft_loss: bool = True
    use_corr_loss: bool = True
    use_feature_perturb: bool = True
    use_cutmix: bool = True
    # Optimierer
    lr0: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    total_iters: int = 3000
    batch_labeled: int = 8
    batch_unlabeled: int = 8
    eval_interval: int = 100
    # Augmentierung
    scale_min: float = 0.5
    scale_max: float = 2.0
    # Ausgabe
    dump_correlation: bool = True
    dataset_path: str = ""
    out_dir: str = "runs/default"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """Prueft Wertebereiche.

        Raises:
            ConfigError: Mit dem Namen des Feldes.
        """
        for name in ("lambda1", "lambda2", "lambda3", "weight_decay", "lr0"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} darf nicht negativ sein")
        if self.total_iters < 1:
            raise ConfigError(f"total_iters muss >= 1 sein, ist {self.total_iters}")
        if self.eval_interval < 1:
            raise ConfigError(f"eval_interval muss >= 1 sein, ist {self.eval_interval}")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ConfigError("batch_labeled und batch_unlabeled muessen >= 1 sein")
        if self.use_unlabeled and self.n_unlabeled < 1:
            raise ConfigError("use_unlabeled verlangt n_unlabeled >= 1")
        if self.n_val < 1:
            raise ConfigError(f"n_val muss >= 1 sein, ist {self.n_val}")
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim muss >= 1 sein, ist {self.feature_dim}")
        for name in ("tau0", "threshold_value"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} muss in [0, 1] liegen")
        if not 0.0 <= self.ema_momentum < 1.0:
            raise ConfigError(f"ema_momentum muss in [0, 1) liegen, ist {self.ema_momentum}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum muss in [0, 1) liegen, ist {self.momentum}")
        if not 0.0 < self.scale_min <= self.scale_max:
            raise ConfigError(f"Skalierungsbereich {self.scale_min}..{self.scale_max} ungueltig")
        self.dataset_spec().validate()

    def dataset_spec(self) -> DatasetSpec:
        """Der Datensatz-Anteil der Konfiguration."""
        return DatasetSpec(
            seed=self.seed,
            n_labeled=self.n_labeled,
            n_unlabeled=self.n_unlabeled,
            n_val=self.n_val,
            height=self.height,
            width=self.width,
            in_channels=self.in_channels,
            num_classes=self.num_classes,
            noise_std=self.noise_std,
            min_shapes=self.min_shapes,
            max_shapes=self.max_shapes,
        )

    def with_overrides(self, **changes: Any) -> RunConfig:
        """Kopie mit geaenderten Feldern, gleich geprueft wie eine Datei."""
        return replace(self, **_coerce(changes, require_seed=False))

    def to_dict(self) -> dict[str, Any]:
        """Wandelt die Konfiguration in ein Dictionary fuer die JSON-Datei."""
        data = asdict(self)
        data["threshold_mode"] = self.threshold_mode.value
        return data

    def save(self, path: Path) -> None:
        """Schreibt die aufgeloeste Konfiguration als JSON."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        """Baut eine Konfiguration aus einem flachen Dictionary.

        Raises:
            ConfigError: Bei unbekanntem Schluessel, fehlendem ``seed`` oder
                falschem Typ.
        """
        return cls(**_coerce(data, require_seed=True))

    @classmethod
    def load(cls, path: Path, *, environ: dict[str, str] | None = None) -> RunConfig:
        """Laedt eine JSON-Datei; ``CORRMATCH_SEED`` ersetzt danach den Seed.

        Args:
            path: Pfad zur Konfigurationsdatei.
            environ: Umgebung (fuer Tests); Vorgabe ``os.environ``.

        Raises:
            ConfigError: Datei nicht lesbar, kein JSON-Objekt oder ungueltiger Inhalt.
        """
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"Konfiguration nicht lesbar: {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"Konfiguration ist kein gueltiges JSON: {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"Konfiguration muss ein JSON-Objekt sein: {path}")

        env = os.environ if environ is None else environ
        raw_seed = env.get(SEED_ENV, "")
        if raw_seed:
            try:
                data["seed"] = int(raw_seed)
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV}={raw_seed!r} ist keine ganze Zahl") from exc
            logger.info("Seed aus %s: %s", SEED_ENV, data["seed"])
        return cls.from_dict(data)


def _coerce(data: dict[str, Any], *, require_seed: bool) -> dict[str, Any]:
    """Prueft Schluessel und Typen gegen die Felder von RunConfig."""
    known = {f.name: f for f in fields(RunConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"Unbekannter Schluessel: {key}")
    if require_seed and "seed" not in data:
        raise ConfigError("Pflichtschluessel fehlt: seed")

    defaults = RunConfig.__dataclass_fields__
    result: dict[str, Any] = {}
    for key, value in data.items():
        if key == "threshold_mode":
            try:
                result[key] = ThresholdMode(value)
            except ValueError as exc:
                raise ConfigError(f"threshold_mode {value!r} unbekannt") from exc
            continue
        default = defaults[key].default
        # seed hat keinen Vorgabewert, ist aber eine ganze Zahl
        expected = int if key == "seed" else type(default)
        result[key] = _check_type(key, value, expected)
    return result


def _check_type(key: str, value: Any, expected: type) -> Any:
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} muss true oder false sein, ist {value!r}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} muss eine ganze Zahl sein, ist {value!r}")
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ConfigError(f"{key} muss eine Zahl sein, ist {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} muss ein Text sein, ist {value!r}")
    return value
