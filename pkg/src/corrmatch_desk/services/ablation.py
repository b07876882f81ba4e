"""Ablation-Service - Kreuzprodukt aus Schwellen, Varianten und Seeds.

Jede Zelle ist ein eigener Trainingslauf in einem eigenen Unterordner. Eine
fehlgeschlagene Zelle wird markiert, die Reihe laeuft weiter.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..i18n import current_language, load_locale
from ..models.dataset import ConfigError
from ..models.run_config import TOGGLES, RunConfig, ThresholdMode
from ..models.step_result import RATIO_FIELDS
from .reporter import Reporter
from .trainer import Trainer

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ("threshold", "variant", "seed", "status", "final_val_miou", *RATIO_FIELDS, "error")
STATUS_OK = "ok"
STATUS_FAILED = "failed"


@dataclass(frozen=True)
class ThresholdChoice:
    """Eine Schwellen-Zeile der Reihe."""

    mode: ThresholdMode
    value: float | None = None

    @property
    def label(self) -> str:
        """Kurzname fuer CSV und Ordner, z.B. ``fixed-0.95``."""
        return f"{self.mode.value}-{self.value:g}" if self.value is not None else self.mode.value

    def overrides(self) -> dict[str, Any]:
        """Konfigurationsaenderungen fuer diese Schwelle."""
        changes: dict[str, Any] = {"threshold_mode": self.mode.value}
        if self.value is not None:
            changes["threshold_value"] = self.value
        return changes


@dataclass(frozen=True)
class Variant:
    """Eine Komponenten-Variante: Name und geaenderte Schalter."""

    name: str
    toggles: dict[str, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepSpec:
    """Inhalt einer Sweep-Datei."""

    thresholds: list[ThresholdChoice]
    variants: list[Variant]
    seeds: list[int]
    overrides: dict[str, Any] = field(default_factory=dict)

    def cells(self) -> Iterator[tuple[ThresholdChoice, Variant, int]]:
        """Zellen in fester Reihenfolge: Schwelle, dann Variante, dann Seed."""
        for threshold in self.thresholds:
            for variant in self.variants:
                for seed in self.seeds:
                    yield threshold, variant, seed

    @classmethod
    def from_dict(cls, data: Any) -> SweepSpec:
        """Prueft und baut eine Sweep-Spezifikation.

        Raises:
            ConfigError: Bei fehlenden Listen, unbekannten Modi oder
                Varianten-Schluesseln, die keine Schalter sind.
        """
        if not isinstance(data, dict):
            raise ConfigError("Sweep muss ein JSON-Objekt sein")
        unknown = set(data) - {"thresholds", "variants", "seeds", "overrides"}
        if unknown:
            raise ConfigError(f"Unbekannter Sweep-Schluessel: {sorted(unknown)[0]}")

        thresholds = [_threshold(entry) for entry in _non_empty_list(data, "thresholds")]
        variants = [_variant(entry) for entry in _non_empty_list(data, "variants")]
        seeds = _non_empty_list(data, "seeds")
        for seed in seeds:
            if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
                raise ConfigError(f"Seed {seed!r} ist keine nicht-negative ganze Zahl")
        overrides = data.get("overrides", {})
        if not isinstance(overrides, dict):
            raise ConfigError("overrides muss ein JSON-Objekt sein")
        return cls(thresholds=thresholds, variants=variants, seeds=list(seeds), overrides=overrides)

    @classmethod
    def load(cls, path: Path) -> SweepSpec:
        """Liest eine Sweep-Datei.

        Raises:
            ConfigError: Datei nicht lesbar, kein JSON oder ungueltiger Inhalt.
        """
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"Sweep nicht lesbar: {path}: {exc}") from exc
        return cls.from_dict(data)


def _non_empty_list(data: dict[str, Any], key: str) -> list[Any]:
    value = data.get(key)
    if not isinstance(value, list) or not value:
        raise ConfigError(f"Sweep braucht eine nicht-leere Liste '{key}'")
    return value


def _threshold(entry: Any) -> ThresholdChoice:
    if not isinstance(entry, dict) or "mode" not in entry:
        raise ConfigError(f"Schwellen-Eintrag ohne 'mode': {entry!r}")
    try:
        mode = ThresholdMode(entry["mode"])
    except ValueError as exc:
        raise ConfigError(f"threshold mode {entry['mode']!r} unbekannt") from exc
    value = entry.get("value")
    if value is not None and (isinstance(value, bool) or not isinstance(value, int | float)):
        raise ConfigError(f"Schwellenwert {value!r} ist keine Zahl")
    return ThresholdChoice(mode=mode, value=float(value) if value is not None else None)


def _variant(entry: Any) -> Variant:
    if not isinstance(entry, dict) or not isinstance(entry.get("name"), str) or not entry["name"]:
        raise ConfigError(f"Variante ohne Namen: {entry!r}")
    toggles: dict[str, bool] = {}
    for key, value in entry.items():
        if key == "name":
            continue
        if key not in TOGGLES:
            raise ConfigError(f"Varianten-Schluessel {key} ist kein Schalter")
        if not isinstance(value, bool):
            raise ConfigError(f"Schalter {key} muss true oder false sein")
        toggles[key] = value
    return Variant(name=entry["name"], toggles=toggles)


def cell_config(base: RunConfig, spec: SweepSpec, threshold: ThresholdChoice, variant: Variant, seed: int, out_dir: Path) -> RunConfig:
    """Konfiguration einer Zelle: Basis, Overrides, Schwelle, Schalter, Seed."""
    cell_dir = out_dir / f"{threshold.label}__{variant.name}__seed{seed}"
    changes = {**spec.overrides, **threshold.overrides(), **variant.toggles, "seed": seed, "out_dir": str(cell_dir)}
    return base.with_overrides(**changes)


def run_cell(config_data: dict[str, Any], threshold_label: str, variant_name: str) -> dict[str, Any]:
    """Fuehrt eine Zelle aus und liefert ihre CSV-Zeile.

    Laeuft auch in einem Worker-Prozess; jeder Fehler wird zur Zeile mit
    Status ``failed``.
    """
    row: dict[str, Any] = {
        "threshold": threshold_label,
        "variant": variant_name,
        "seed": config_data["seed"],
    }
    try:
        config = RunConfig.from_dict(config_data)
        result = Trainer(config).run()
    except Exception as exc:
        logger.exception("Zelle %s/%s/seed %s fehlgeschlagen", threshold_label, variant_name, config_data["seed"])
        return {**row, "status": STATUS_FAILED, "error": f"{type(exc).__name__}: {exc}"}
    summary = result.summary
    return {
        **row,
        "status": STATUS_OK,
        "final_val_miou": summary["final_val_miou"],
        **{name: summary[name] for name in RATIO_FIELDS},
    }


def run_sweep(
    base: RunConfig,
    spec: SweepSpec,
    out_dir: Path,
    workers: int = 1,
    progress: Callable[[dict[str, Any]], None] | None = None,
) -> list[dict[str, Any]]:
    """Fuehrt alle Zellen aus und schreibt ``ablation.csv``.

    Die Zeilen stehen in Zellenreihenfolge, auch wenn Worker in anderer
    Reihenfolge fertig werden.

    Raises:
        ConfigError: Wenn eine Zelle eine ungueltige Konfiguration ergibt.
    """
    out_dir = Path(out_dir)
    jobs = []
    for threshold, variant, seed in spec.cells():
        config = cell_config(base, spec, threshold, variant, seed, out_dir)
        jobs.append((config.to_dict(), threshold.label, variant.name))
    logger.info("Ablation: %d Zellen, %d Worker -> %s", len(jobs), workers, out_dir)

    rows: list[dict[str, Any]] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=load_locale, initargs=(current_language(),)) as pool:
            for row in pool.map(run_cell, *zip(*jobs, strict=True)):
                rows.append(row)
                if progress is not None:
                    progress(row)
    else:
        for job in jobs:
            row = run_cell(*job)
            rows.append(row)
            if progress is not None:
                progress(row)

    Reporter.save_csv(rows, ABLATION_COLUMNS, out_dir / "ablation.csv")
    failed = sum(1 for row in rows if row["status"] == STATUS_FAILED)
    if failed:
        logger.warning("Ablation: %d von %d Zellen fehlgeschlagen", failed, len(rows))
    return rows
