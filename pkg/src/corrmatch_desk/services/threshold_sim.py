"""Schwellen-Simulation - Das gleitende Mittel ohne Modell.

Ein synthetischer Strom von Vorschlaegen ``tau'`` treibt ``update_threshold``
fuer mehrere Startwerte. Zeile 0 ist der Startwert selbst (das erste Update
setzt ``tau0`` und verwirft den Vorschlag), ab Zeile 1 gilt
``tau_t = lambda * tau_{t-1} + (1 - lambda) * tau'_t``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..models.dataset import ConfigError
from ..models.threshold_state import ThresholdState
from .reporter import Reporter
from .threshold import update_threshold

logger = logging.getLogger(__name__)


class StreamKind(StrEnum):
    """Form des Vorschlagsstroms."""

    CONSTANT = "constant"
    RAMP = "ramp"
    NOISY = "noisy"


_STREAM_KEYS = {
    StreamKind.CONSTANT: {"value"},
    StreamKind.RAMP: {"start", "end"},
    StreamKind.NOISY: {"mean", "std", "seed"},
}


@dataclass(frozen=True)
class StreamSpec:
    """Inhalt einer Stream-Datei.

    Attributes:
        momentum: lambda des gleitenden Mittels, in [0, 1).
        tau0: Startwerte, je einer pro Trajektorie.
        steps: Anzahl Updates nach dem Startwert.
        kind: Form des Stroms.
        params: Parameter der Form (value | start, end | mean, std, seed).
        out: Pfad der Trajektorien-CSV.
    """

    momentum: float
    tau0: tuple[float, ...]
    steps: int
    kind: StreamKind
    params: dict[str, float]
    out: Path

    @classmethod
    def from_dict(cls, data: Any, base_dir: Path | None = None) -> StreamSpec:
        """Prueft und baut eine Stream-Spezifikation.

        Ein relativer ``out`` wird gegen ``base_dir`` aufgeloest.

        Raises:
            ConfigError: Bei fehlenden oder ungueltigen Feldern.
        """
        if not isinstance(data, dict):
            raise ConfigError("Stream-Spezifikation muss ein JSON-Objekt sein")
        for key in ("lambda", "tau0", "steps", "stream"):
            if key not in data:
                raise ConfigError(f"Pflichtschluessel fehlt: {key}")

        momentum = _number(data["lambda"], "lambda")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"lambda muss in [0, 1) liegen, ist {momentum}")
        starts = data["tau0"]
        if not isinstance(starts, list) or not starts:
            raise ConfigError("tau0 muss eine nicht-leere Liste sein")
        tau0 = tuple(dict.fromkeys(_unit(_number(v, "tau0"), "tau0") for v in starts))
        steps = data["steps"]
        if isinstance(steps, bool) or not isinstance(steps, int) or steps < 1:
            raise ConfigError(f"steps muss eine ganze Zahl >= 1 sein, ist {steps!r}")

        stream = data["stream"]
        if not isinstance(stream, dict):
            raise ConfigError("stream muss ein JSON-Objekt sein")
        try:
            kind = StreamKind(stream.get("kind"))
        except ValueError as exc:
            raise ConfigError(f"stream kind {stream.get('kind')!r} unbekannt") from exc
        expected = _STREAM_KEYS[kind]
        given = set(stream) - {"kind"}
        if given != expected:
            raise ConfigError(f"stream '{kind.value}' erwartet genau {sorted(expected)}, hat {sorted(given)}")
        params = {key: _number(stream[key], key) for key in expected}
        if kind is StreamKind.CONSTANT:
            _unit(params["value"], "value")
        elif kind is StreamKind.RAMP:
            _unit(params["start"], "start")
            _unit(params["end"], "end")
        else:
            _unit(params["mean"], "mean")
            if params["std"] < 0:
                raise ConfigError("std darf nicht negativ sein")
            if params["seed"] < 0 or params["seed"] != int(params["seed"]):
                raise ConfigError("seed muss eine nicht-negative ganze Zahl sein")

        out = Path(str(data.get("out", "trajectory.csv")))
        if not out.is_absolute() and base_dir is not None:
            out = base_dir / out
        return cls(momentum=momentum, tau0=tau0, steps=steps, kind=kind, params=params, out=out)

    @classmethod
    def load(cls, path: Path) -> StreamSpec:
        """Liest eine Stream-Datei; ``out`` ist relativ zu ihrem Ordner.

        Raises:
            ConfigError: Datei nicht lesbar, kein JSON oder ungueltiger Inhalt.
        """
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"Stream-Spezifikation nicht lesbar: {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ConfigError(f"{key} muss eine Zahl sein, ist {value!r}")
    return float(value)


def _unit(value: float, key: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{key} muss in [0, 1] liegen, ist {value}")
    return value


def proposal_stream(spec: StreamSpec) -> NDArray[np.float64]:
    """``steps + 1`` Vorschlaege; Eintrag 0 wird vom ersten Update verworfen."""
    count = spec.steps + 1
    if spec.kind is StreamKind.CONSTANT:
        return np.full(count, spec.params["value"])
    if spec.kind is StreamKind.RAMP:
        return np.linspace(spec.params["start"], spec.params["end"], count)
    rng = np.random.default_rng(int(spec.params["seed"]))
    values = spec.params["mean"] + spec.params["std"] * rng.standard_normal(count)
    return np.clip(values, 0.0, 1.0)


def simulate(momentum: float, tau0: float, proposals: NDArray[np.float64]) -> NDArray[np.float64]:
    """Trajektorie eines Startwerts; Laenge wie ``proposals``."""
    state = ThresholdState.initial(tau0, momentum)
    trajectory = np.empty(len(proposals))
    for step, proposal in enumerate(proposals):
        state = update_threshold(state, float(proposal))
        trajectory[step] = state.tau
    return trajectory


def column_name(tau0: float) -> str:
    """CSV-Spalte einer Trajektorie, z.B. ``tau0_0.85``."""
    return f"tau0_{tau0:g}"


def run_simulation(spec: StreamSpec) -> dict[float, NDArray[np.float64]]:
    """Simuliert alle Startwerte und schreibt CSV und SVG neben ``spec.out``.

    Die CSV hat je Schritt den Vorschlag, jede Trajektorie und den groessten
    Abstand zwischen den Trajektorien.
    """
    proposals = proposal_stream(spec)
    trajectories = {tau0: simulate(spec.momentum, tau0, proposals) for tau0 in spec.tau0}
    stacked = np.stack(list(trajectories.values()))
    gaps = stacked.max(axis=0) - stacked.min(axis=0)

    columns = ("step", "tau_prime", *(column_name(v) for v in spec.tau0), "max_gap")
    rows: list[dict[str, Any]] = []
    for step in range(len(proposals)):
        row: dict[str, Any] = {"step": step, "tau_prime": proposals[step] if step else None, "max_gap": gaps[step]}
        for tau0, trajectory in trajectories.items():
            row[column_name(tau0)] = trajectory[step]
        rows.append(row)
    Reporter.save_csv(rows, columns, spec.out)
    Reporter.save_line_plot(
        {column_name(v): list(enumerate(t.tolist())) for v, t in trajectories.items()},
        spec.out.with_suffix(".svg"),
        title=f"tau ({spec.kind.value}, lambda={spec.momentum:g})",
        y_label="tau",
    )
    logger.info("Schwellen-Simulation: %d Startwerte, %d Schritte, Endabstand %.3g", len(spec.tau0), spec.steps, gaps[-1])
    return trajectories
