"""Threshold-Service - Konfidenz, Filterkarte und gelockerte Schwelle.

Die Schwelle startet bei ``tau0`` und laeuft als gleitendes Mittel gegen den
Mittelwert der hoechsten Konfidenz je vorhergesagter Klasse:
``tau_t = lambda * tau_{t-1} + (1 - lambda) * tau'``. Beim allerersten Update
wird ``tau0`` gesetzt und ``tau'`` verworfen.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..models.run_config import ThresholdMode
from ..models.threshold_state import ThresholdState
from ..numeric.ops import softmax_array
from ..numeric.tensor import Tensor


class ThresholdRangeError(ValueError):
    """Vorgeschlagene Schwelle liegt ausserhalb von [0, 1]."""


def confidence_and_pseudo(logits_w: Tensor | ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.uint8]]:
    """Konfidenz (Maximum der Softmax ueber K) und Pseudo-Label je Pixel.

    Beides sind reine Arrays - vom Band getrennt.
    """
    data = logits_w.data if isinstance(logits_w, Tensor) else np.asarray(logits_w, dtype=np.float64)
    probs = softmax_array(data, axis=0)
    return probs.max(axis=0), probs.argmax(axis=0).astype(np.uint8)


def filter_map(confidence: ArrayLike, tau: float) -> NDArray[np.uint8]:
    """``1`` wo die Konfidenz echt groesser als ``tau`` ist."""
    return (np.asarray(confidence) > tau).astype(np.uint8)


def _class_maxima(confidence: ArrayLike, pseudo: ArrayLike) -> dict[int, float]:
    conf = np.asarray(confidence, dtype=np.float64).reshape(-1)
    labels = np.asarray(pseudo).reshape(-1)
    if conf.size == 0:
        raise ValueError("Leere Pseudo-Label-Karte")
    return {int(label): float(conf[labels == label].max()) for label in np.unique(labels)}


def propose_threshold_increment(confidence: ArrayLike, pseudo: ArrayLike) -> float:
    """Mittel ueber die vorhandenen Klassen der jeweils hoechsten Konfidenz.

    Karten duerfen beliebige Form haben; ein ganzer Batch zaehlt als eine Menge.
    """
    maxima = _class_maxima(confidence, pseudo)
    return float(np.mean(list(maxima.values())))


def _check_range(value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ThresholdRangeError(f"tau'={value} ausserhalb von [0, 1]")


def update_threshold(state: ThresholdState, tau_prime: float) -> ThresholdState:
    """Ein Schritt des gleitenden Mittels.

    Raises:
        ThresholdRangeError: Wenn ``tau_prime`` nicht in [0, 1] liegt.
    """
    _check_range(tau_prime)
    if state.step == 0:
        return replace(state, tau=state.tau0, step=1)
    lam = state.momentum
    return replace(state, tau=lam * state.tau + (1.0 - lam) * tau_prime, step=state.step + 1)


def update_threshold_per_class(state: ThresholdState, confidence: ArrayLike, pseudo: ArrayLike) -> ThresholdState:
    """Klassenweises Update; die globale Schwelle laeuft wie bei ``update_threshold``.

    Nur vorhandene Klassen werden bewegt, die uebrigen Eintraege bleiben stehen.

    Raises:
        ValueError: Wenn der Zustand nicht im klassenweisen Modus ist.
    """
    if state.mode is not ThresholdMode.RELAXED_PER_CLASS or state.per_class_tau is None:
        raise ValueError("update_threshold_per_class verlangt den klassenweisen Modus")
    maxima = _class_maxima(confidence, pseudo)
    for value in maxima.values():
        _check_range(value)
    tau_prime = float(np.mean(list(maxima.values())))
    updated = update_threshold(state, tau_prime)
    if state.step == 0:
        return replace(updated, per_class_tau=(state.tau0,) * len(state.per_class_tau))

    lam = state.momentum
    per_class = list(state.per_class_tau)
    for label, peak in maxima.items():
        if label < len(per_class):
            per_class[label] = lam * per_class[label] + (1.0 - lam) * peak
    return replace(updated, per_class_tau=tuple(per_class))


def advance_threshold(state: ThresholdState, confidence: ArrayLike, pseudo: ArrayLike) -> ThresholdState:
    """Update passend zum Modus; eine feste Schwelle bleibt wie sie ist."""
    if state.mode is ThresholdMode.FIXED:
        return state
    if state.mode is ThresholdMode.RELAXED_PER_CLASS:
        return update_threshold_per_class(state, confidence, pseudo)
    return update_threshold(state, propose_threshold_increment(confidence, pseudo))


def unlabeled_mask(
    state: ThresholdState,
    confidence: ArrayLike,
    pseudo: ArrayLike,
    valid: ArrayLike | None = None,
) -> NDArray[np.uint8]:
    """Filterkarte mit der wirksamen Schwelle des Pseudo-Labels, begrenzt auf gueltige Pixel."""
    conf = np.asarray(confidence, dtype=np.float64)
    labels = np.asarray(pseudo)
    if state.per_class_tau is None:
        mask = filter_map(conf, state.tau)
    else:
        thresholds = state.class_thresholds(len(state.per_class_tau))
        mask = (conf > thresholds[labels]).astype(np.uint8)
    if valid is not None:
        mask &= np.asarray(valid).astype(np.uint8)
    return mask
