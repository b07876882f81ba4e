"""Gradientenpruefung ueber zentrale Differenzen.

Verglichen wird die analytische Ableitung aus ``Tensor.backward()`` mit
``(f(w + eps) - f(w - eps)) / (2 eps)`` - Eintrag fuer Eintrag, ueber alle
uebergebenen Parameter.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence

import numpy as np

from .tensor import Tensor, zero_grad

logger = logging.getLogger(__name__)


class GradCheckError(ArithmeticError):
    """Die zu pruefende Funktion liefert keinen endlichen Wert."""


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    """``|a - n| / max(floor, |a| + |n|)``."""
    return abs(analytic - numeric) / max(floor, abs(analytic) + abs(numeric))


def _evaluate(f: Callable[[], Tensor], context: str) -> float:
    value = f().item()
    if not math.isfinite(value):
        raise GradCheckError(f"Verlust nicht endlich ({value}) bei {context}")
    return value


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-5,
    *,
    floor: float = 1e-8,
) -> float:
    """Groesster relativer Fehler zwischen analytischem und numerischem Gradienten.

    ``f`` wird ohne Argumente aufgerufen und muss bei jedem Aufruf den Graphen
    neu aus den aktuellen Werten von ``params`` aufbauen. Die Werte werden fuer
    die Differenzen kurzzeitig veraendert und danach exakt wiederhergestellt.

    Args:
        f: Skalarwertige Funktion der Parameter.
        params: Blaetter mit ``requires_grad=True``.
        epsilon: Schrittweite der zentralen Differenz.
        floor: Untergrenze des Nenners; Eintraege, deren Ableitungen beide
            darunter liegen, werden absolut statt relativ verglichen.

    Returns:
        Maximum ueber alle Eintraege; 0.0, wenn beide Ableitungen ueberall 0 sind.

    Raises:
        GradCheckError: Wenn ein Funktionswert nicht endlich ist.
    """
    zero_grad(params)
    loss = f()
    if not math.isfinite(loss.item()):
        raise GradCheckError(f"Verlust nicht endlich ({loss.item()}) am Ausgangspunkt")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    zero_grad(params)

    worst = 0.0
    for index, param in enumerate(params):
        flat = param.data.reshape(-1)
        grad_flat = analytic[index].reshape(-1)
        for i in range(flat.size):
            original = float(flat[i])
            label = f"{param.name or f'param[{index}]'}[{i}]"
            try:
                flat[i] = original + epsilon
                plus = _evaluate(f, label)
                flat[i] = original - epsilon
                minus = _evaluate(f, label)
            finally:
                flat[i] = original
            numeric = (plus - minus) / (2.0 * epsilon)
            worst = max(worst, relative_error(float(grad_flat[i]), numeric, floor))
    logger.debug("Gradientenpruefung: max. relativer Fehler %.3e", worst)
    return worst
