"""Optimizer-Service - SGD mit Momentum, Weight Decay und Poly-Lernrate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .network import ModelParams

POLY_POWER = 0.9


@dataclass(frozen=True)
class SGDState:
    """Geschwindigkeit je Parametername und Zahl der bisherigen Schritte."""

    velocity: dict[str, NDArray[np.float64]] = field(default_factory=dict)
    iteration: int = 0


def poly_lr(lr0: float, iteration: int, total: int) -> float:
    """``lr0 * (1 - iteration / total) ** 0.9``, nie negativ."""
    remaining = max(0.0, 1.0 - iteration / total)
    return float(lr0 * remaining**POLY_POWER)


def sgd_update(
    params: ModelParams,
    state: SGDState,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 1e-4,
) -> tuple[ModelParams, SGDState]:
    """Ein Schritt ``v = m*v + (g + wd*p)``, ``p = p - lr*v``.

    Die Gradienten werden aus ``.grad`` gelesen (fehlend = 0). Ergebnis sind
    neue Blaetter; die alten bleiben unveraendert.
    """
    new_arrays: dict[str, NDArray[np.float64]] = {}
    new_velocity: dict[str, NDArray[np.float64]] = {}
    for name, tensor in params.named().items():
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        step = grad + weight_decay * tensor.data if weight_decay else grad
        previous = state.velocity.get(name)
        velocity = step.copy() if previous is None else momentum * previous + step
        new_velocity[name] = velocity
        new_arrays[name] = tensor.data - lr * velocity
    return ModelParams.from_arrays(new_arrays), SGDState(velocity=new_velocity, iteration=state.iteration + 1)
