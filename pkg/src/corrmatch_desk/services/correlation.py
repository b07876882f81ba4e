"""Correlation-Service - Korrelationskarte und Label-Propagation.

``C = (W1 e)^T (W2 e)`` vergleicht jedes Pixel der Merkmalskarte mit jedem.
Die Propagation gewichtet die Logits mit ``softmax(C / sqrt(D))`` ueber die
Quellpixel: jede Ausgabespalte ist eine Konvexkombination der Logit-Spalten.
Gradienten fliessen durch beide Faktoren.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..numeric import ops
from ..numeric.tensor import ShapeError, Tensor


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    """Paarweise Aehnlichkeit ``(h*w) x (h*w)`` aus Merkmalen der Dimension D."""

    values: Tensor
    feature_dim: int

    def __post_init__(self) -> None:
        shape = self.values.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ShapeError(f"Korrelationskarte muss quadratisch sein, Form ist {shape}")

    @property
    def size(self) -> int:
        """Anzahl der Pixel (h*w)."""
        return self.values.shape[0]


def correlation_map(e: Tensor, w1: Tensor, w2: Tensor) -> CorrelationMap:
    """``C = (W1 e)^T (W2 e)`` fuer ein Bild.

    Raises:
        ShapeError: Wenn ``e`` nicht ``D x hw`` ist oder W1/W2 nicht ``D x D``.
    """
    if e.data.ndim != 2:
        raise ShapeError(f"correlation_map: D x hw erwartet, Form ist {e.shape}")
    d = e.shape[0]
    for name, w in (("W1", w1), ("W2", w2)):
        if w.shape != (d, d):
            raise ShapeError(f"correlation_map: {name} hat Form {w.shape}, erwartet {(d, d)} fuer e {e.shape}")
    left = ops.transpose(ops.matmul(w1, e))
    return CorrelationMap(values=ops.matmul(left, ops.matmul(w2, e)), feature_dim=d)


def propagation_weights(corr: CorrelationMap) -> Tensor:
    """``softmax(C / sqrt(D))`` ueber die Quellpixel (Achse 0); Spalten summieren zu 1."""
    return ops.softmax(corr.values * (1.0 / math.sqrt(corr.feature_dim)), axis=0)


def correlation_softmax(corr: CorrelationMap) -> NDArray[np.float64]:
    """Die Propagationsgewichte als Array, z.B. fuer Bilder der Korrelationskarte."""
    return propagation_weights(corr).data.copy()


def propagate(logits: Tensor, corr: CorrelationMap, h: int, w: int) -> Tensor:
    """``z = L softmax(C / sqrt(D))`` mit L = Logits bilinear auf ``h x w``, flach ``K x hw``.

    Raises:
        ShapeError: Wenn die Karte nicht ``hw x hw`` ist.
    """
    if corr.size != h * w:
        raise ShapeError(f"propagate: Karte {corr.values.shape} passt nicht zu {h}x{w}")
    if logits.data.ndim != 3:
        raise ShapeError(f"propagate: K x H x W erwartet, Form ist {logits.shape}")
    k = logits.shape[0]
    flat = ops.reshape(ops.bilinear_resize(logits, h, w), (k, h * w))
    return ops.matmul(flat, propagation_weights(corr))
