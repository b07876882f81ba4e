"""Tensor mit Rueckwaerts-Ableitung (reverse mode).

Jede Operation haengt an ihr Ergebnis die Eltern und eine Funktion, die aus
dem Gradienten des Ergebnisses die Gradienten der Eltern berechnet. Der so
entstehende Graph ist das "Band" eines Trainingsschritts: er haengt am
Verlust-Tensor, wird mit ihm verworfen und kennt keinen globalen Zustand.

Gerechnet wird durchgehend in doppelter Genauigkeit - die Gradientenpruefung
und der Vergleich der EMA mit einer Referenzschleife verlangen das.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]
BackwardFn = Callable[[FloatArray], Sequence[FloatArray | None]]


class ShapeError(ValueError):
    """Dimensionen zweier Operanden passen nicht zusammen."""


class Tensor:
    """Dichtes Feld reeller Zahlen mit optionalem Gradienten.

    Attributes:
        data:
            Die Werte als float64-Array.
        requires_grad:
            Ob Gradienten bis hierher zurueckfliessen sollen.
        grad:
            Akkumulierter Gradient nach ``backward()`` (nur an Blaettern).
    """

    __slots__ = ("_backward", "_parents", "data", "grad", "name", "requires_grad")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        *,
        name: str = "",
        _parents: tuple[Tensor, ...] = (),
        _backward: BackwardFn | None = None,
    ) -> None:
        self.data: FloatArray = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: FloatArray | None = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    # ------------------------------------------------------------------
    # Grundeigenschaften
    # ------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        """Form des Tensors."""
        return tuple(int(n) for n in self.data.shape)

    @property
    def size(self) -> int:
        """Anzahl der Eintraege (Produkt der Form)."""
        return int(self.data.size)

    @property
    def parents(self) -> tuple[Tensor, ...]:
        """Direkte Vorgaenger im Band."""
        return self._parents

    def item(self) -> float:
        """Wert eines skalaren Tensors."""
        if self.data.size != 1:
            raise ShapeError(f"item() braucht einen Skalar, Form ist {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        """Kopie der Werte ohne Verbindung zum Band."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # ------------------------------------------------------------------
    # Band
    # ------------------------------------------------------------------

    @staticmethod
    def from_op(data: FloatArray, parents: Iterable[Tensor], backward: BackwardFn) -> Tensor:
        """Erzeugt das Ergebnis einer Operation.

        Haengt kein Elternteil am Band, entsteht ein losgeloester Tensor ohne
        Kanten - nicht benoetigte Ableitungen kosten so nichts.
        """
        parent_tuple = tuple(parents)
        if any(p.requires_grad for p in parent_tuple):
            return Tensor(data, requires_grad=True, _parents=parent_tuple, _backward=backward)
        return Tensor(data)

    def ancestors(self) -> list[Tensor]:
        """Alle Tensoren, von denen dieser ueber Kanten des Bands abhaengt."""
        seen: set[int] = {id(self)}
        found: list[Tensor] = []
        stack = list(self._parents)
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            found.append(node)
            stack.extend(node._parents)
        return found

    def _topological_order(self) -> list[Tensor]:
        """Post-Order-Durchlauf ohne Rekursion.

        Geschwister werden in Argumentreihenfolge besucht; damit ist auch die
        Reihenfolge der Gradienten-Summation fest.
        """
        order: list[Tensor] = []
        visited: set[int] = {id(self)}
        stack: list[tuple[Tensor, Iterable[Tensor]]] = [(self, iter(self._parents))]
        while stack:
            node, pending = stack[-1]
            for parent in pending:
                if parent.requires_grad and id(parent) not in visited:
                    visited.add(id(parent))
                    stack.append((parent, iter(parent._parents)))
                    break
            else:
                stack.pop()
                order.append(node)
        return order

    def backward(self) -> None:
        """Berechnet die Gradienten aller Blaetter fuer einen skalaren Verlust.

        Raises:
            ShapeError: Wenn der Tensor kein Skalar ist.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() braucht einen Skalar, Form ist {self.shape}")
        if not self.requires_grad:
            return

        pending: dict[int, FloatArray] = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                # Blatt: hier wird akkumuliert
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad), strict=True):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    # ------------------------------------------------------------------
    # Elementweise Grundoperationen
    # ------------------------------------------------------------------

    def __add__(self, other: Tensor | float) -> Tensor:
        if not isinstance(other, Tensor):
            value = float(other)
            return Tensor.from_op(self.data + value, (self,), lambda g: (g,))
        _require_same_shape(self, other, "add")
        return Tensor.from_op(self.data + other.data, (self, other), lambda g: (g, g))

    def __radd__(self, other: float) -> Tensor:
        return self.__add__(other)

    def __sub__(self, other: Tensor | float) -> Tensor:
        if not isinstance(other, Tensor):
            value = float(other)
            return Tensor.from_op(self.data - value, (self,), lambda g: (g,))
        _require_same_shape(self, other, "sub")
        return Tensor.from_op(self.data - other.data, (self, other), lambda g: (g, -g))

    def __neg__(self) -> Tensor:
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other: Tensor | float) -> Tensor:
        if not isinstance(other, Tensor):
            factor = float(other)
            return Tensor.from_op(self.data * factor, (self,), lambda g: (g * factor,))
        _require_same_shape(self, other, "mul")
        a, b = self.data, other.data
        return Tensor.from_op(a * b, (self, other), lambda g: (g * b, g * a))

    def __rmul__(self, other: float) -> Tensor:
        return self.__mul__(other)

    def __matmul__(self, other: Tensor) -> Tensor:
        from .ops import matmul

        return matmul(self, other)


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: Formen {a.shape} und {b.shape} passen nicht zusammen")


def zero_grad(params: Iterable[Tensor]) -> None:
    """Setzt die Gradienten der uebergebenen Blaetter zurueck."""
    for param in params:
        param.grad = None
