"""Kleine Tensor-Bibliothek mit Rueckwaerts-Ableitung."""

from .gradcheck import GradCheckError, grad_check
from .ops import IGNORE, LabelRangeError
from .tensor import ShapeError, Tensor, zero_grad

__all__ = ["IGNORE", "GradCheckError", "LabelRangeError", "ShapeError", "Tensor", "grad_check", "zero_grad"]
