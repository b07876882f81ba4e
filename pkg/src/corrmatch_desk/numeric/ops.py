"""Operationen der Tensor-Bibliothek samt Ableitungen.

Nur die Grundbausteine, die das Training wirklich braucht - kein allgemeines
Broadcasting. Konventionen, einmal festgelegt:

- ``conv2d`` ist eine Kreuzkorrelation (Kern wird nicht gespiegelt).
- ``bilinear_resize`` tastet wie "align_corners=False" ab; negative
  Quellkoordinaten werden auf 0 geklemmt.
- ``nearest_downsample`` nimmt je Zielpixel das Quellpixel unter dessen
  Mittelpunkt: ``src = floor((i + 0.5) * n_in / n_out)``.
- Verluste ueber eine leere Maske sind exakt 0 mit Gradient 0.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .tensor import FloatArray, ShapeError, Tensor

IGNORE = 255
"""Markiert Pixel, die aus dem Kreuzentropie-Mittel herausfallen."""

LabelArray = NDArray[np.integer]


class LabelRangeError(ValueError):
    """Ein Label liegt ausserhalb von {0..K-1} und ist nicht IGNORE."""


# ----------------------------------------------------------------------
# Reduktionen und Formaenderungen
# ----------------------------------------------------------------------


def total(x: Tensor) -> Tensor:
    """Summe aller Eintraege als Skalar."""
    shape = x.data.shape
    return Tensor.from_op(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor) -> Tensor:
    """Mittelwert aller Eintraege als Skalar."""
    return total(x) * (1.0 / x.size)


def mean_of(values: Sequence[Tensor]) -> Tensor:
    """Mittelwert mehrerer Skalare (z.B. Verluste ueber einen Batch)."""
    if not values:
        raise ShapeError("mean_of: leere Liste")
    for value in values:
        if value.size != 1:
            raise ShapeError(f"mean_of: Skalar erwartet, Form ist {value.shape}")
    n = len(values)
    acc = 0.0
    for value in values:
        acc += float(value.data.reshape(()))

    def backward(g: FloatArray) -> list[FloatArray | None]:
        share = g.reshape(()) / n
        return [np.full(v.data.shape, share) for v in values]

    return Tensor.from_op(np.asarray(acc / n), values, backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Neue Form bei gleicher Reihenfolge (row-major)."""
    original = x.data.shape
    out = x.data.reshape(tuple(shape))
    return Tensor.from_op(out.copy(), (x,), lambda g: (g.reshape(original),))


def transpose(x: Tensor) -> Tensor:
    """Transponiert eine Matrix."""
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: Matrix erwartet, Form ist {x.shape}")
    return Tensor.from_op(x.data.T.copy(), (x,), lambda g: (g.T.copy(),))


# ----------------------------------------------------------------------
# Lineare Algebra und Aktivierungen
# ----------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrixprodukt ``a[M x N] @ b[N x P]``.

    Raises:
        ShapeError: Wenn die inneren Dimensionen nicht uebereinstimmen.
    """
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: Formen {a.shape} und {b.shape} passen nicht zusammen")
    A, B = a.data, b.data
    return Tensor.from_op(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def relu(x: Tensor) -> Tensor:
    """max(0, x)."""
    active = x.data > 0
    return Tensor.from_op(np.where(active, x.data, 0.0), (x,), lambda g: (g * active,))


def softmax_array(x: FloatArray, axis: int) -> FloatArray:
    """Softmax auf einem Array, mit Abzug des Maximums."""
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    result: FloatArray = e / e.sum(axis=axis, keepdims=True)
    return result


def log_softmax_array(x: FloatArray, axis: int) -> FloatArray:
    """Log-Softmax auf einem Array, numerisch stabil."""
    shifted = x - x.max(axis=axis, keepdims=True)
    result: FloatArray = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    return result


def _check_axis(x: Tensor, axis: int) -> int:
    ndim = x.data.ndim
    if not -ndim <= axis < ndim:
        raise ShapeError(f"Achse {axis} ungueltig fuer Form {x.shape}")
    return axis % ndim


def softmax(x: Tensor, axis: int) -> Tensor:
    """Softmax entlang einer Achse."""
    axis = _check_axis(x, axis)
    s = softmax_array(x.data, axis)

    def backward(g: FloatArray) -> tuple[FloatArray]:
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(s, (x,), backward)


def log_softmax(x: Tensor, axis: int) -> Tensor:
    """Log-Softmax entlang einer Achse."""
    axis = _check_axis(x, axis)
    ls = log_softmax_array(x.data, axis)

    def backward(g: FloatArray) -> tuple[FloatArray]:
        return (g - np.exp(ls) * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(ls, (x,), backward)


# ----------------------------------------------------------------------
# Kanalweise Operationen auf C x H x W
# ----------------------------------------------------------------------


def _require_chw(x: Tensor, op: str) -> None:
    if x.data.ndim != 3:
        raise ShapeError(f"{op}: C x H x W erwartet, Form ist {x.shape}")


def _require_vector(v: Tensor, length: int, op: str) -> None:
    if v.shape != (length,):
        raise ShapeError(f"{op}: Vektor der Laenge {length} erwartet, Form ist {v.shape}")


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Addiert je Kanal einen Bias."""
    _require_chw(x, "add_channel_bias")
    _require_vector(bias, x.shape[0], "add_channel_bias")
    out = x.data + bias.data[:, None, None]
    return Tensor.from_op(out, (x, bias), lambda g: (g, g.sum(axis=(1, 2))))


def channel_affine(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """``gamma[c] * x[c] + beta[c]`` je Kanal."""
    _require_chw(x, "channel_affine")
    _require_vector(gamma, x.shape[0], "channel_affine")
    _require_vector(beta, x.shape[0], "channel_affine")
    X, G = x.data, gamma.data
    out = X * G[:, None, None] + beta.data[:, None, None]

    def backward(g: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        return g * G[:, None, None], (g * X).sum(axis=(1, 2)), g.sum(axis=(1, 2))

    return Tensor.from_op(out, (x, gamma, beta), backward)


def channel_normalize(x: Tensor, eps: float = 1e-10) -> Tensor:
    """Normiert jeden Kanal ueber die Bildpositionen auf Mittel 0 und Varianz 1."""
    _require_chw(x, "channel_normalize")
    X = x.data
    n = X.shape[1] * X.shape[2]
    centered = X - X.mean(axis=(1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=(1, 2), keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(g: FloatArray) -> tuple[FloatArray]:
        g_sum = g.sum(axis=(1, 2), keepdims=True)
        gx_sum = (g * xhat).sum(axis=(1, 2), keepdims=True)
        return (inv_std / n * (n * g - g_sum - xhat * gx_sum),)

    return Tensor.from_op(xhat, (x,), backward)


def channel_scale(x: Tensor, factors: ArrayLike) -> Tensor:
    """Multipliziert jeden Kanal mit einem festen Faktor (z.B. Dropout-Maske)."""
    _require_chw(x, "channel_scale")
    f = np.asarray(factors, dtype=np.float64)
    if f.shape != (x.shape[0],):
        raise ShapeError(f"channel_scale: {x.shape[0]} Faktoren erwartet, Form ist {f.shape}")
    scale = f[:, None, None]
    return Tensor.from_op(x.data * scale, (x,), lambda g: (g * scale,))


# ----------------------------------------------------------------------
# Faltung
# ----------------------------------------------------------------------


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """``floor((size + 2*padding - kernel) / stride) + 1``."""
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2D-Kreuzkorrelation ``Cin x H x W`` mit ``Cout x Cin x k x k``.

    Umgesetzt ueber im2col: die Fenster werden als Matrix aufgereiht und mit
    dem flachgelegten Kern multipliziert.

    Raises:
        ShapeError: Bei unpassenden Kanaelen oder einem Kern, der groesser als
            die gepolsterte Eingabe ist.
    """
    _require_chw(x, "conv2d")
    if kernel.data.ndim != 4 or kernel.shape[1] != x.shape[0] or kernel.shape[2] != kernel.shape[3]:
        raise ShapeError(f"conv2d: Kern {kernel.shape} passt nicht zur Eingabe {x.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: stride={stride}, padding={padding} ungueltig")

    cin, height, width = x.shape
    cout, _, k, _ = kernel.shape
    if k > height + 2 * padding or k > width + 2 * padding:
        raise ShapeError(f"conv2d: Kern {k}x{k} groesser als gepolsterte Eingabe {x.shape}, padding={padding}")

    out_h = conv_output_size(height, k, stride, padding)
    out_w = conv_output_size(width, k, stride, padding)
    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))
    windows = windows[:, : stride * (out_h - 1) + 1 : stride, : stride * (out_w - 1) + 1 : stride]
    # (Cin, Ho, Wo, k, k) -> (Cin*k*k, Ho*Wo)
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(cin * k * k, out_h * out_w)
    weight = kernel.data.reshape(cout, cin * k * k)
    out = (weight @ cols).reshape(cout, out_h, out_w)

    def backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        g2 = g.reshape(cout, out_h * out_w)
        grad_kernel = (g2 @ cols.T).reshape(kernel.data.shape)
        grad_cols = (weight.T @ g2).reshape(cin, k, k, out_h, out_w)
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                grad_padded[:, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += grad_cols[:, i, j]
        grad_x = grad_padded[:, padding : padding + height, padding : padding + width]
        return grad_x.copy(), grad_kernel

    return Tensor.from_op(out, (x, kernel), backward)


# ----------------------------------------------------------------------
# Groessenaenderung
# ----------------------------------------------------------------------


def bilinear_matrix(n_in: int, n_out: int) -> FloatArray:
    """Gewichte der bilinearen Abtastung als Matrix ``n_out x n_in``.

    Konvention "align_corners=False": Zielpixel ``i`` liegt bei der
    Quellkoordinate ``(i + 0.5) * n_in / n_out - 0.5``, nach unten auf 0
    geklemmt.
    """
    if n_in < 1 or n_out < 1:
        raise ShapeError(f"bilinear_matrix: Groessen {n_in} -> {n_out} ungueltig")
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.maximum(src, 0.0)
    lower = np.minimum(np.floor(src).astype(np.int64), n_in - 1)
    upper = np.minimum(lower + 1, n_in - 1)
    frac = src - lower
    weights = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(weights, (rows, lower), 1.0 - frac)
    np.add.at(weights, (rows, upper), frac)
    return weights


def resize_array(x: FloatArray, out_h: int, out_w: int) -> FloatArray:
    """Bilineare Groessenaenderung eines ``C x H x W``-Arrays ohne Band."""
    ry = bilinear_matrix(x.shape[1], out_h)
    rx = bilinear_matrix(x.shape[2], out_w)
    result: FloatArray = np.matmul(np.matmul(ry, x), rx.T)
    return result


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilineare Groessenaenderung ``C x H x W -> C x out_h x out_w``."""
    _require_chw(x, "bilinear_resize")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize: Zielgroesse {out_h}x{out_w} ungueltig")
    if (out_h, out_w) == x.shape[1:]:
        return Tensor.from_op(x.data.copy(), (x,), lambda g: (g,))
    ry = bilinear_matrix(x.shape[1], out_h)
    rx = bilinear_matrix(x.shape[2], out_w)
    # zwei Matrixprodukte je Kanal: (O x H) @ (H x W) @ (W x P)
    out = np.matmul(np.matmul(ry, x.data), rx.T)
    return Tensor.from_op(out, (x,), lambda g: (np.matmul(np.matmul(ry.T, g), rx),))


def nearest_index(n_in: int, n_out: int) -> NDArray[np.int64]:
    """Quellindizes der Naechster-Nachbar-Abtastung (Pixelmitte)."""
    i = np.arange(n_out, dtype=np.int64)
    return np.minimum(((2 * i + 1) * n_in) // (2 * n_out), n_in - 1)


def nearest_downsample(labels: ArrayLike, out_h: int, out_w: int) -> LabelArray:
    """Naechster-Nachbar-Abtastung einer Labelkarte; IGNORE bleibt IGNORE."""
    arr = np.asarray(labels)
    if arr.ndim != 2 or out_h < 1 or out_w < 1:
        raise ShapeError(f"nearest_downsample: H x W erwartet, Form {arr.shape}, Ziel {out_h}x{out_w}")
    rows = nearest_index(arr.shape[0], out_h)
    cols = nearest_index(arr.shape[1], out_w)
    result: LabelArray = arr[np.ix_(rows, cols)].copy()
    return result


# ----------------------------------------------------------------------
# Verluste
# ----------------------------------------------------------------------


def _check_labels(target: ArrayLike, num_classes: int, spatial: tuple[int, ...]) -> LabelArray:
    labels = np.asarray(target)
    if labels.shape != spatial:
        raise ShapeError(f"Labelkarte {labels.shape} passt nicht zu Logits mit Bildgroesse {spatial}")
    out_of_range = (labels != IGNORE) & ((labels < 0) | (labels >= num_classes))
    if out_of_range.any():
        bad = int(labels[out_of_range].flat[0])
        raise LabelRangeError(f"Label {bad} ausserhalb von 0..{num_classes - 1}")
    return labels


def masked_cross_entropy(logits: Tensor, target: ArrayLike) -> Tensor:
    """Mittlere Kreuzentropie ueber alle Pixel, die nicht IGNORE sind.

    Args:
        logits: ``K x H x W``.
        target: Labelkarte ``H x W`` mit Werten in {0..K-1} oder IGNORE.

    Raises:
        LabelRangeError: Bei Labels >= K, die nicht IGNORE sind.
    """
    _require_chw(logits, "masked_cross_entropy")
    num_classes = logits.shape[0]
    labels = _check_labels(target, num_classes, logits.shape[1:])
    valid = labels != IGNORE
    count = int(valid.sum())
    if count == 0:
        return Tensor.from_op(np.asarray(0.0), (logits,), lambda g: (np.zeros_like(logits.data),))

    log_p = log_softmax_array(logits.data, axis=0)
    index = np.where(valid, labels, 0).astype(np.int64)
    picked = np.take_along_axis(log_p, index[None], axis=0)[0]
    loss = -float(picked[valid].sum()) / count

    def backward(g: FloatArray) -> tuple[FloatArray]:
        grad = np.exp(log_p)
        np.put_along_axis(grad, index[None], np.take_along_axis(grad, index[None], axis=0) - 1.0, axis=0)
        return (grad * valid[None] * (float(g.reshape(())) / count),)

    return Tensor.from_op(np.asarray(loss), (logits,), backward)


def kl_divergence(p_logits: Tensor, q_logits: Tensor, mask: ArrayLike) -> Tensor:
    """Mittlere KL(softmax(p) || softmax(q)) ueber die Pixel mit Maske 1.

    Raises:
        ShapeError: Bei unterschiedlichen Formen oder nicht-binaerer Maske.
    """
    _require_chw(p_logits, "kl_divergence")
    if p_logits.shape != q_logits.shape:
        raise ShapeError(f"kl_divergence: Formen {p_logits.shape} und {q_logits.shape} passen nicht zusammen")
    m = np.asarray(mask)
    if m.shape != p_logits.shape[1:]:
        raise ShapeError(f"kl_divergence: Maske {m.shape} passt nicht zu {p_logits.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ShapeError("kl_divergence: Maske ist nicht binaer")
    selected = m.astype(bool)
    count = int(selected.sum())
    if count == 0:
        zeros = np.zeros_like(p_logits.data)
        return Tensor.from_op(np.asarray(0.0), (p_logits, q_logits), lambda g: (zeros, zeros))

    log_p = log_softmax_array(p_logits.data, axis=0)
    log_q = log_softmax_array(q_logits.data, axis=0)
    p = np.exp(log_p)
    q = np.exp(log_q)
    gap = log_p - log_q
    per_pixel = (p * gap).sum(axis=0)
    loss = float(per_pixel[selected].sum()) / count

    def backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        weight = selected[None] * (float(g.reshape(())) / count)
        grad_p = p * (gap - (p * gap).sum(axis=0, keepdims=True))
        grad_q = q - p
        return grad_p * weight, grad_q * weight

    return Tensor.from_op(np.asarray(loss), (p_logits, q_logits), backward)
