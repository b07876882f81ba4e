"""Loss-Service - Die fuenf Verlustterme und ihre Kombination.

Maskierte Pixel werden auf IGNORE umgeschrieben statt mit 0 multipliziert -
sonst wuerden sie als Hintergrund zaehlen. Ziele (Pseudo-Labels, Masken,
schwache Logits im weichen Verlust) sind immer Arrays und damit vom Band
getrennt.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..models.step_result import LossBreakdown
from ..numeric import ops
from ..numeric.ops import IGNORE
from ..numeric.tensor import Tensor

DEFAULT_WEIGHTS = (0.5, 0.25, 0.25)


def masked_target(pseudo: ArrayLike, mask: ArrayLike) -> NDArray[np.uint8]:
    """Pseudo-Labels mit IGNORE an allen Pixeln, deren Maske 0 ist."""
    labels = np.asarray(pseudo).astype(np.uint8)
    return np.where(np.asarray(mask).astype(bool), labels, np.uint8(IGNORE)).astype(np.uint8)


def _as_flat_map(z: Tensor, h: int, w: int) -> Tensor:
    return ops.reshape(z, (z.shape[0], h, w))


def loss_sup_hard(logits_w_labeled: Tensor, y: ArrayLike) -> Tensor:
    """Kreuzentropie der schwachen Sicht gegen das Label."""
    return ops.masked_cross_entropy(logits_w_labeled, y)


def loss_unsup_hard(
    logits_s: Tensor,
    pseudo: ArrayLike,
    mask: ArrayLike,
    perturbed: tuple[Tensor, ArrayLike, ArrayLike] | None = None,
) -> Tensor:
    """Harter Pseudo-Label-Verlust der starken Sicht.

    Mit ``perturbed = (logits_fp, pseudo_fp, mask_fp)`` kommt die
    Kreuzentropie des gestoerten Zweigs dazu und beide werden gemittelt.
    """
    strong = ops.masked_cross_entropy(logits_s, masked_target(pseudo, mask))
    if perturbed is None:
        return strong
    logits_fp, pseudo_fp, mask_fp = perturbed
    return (strong + ops.masked_cross_entropy(logits_fp, masked_target(pseudo_fp, mask_fp))) * 0.5


def loss_unsup_soft(logits_w: Tensor | ArrayLike, logits_s: Tensor, mask: ArrayLike) -> Tensor:
    """KL(schwach || stark) auf den Pixeln mit Maske 1; die schwache Seite ist Ziel."""
    data = logits_w.data if isinstance(logits_w, Tensor) else logits_w
    return ops.kl_divergence(Tensor(np.array(data, dtype=np.float64)), logits_s, mask)


def loss_corr(z_w: Tensor, z_s: Tensor, pseudo: ArrayLike, mask: ArrayLike, h: int, w: int) -> Tensor:
    """Mittel der Kreuzentropien beider propagierter Darstellungen.

    ``pseudo`` und ``mask`` muessen bereits auf ``h x w`` verkleinert sein.
    Fuer getrennte Ziele je Zweig siehe ``loss_corr_pair``.
    """
    return loss_corr_pair(z_w, pseudo, mask, z_s, pseudo, mask, h, w)


def loss_corr_pair(
    z_w: Tensor,
    pseudo_w: ArrayLike,
    mask_w: ArrayLike,
    z_s: Tensor,
    pseudo_s: ArrayLike,
    mask_s: ArrayLike,
    h: int,
    w: int,
) -> Tensor:
    """Wie ``loss_corr``, aber mit eigenem Ziel fuer die (gemischte) starke Sicht."""
    weak = ops.masked_cross_entropy(_as_flat_map(z_w, h, w), masked_target(pseudo_w, mask_w))
    strong = ops.masked_cross_entropy(_as_flat_map(z_s, h, w), masked_target(pseudo_s, mask_s))
    return (weak + strong) * 0.5


def loss_sup_corr(z_l: Tensor, y: ArrayLike, h: int, w: int) -> Tensor:
    """Kreuzentropie der propagierten Darstellung gegen das verkleinerte Label."""
    return ops.masked_cross_entropy(_as_flat_map(z_l, h, w), y)


def zero_loss() -> Tensor:
    """Konstante 0 fuer abgeschaltete Terme."""
    return Tensor(0.0)


def total_loss(
    ls_h: Tensor,
    ls_c: Tensor,
    lu_h: Tensor,
    lu_s: Tensor,
    lu_c: Tensor,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
) -> LossBreakdown:
    """``0.5 * (0.5 * (ls_h + ls_c) + l1 * lu_h + l2 * lu_s + l3 * lu_c)``."""
    lambda1, lambda2, lambda3 = weights
    supervised = (ls_h + ls_c) * 0.5
    unsupervised = lu_h * lambda1 + lu_s * lambda2 + lu_c * lambda3
    return LossBreakdown(
        ls_h=ls_h,
        ls_c=ls_c,
        lu_h=lu_h,
        lu_s=lu_s,
        lu_c=lu_c,
        lambda1=lambda1,
        lambda2=lambda2,
        lambda3=lambda3,
        total=(supervised + unsupervised) * 0.5,
    )
