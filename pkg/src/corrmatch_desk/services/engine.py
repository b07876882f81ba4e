"""Engine-Service - Ein vollstaendiger Trainingsschritt.

Ablauf je Schritt:

1. Schwache und starke Sichten (gemeinsame Geometrie je Probe).
2. Schwache Vorwaertsrechnung der unbeschrifteten Proben; Konfidenz,
   Pseudo-Labels und Filterkarte daraus als reine Arrays.
3. Update der Schwelle.
4. CutMix auf starken Sichten, Pseudo-Labels, Masken und schwachen Logits.
5. Starke Vorwaertsrechnung, optional der gestoerte Zweig.
6. Korrelationskarten und Propagation fuer alle Zweige, alle Verluste.
7. SGD mit Momentum unter Poly-Lernrate.

Alles, was nicht differenziert wird, steckt in ``StepPlan``. Mit festem Plan
ist der Verlust eine glatte Funktion der Parameter - so laesst sich die
gesamte Ableitung mit zentralen Differenzen pruefen.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..models.dataset import Sample
from ..models.run_config import RunConfig
from ..models.step_result import LOSS_TERMS, LossBreakdown, StepDiagnostics
from ..models.threshold_state import ThresholdState
from ..numeric.ops import mean_of, nearest_downsample
from ..numeric.tensor import Tensor, zero_grad
from . import augment, losses, network
from .correlation import correlation_map, propagate
from .metrics import diagnostic_ratios
from .network import ForwardOutput, ModelParams
from .optimizer import SGDState, poly_lr, sgd_update
from .threshold import advance_threshold, confidence_and_pseudo, unlabeled_mask

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
LabelArray = NDArray[np.uint8]

_STREAM_KEY = 3


class NumericalAbort(ArithmeticError):
    """Ein Verlustterm ist nicht endlich; der Schritt wird abgebrochen."""

    def __init__(self, term: str, details: dict[str, Any]) -> None:
        super().__init__(f"Verlustterm {term} ist nicht endlich")
        self.term = term
        self.details = details


@dataclass(frozen=True, eq=False)
class StepStreams:
    """Getrennte Zufallsstroeme je Zweig, abgeleitet aus (Seed, Iteration).

    Wer aus einem Strom zieht, verschiebt keinen anderen.
    """

    labeled: np.random.Generator
    unlabeled: np.random.Generator
    cutmix: np.random.Generator
    dropout: np.random.Generator
    sampler: np.random.Generator

    @classmethod
    def derive(cls, seed: int, iteration: int) -> StepStreams:
        """Stroeme fuer einen Schritt."""
        children = np.random.SeedSequence(seed, spawn_key=(_STREAM_KEY, iteration)).spawn(5)
        labeled, unlabeled, cut, dropout, sampler = (np.random.default_rng(child) for child in children)
        return cls(labeled=labeled, unlabeled=unlabeled, cutmix=cut, dropout=dropout, sampler=sampler)


@dataclass(frozen=True, eq=False)
class StepPlan:
    """Alle nicht differenzierten Eingaben eines Schritts.

    Listen ueber unbeschriftete Proben sind leer, wenn ohne unbeschriftete
    Daten trainiert wird. ``pseudo``/``mask`` gehoeren zur ungemischten
    schwachen Sicht, ``*_mixed`` zur gemischten starken Sicht.
    """

    labeled_views: list[FloatArray]
    labeled_targets: list[LabelArray]
    feature_size: tuple[int, int]
    weak_views: list[FloatArray] = field(default_factory=list)
    strong_views: list[FloatArray] = field(default_factory=list)
    pseudo: list[LabelArray] = field(default_factory=list)
    mask: list[LabelArray] = field(default_factory=list)
    pseudo_mixed: list[LabelArray] = field(default_factory=list)
    mask_mixed: list[LabelArray] = field(default_factory=list)
    weak_logits_mixed: list[FloatArray] = field(default_factory=list)
    keep_masks: list[FloatArray] | None = None


def _downsampled(maps: list[LabelArray], size: tuple[int, int]) -> list[LabelArray]:
    return [nearest_downsample(m, *size) for m in maps]


def weak_forward(params: ModelParams, plan: StepPlan, config: RunConfig) -> list[ForwardOutput]:
    """Schwache Vorwaertsrechnung der unbeschrifteten Sichten laut Plan."""
    perturb = config.use_feature_perturb and plan.keep_masks is not None
    return [
        network.forward(params, view, perturb, keep_mask=plan.keep_masks[i] if plan.keep_masks is not None else None)
        for i, view in enumerate(plan.weak_views)
    ]


def plan_step(
    params: ModelParams,
    threshold_state: ThresholdState,
    labeled_batch: list[Sample],
    unlabeled_batch: list[Sample],
    streams: StepStreams,
    config: RunConfig,
    iteration: int = 0,
) -> tuple[StepPlan, list[ForwardOutput], ThresholdState, StepDiagnostics]:
    """Augmentierung, Pseudo-Labels, Schwellen-Update und CutMix.

    Returns:
        Den Plan, die schwachen Vorwaertsrechnungen (mit Band, sofern mit
        unbeschrifteten Daten trainiert wird), die neue Schwelle und die
        Diagnose des Schritts.
    """
    if not labeled_batch:
        raise ValueError("Leerer beschrifteter Batch")
    scale_range = (config.scale_min, config.scale_max)

    labeled_views: list[FloatArray] = []
    labeled_targets: list[LabelArray] = []
    for sample in labeled_batch:
        view, label_view, _ = augment.weak_augment(sample, streams.labeled, scale_range=scale_range)
        if label_view is None:
            raise ValueError(f"Probe {sample.id} hat kein Label")
        labeled_views.append(view)
        labeled_targets.append(label_view)
    height, width = labeled_views[0].shape[1:]
    feature_size = (height // 4, width // 4)

    if not unlabeled_batch:
        plan = StepPlan(labeled_views=labeled_views, labeled_targets=labeled_targets, feature_size=feature_size)
        return plan, [], threshold_state, StepDiagnostics(iteration=iteration, tau=threshold_state.tau)

    weak_views: list[FloatArray] = []
    strong_views: list[FloatArray] = []
    truths: list[LabelArray] = []
    valids: list[NDArray[np.bool_]] = []
    for sample in unlabeled_batch:
        view, _, geom = augment.weak_augment(sample, streams.unlabeled, scale_range=scale_range)
        weak_views.append(view)
        strong_views.append(augment.strong_augment(view, streams.unlabeled))
        truths.append(augment.apply_geometry(sample.ground_truth, geom, is_label=True).astype(np.uint8))
        valids.append(geom.valid_mask())

    keep_masks = None
    if config.use_unlabeled and config.use_feature_perturb and config.use_hard_loss:
        keep_masks = [network.sample_keep_mask(streams.dropout, config.feature_dim) for _ in unlabeled_batch]

    draft = StepPlan(
        labeled_views=labeled_views,
        labeled_targets=labeled_targets,
        feature_size=feature_size,
        weak_views=weak_views,
        keep_masks=keep_masks,
    )
    forward_params = params if config.use_unlabeled else params.detached()
    weak_outputs = weak_forward(forward_params, draft, config)

    confidences: list[FloatArray] = []
    pseudo: list[LabelArray] = []
    for output in weak_outputs:
        conf, labels = confidence_and_pseudo(output.logits)
        confidences.append(conf)
        pseudo.append(labels)
    masks = [unlabeled_mask(threshold_state, c, p, v) for c, p, v in zip(confidences, pseudo, valids, strict=True)]

    new_state = advance_threshold(
        threshold_state,
        np.concatenate([c[v] for c, v in zip(confidences, valids, strict=True)]),
        np.concatenate([p[v] for p, v in zip(pseudo, valids, strict=True)]),
    )

    ratios = diagnostic_ratios(np.stack(masks), np.stack(pseudo), np.stack(truths))
    diagnostics = StepDiagnostics(iteration=iteration, tau=new_state.tau, **ratios)

    weak_logits = [output.logits.data.copy() for output in weak_outputs]
    if config.use_cutmix and len(unlabeled_batch) >= 2:
        boxes = augment.sample_cutmix_boxes(len(unlabeled_batch), height, width, streams.cutmix)
        strong_mixed, pseudo_mixed, mask_mixed = augment.cutmix(strong_views, pseudo, masks, streams.cutmix, boxes=boxes)
        logits_mixed = augment.paste(weak_logits, boxes)
    else:
        strong_mixed, pseudo_mixed, mask_mixed, logits_mixed = strong_views, pseudo, masks, weak_logits

    plan = StepPlan(
        labeled_views=labeled_views,
        labeled_targets=labeled_targets,
        feature_size=feature_size,
        weak_views=weak_views,
        strong_views=[np.asarray(v, dtype=np.float64) for v in strong_mixed],
        pseudo=pseudo,
        mask=masks,
        pseudo_mixed=[np.asarray(p, dtype=np.uint8) for p in pseudo_mixed],
        mask_mixed=[np.asarray(m, dtype=np.uint8) for m in mask_mixed],
        weak_logits_mixed=[np.asarray(x, dtype=np.float64) for x in logits_mixed],
        keep_masks=keep_masks,
    )
    return plan, weak_outputs, new_state, diagnostics


def build_losses(
    params: ModelParams,
    plan: StepPlan,
    config: RunConfig,
    weak_outputs: list[ForwardOutput] | None = None,
) -> LossBreakdown:
    """Alle Verlustterme aus einem festen Plan.

    Abgeschaltete Terme sind konstante Nullen; die Formel fuer ``total`` gilt
    damit in jeder Konfiguration.
    """
    h, w = plan.feature_size
    zero = losses.zero_loss

    sup_hard: list[Tensor] = []
    sup_corr: list[Tensor] = []
    for view, target in zip(plan.labeled_views, plan.labeled_targets, strict=True):
        output = network.forward(params, view)
        sup_hard.append(losses.loss_sup_hard(output.logits, target))
        if config.use_corr_loss:
            corr = correlation_map(output.extracted, params.w1, params.w2)
            z_l = propagate(output.logits, corr, h, w)
            sup_corr.append(losses.loss_sup_corr(z_l, nearest_downsample(target, h, w), h, w))
    ls_h = mean_of(sup_hard)
    ls_c = mean_of(sup_corr) if sup_corr else zero()

    lu_h, lu_s, lu_c = zero(), zero(), zero()
    if config.use_unlabeled and plan.weak_views:
        if weak_outputs is None:
            weak_outputs = weak_forward(params, plan, config)
        hard: list[Tensor] = []
        soft: list[Tensor] = []
        corr_terms: list[Tensor] = []
        for i, weak in enumerate(weak_outputs):
            strong = network.forward(params, plan.strong_views[i])
            if config.use_hard_loss:
                perturbed = None
                if weak.perturbed_logits is not None:
                    perturbed = (weak.perturbed_logits, plan.pseudo[i], plan.mask[i])
                hard.append(losses.loss_unsup_hard(strong.logits, plan.pseudo_mixed[i], plan.mask_mixed[i], perturbed))
            if config.use_soft_loss:
                soft.append(losses.loss_unsup_soft(plan.weak_logits_mixed[i], strong.logits, plan.mask_mixed[i]))
            if config.use_corr_loss:
                z_w = propagate(weak.logits, correlation_map(weak.extracted, params.w1, params.w2), h, w)
                z_s = propagate(strong.logits, correlation_map(strong.extracted, params.w1, params.w2), h, w)
                pseudo_w, mask_w = _downsampled([plan.pseudo[i], plan.mask[i]], (h, w))
                pseudo_s, mask_s = _downsampled([plan.pseudo_mixed[i], plan.mask_mixed[i]], (h, w))
                corr_terms.append(losses.loss_corr_pair(z_w, pseudo_w, mask_w, z_s, pseudo_s, mask_s, h, w))
        lu_h = mean_of(hard) if hard else zero()
        lu_s = mean_of(soft) if soft else zero()
        lu_c = mean_of(corr_terms) if corr_terms else zero()

    return losses.total_loss(ls_h, ls_c, lu_h, lu_s, lu_c, (config.lambda1, config.lambda2, config.lambda3))


def check_finite(breakdown: LossBreakdown, diagnostics: StepDiagnostics, threshold_state: ThresholdState) -> None:
    """Bricht mit ``NumericalAbort`` ab, sobald ein Term nicht endlich ist."""
    values = breakdown.values()
    for term in (*LOSS_TERMS, "total"):
        if not math.isfinite(values[term]):
            details = {
                "term": term,
                "losses": values,
                "diagnostics": diagnostics.to_dict(),
                "threshold": threshold_state.to_dict(),
            }
            raise NumericalAbort(term, details)


def train_step(
    params: ModelParams,
    opt_state: SGDState,
    threshold_state: ThresholdState,
    labeled_batch: list[Sample],
    unlabeled_batch: list[Sample],
    rng: StepStreams,
    config: RunConfig,
) -> tuple[ModelParams, SGDState, ThresholdState, LossBreakdown, StepDiagnostics]:
    """Ein Trainingsschritt; Parameter und Zustaende kommen neu zurueck.

    Raises:
        NumericalAbort: Wenn ein Verlustterm nicht endlich ist.
    """
    iteration = opt_state.iteration
    plan, weak_outputs, new_threshold, diagnostics = plan_step(
        params, threshold_state, labeled_batch, unlabeled_batch, rng, config, iteration
    )
    breakdown = build_losses(params, plan, config, weak_outputs if config.use_unlabeled else None)
    check_finite(breakdown, diagnostics, new_threshold)

    zero_grad(params)
    breakdown.total.backward()
    lr = poly_lr(config.lr0, iteration, config.total_iters)
    new_params, new_opt = sgd_update(params, opt_state, lr, config.momentum, config.weight_decay)
    logger.debug(
        "Schritt %d: ls_h=%.4f ls_c=%.4f lu_h=%.4f lu_s=%.4f lu_c=%.4f tau=%.4f",
        iteration,
        breakdown.ls_h.item(),
        breakdown.ls_c.item(),
        breakdown.lu_h.item(),
        breakdown.lu_s.item(),
        breakdown.lu_c.item(),
        new_threshold.tau,
    )
    return new_params, new_opt, new_threshold, breakdown, diagnostics
