"""Tests fuer Konfidenz, Filterkarte und gelockerte Schwelle."""

from __future__ import annotations

import numpy as np
import pytest

from corrmatch_desk.models.run_config import ThresholdMode
from corrmatch_desk.models.threshold_state import ThresholdState
from corrmatch_desk.services import threshold
from corrmatch_desk.services.threshold import ThresholdRangeError


def _reference_ema(momentum: float, tau0: float, proposals: list[float]) -> list[float]:
    """Skalare Nachrechnung ohne Zustandsobjekt."""
    values = []
    tau = tau0
    for step, proposal in enumerate(proposals):
        tau = tau0 if step == 0 else momentum * tau + (1.0 - momentum) * proposal
        values.append(tau)
    return values


class TestConfidence:
    def test_confidence_and_pseudo(self) -> None:
        logits = np.zeros((3, 1, 2))
        logits[1, 0, 0] = 10.0
        conf, pseudo = threshold.confidence_and_pseudo(logits)
        assert pseudo.tolist() == [[1, 0]]
        assert conf[0, 0] > 0.99
        assert conf[0, 1] == pytest.approx(1.0 / 3.0)

    def test_filter_is_strict(self) -> None:
        mask = threshold.filter_map(np.array([0.5, 0.50000001, 0.4]), 0.5)
        assert mask.tolist() == [0, 1, 0]
        assert mask.dtype == np.uint8

    def test_proposal_is_mean_of_class_maxima(self) -> None:
        conf = np.array([[0.9, 0.6], [0.7, 0.8]])
        pseudo = np.array([[0, 0], [2, 2]])
        assert threshold.propose_threshold_increment(conf, pseudo) == pytest.approx((0.9 + 0.8) / 2)

    def test_proposal_of_empty_map(self) -> None:
        with pytest.raises(ValueError):
            threshold.propose_threshold_increment(np.zeros((0,)), np.zeros((0,)))


class TestEma:
    def test_first_update_sets_tau0(self) -> None:
        state = ThresholdState.initial(0.3, 0.9)
        updated = threshold.update_threshold(state, 1.0)
        assert updated.tau == 0.3
        assert updated.step == 1

    def test_second_update_moves_towards_proposal(self) -> None:
        state = threshold.update_threshold(ThresholdState.initial(0.2, 0.9), 0.5)
        state = threshold.update_threshold(state, 1.0)
        assert state.tau == pytest.approx(0.9 * 0.2 + 0.1 * 1.0)

    def test_matches_scalar_reference_over_many_steps(self) -> None:
        rng = np.random.default_rng(8)
        proposals = rng.uniform(0.0, 1.0, size=10_000).tolist()
        state = ThresholdState.initial(0.4, 0.999)
        for expected, proposal in zip(_reference_ema(0.999, 0.4, proposals), proposals, strict=True):
            state = threshold.update_threshold(state, proposal)
            assert abs(state.tau - expected) <= 1e-12

    def test_constant_proposal_closed_form(self) -> None:
        momentum, tau0, target = 0.999, 0.2, 1.0
        state = ThresholdState.initial(tau0, momentum)
        for _ in range(2001):
            state = threshold.update_threshold(state, target)
        # nach dem Setzen von tau0 folgen 2000 Mittelungsschritte
        expected = target + (tau0 - target) * momentum**2000
        assert state.tau == pytest.approx(expected, abs=1e-12)

    def test_stays_in_unit_interval(self) -> None:
        rng = np.random.default_rng(2)
        state = ThresholdState.initial(0.0, 0.5)
        for proposal in rng.uniform(0.0, 1.0, size=500):
            state = threshold.update_threshold(state, float(proposal))
            assert 0.0 <= state.tau <= 1.0

    @pytest.mark.parametrize("bad", [-0.01, 1.01, float("nan")])
    def test_out_of_range_proposal(self, bad: float) -> None:
        with pytest.raises(ThresholdRangeError):
            threshold.update_threshold(ThresholdState.initial(0.5, 0.9), bad)


class TestModes:
    def test_fixed_threshold_never_moves(self) -> None:
        state = ThresholdState.fixed(0.95)
        conf = np.array([0.1, 0.99])
        pseudo = np.array([0, 1])
        for _ in range(5):
            state = threshold.advance_threshold(state, conf, pseudo)
        assert state.tau == 0.95
        assert state.step == 0

    def test_global_mode_uses_proposal(self) -> None:
        state = ThresholdState.initial(0.5, 0.5)
        conf = np.array([0.9, 0.7])
        pseudo = np.array([0, 1])
        state = threshold.advance_threshold(state, conf, pseudo)
        state = threshold.advance_threshold(state, conf, pseudo)
        assert state.tau == pytest.approx(0.5 * 0.5 + 0.5 * 0.8)

    def test_per_class_moves_only_present_classes(self) -> None:
        state = ThresholdState.initial(0.5, 0.5, ThresholdMode.RELAXED_PER_CLASS, num_classes=3)
        conf = np.array([0.9, 0.7])
        pseudo = np.array([0, 2])
        state = threshold.advance_threshold(state, conf, pseudo)
        assert state.per_class_tau == (0.5, 0.5, 0.5)
        state = threshold.advance_threshold(state, conf, pseudo)
        assert state.per_class_tau == pytest.approx((0.7, 0.5, 0.6))
        assert state.tau == pytest.approx(0.5 * 0.5 + 0.5 * 0.8)

    def test_per_class_thresholds_are_max_normalised(self) -> None:
        state = ThresholdState(tau=0.8, tau0=0.5, momentum=0.9, step=3, mode=ThresholdMode.RELAXED_PER_CLASS, per_class_tau=(0.4, 0.8))
        np.testing.assert_allclose(state.class_thresholds(2), [0.4, 0.8])

    def test_per_class_update_requires_mode(self) -> None:
        with pytest.raises(ValueError):
            threshold.update_threshold_per_class(ThresholdState.initial(0.5, 0.9), np.ones(2), np.zeros(2))


class TestUnlabeledMask:
    def test_global_mask_respects_valid_pixels(self) -> None:
        state = ThresholdState.fixed(0.5)
        conf = np.array([[0.9, 0.9], [0.4, 0.6]])
        pseudo = np.zeros((2, 2), dtype=np.uint8)
        valid = np.array([[True, False], [True, True]])
        mask = threshold.unlabeled_mask(state, conf, pseudo, valid)
        assert mask.tolist() == [[1, 0], [0, 1]]

    def test_per_class_mask_uses_label_threshold(self) -> None:
        state = ThresholdState(tau=0.8, tau0=0.5, momentum=0.9, step=3, mode=ThresholdMode.RELAXED_PER_CLASS, per_class_tau=(0.4, 0.8))
        conf = np.array([0.5, 0.5])
        pseudo = np.array([0, 1])
        assert threshold.unlabeled_mask(state, conf, pseudo).tolist() == [1, 0]
