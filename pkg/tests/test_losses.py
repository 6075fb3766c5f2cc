"""Closed-form loss fixtures and the weighted-total composition."""

import math

import numpy as np
import pytest

from aftal.losses import (
    Annotation,
    DetectionLossConfig,
    Instance,
    bce_with_logits,
    centerness_targets,
    detection_loss,
    focal_cls_loss,
    tiou_loss_terms,
)
from aftal.model import Detector, FeatureSequence, ModelConfig
from aftal.tensorcore import Tensor, check_gradients


def logits_for_prob(p_correct, n_classes, correct):
    """Two-way split logits giving softmax probability p_correct to `correct`."""
    rest = (1 - p_correct) / (n_classes - 1)
    logits = np.full(n_classes, math.log(rest))
    logits[correct] = math.log(p_correct)
    return logits


class TestFocalLoss:
    def test_half_probability_fixture(self):
        # closed form: alpha * (1-p)^gamma * (-ln p) with p = 0.5
        logits = logits_for_prob(0.5, 4, correct=2)[None, :]
        loss = focal_cls_loss(Tensor(logits), np.array([2]), n_pos=1)
        assert loss.item() == pytest.approx(0.25 * 0.25 * math.log(2), abs=1e-4)

    def test_certain_prediction_vanishes(self):
        logits = np.zeros((1, 3))
        logits[0, 1] = 40.0
        loss = focal_cls_loss(Tensor(logits), np.array([1]), n_pos=1)
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_normalization_arithmetic(self):
        row = logits_for_prob(0.5, 4, correct=1)
        single = focal_cls_loss(Tensor(row[None, :]), np.array([1]), n_pos=1).item()
        double = focal_cls_loss(Tensor(np.stack([row, row])), np.array([1, 1]), n_pos=2).item()
        assert double == pytest.approx(single, rel=1e-12)

    def test_background_uses_complement_alpha(self):
        row = logits_for_prob(0.5, 4, correct=0)
        loss = focal_cls_loss(Tensor(row[None, :]), np.array([0]), n_pos=1).item()
        assert loss == pytest.approx(0.75 * 0.25 * math.log(2), abs=1e-6)

    def test_zero_positives_gives_zero(self):
        loss = focal_cls_loss(Tensor(np.zeros((3, 4))), np.zeros(3, dtype=int), n_pos=0)
        assert loss.item() == 0.0

    def test_gradients(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(5, 4)))
        targets = np.array([1, 0, 3, 2, 0])
        report = check_gradients(
            lambda x_: focal_cls_loss(x_, targets, n_pos=3), [x])
        assert report.passed, report.summary()


class TestLocTerms:
    def test_perfect_overlap_zero(self):
        terms = tiou_loss_terms(Tensor(np.array([5.0])), Tensor(np.array([15.0])),
                                np.array([5.0]), np.array([15.0]))
        assert terms.numpy()[0] == pytest.approx(0.0, abs=1e-12)

    def test_partial_overlap_fixture(self):
        terms = tiou_loss_terms(Tensor(np.array([0.0])), Tensor(np.array([10.0])),
                                np.array([5.0]), np.array([15.0]))
        assert terms.numpy()[0] == pytest.approx(2 / 3, abs=1e-9)

    def test_l1_offset_fixture(self):
        pred = Tensor(np.array([[0.2, -0.1]]))
        target = Tensor(np.array([[0.0, 0.0]]))
        assert (pred - target).abs().sum().item() == pytest.approx(0.3, abs=1e-12)

    def test_tiou_term_gradients(self):
        rng = np.random.default_rng(1)
        start = Tensor(rng.uniform(0, 5, size=4))
        end = Tensor(rng.uniform(10, 20, size=4))
        gs, ge = rng.uniform(0, 6, size=4), rng.uniform(9, 18, size=4)
        report = check_gradients(
            lambda s, e: tiou_loss_terms(s, e, gs, ge).sum(), [start, end])
        assert report.passed, report.summary()


class TestQualityPieces:
    def test_bce_fixture(self):
        # eta = 0.5 (logit 0), target 1 -> ln 2
        loss = bce_with_logits(Tensor(np.zeros(1)), np.ones(1))
        assert loss.numpy()[0] == pytest.approx(math.log(2), abs=1e-9)

    def test_bce_minimized_at_target(self):
        target = np.array([0.7])
        logits = np.linspace(-4, 4, 161)
        values = [bce_with_logits(Tensor(np.array([z])), target).numpy()[0] for z in logits]
        best = logits[int(np.argmin(values))]
        # minimum of BCE(sigmoid(z), q) sits at z = logit(q)
        assert best == pytest.approx(math.log(0.7 / 0.3), abs=0.1)

    def test_centerness_definition(self):
        t = np.array([5.0, 10.0, 2.0])
        gs = np.array([0.0, 0.0, 0.0])
        ge = np.array([10.0, 40.0, 40.0])
        got = centerness_targets(t, gs, ge)
        np.testing.assert_allclose(got, [1.0, math.sqrt(10 / 30), math.sqrt(2 / 38)])


def tiny_forward(seed=0, num_classes=2):
    cfg = ModelConfig(in_channels=4, channels=8, num_classes=num_classes,
                      num_levels=3, groups=2, seed=seed)
    det = Detector(cfg)
    rng = np.random.default_rng(seed)
    feat = FeatureSequence(Tensor(rng.normal(size=(16, 4))), frames_per_step=4.0)
    return det, det.forward_clip(feat)


class TestDetectionLossComposition:
    def test_total_is_weighted_sum(self):
        _, fwd = tiny_forward()
        ann = Annotation([Instance(8.0, 40.0, 1)])
        cfg = DetectionLossConfig(lambda_loc=10.0, gamma_quality=1.0)
        total, report = detection_loss(fwd, ann, cfg)
        expect = (report.cls_coarse + 10.0 * report.loc_coarse
                  + report.cls_refined + 10.0 * report.loc_refined
                  + 1.0 * report.quality)
        assert report.total == pytest.approx(expect, rel=1e-12)
        assert total.item() == report.total

    def test_zero_weights_reduce_to_classification(self):
        _, fwd = tiny_forward(seed=1)
        ann = Annotation([Instance(8.0, 40.0, 1)])
        total, report = detection_loss(fwd, ann, DetectionLossConfig(
            lambda_loc=0.0, gamma_quality=0.0))
        assert report.total == pytest.approx(report.cls_coarse + report.cls_refined, rel=1e-12)

    def test_all_terms_nonnegative_and_finite(self):
        for seed in range(3):
            _, fwd = tiny_forward(seed=seed)
            ann = Annotation([Instance(4.0, 30.0, 1), Instance(40.0, 56.0, 2)])
            total, report = detection_loss(fwd, ann, DetectionLossConfig())
            for name, value in report.as_dict().items():
                assert np.isfinite(value), name
                assert value >= 0.0, name

    def test_no_annotations_gives_zero_positive_losses(self):
        _, fwd = tiny_forward(seed=2)
        total, report = detection_loss(fwd, Annotation([]), DetectionLossConfig())
        assert report.total == 0.0

    def test_backward_produces_finite_parameter_gradients(self):
        det, fwd = tiny_forward(seed=3)
        ann = Annotation([Instance(8.0, 40.0, 1)])
        total, _ = detection_loss(fwd, ann, DetectionLossConfig())
        total.backward()
        for name, p in det.parameters().items():
            if p.grad is not None:
                assert np.isfinite(p.grad).all(), name

    def test_quality_modes_run(self):
        for mode in ("tiou", "centerness", "off"):
            _, fwd = tiny_forward(seed=4)
            ann = Annotation([Instance(8.0, 40.0, 1)])
            total, report = detection_loss(
                fwd, ann, DetectionLossConfig(quality_mode=mode))
            assert np.isfinite(report.total)
            if mode == "off":
                assert report.quality == 0.0
