"""Segmentation metrics against independent brute-force oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segtriage.bundle import LabelMap, ProbabilityStack
from segtriage.metrics import (
    ClassWeights,
    MeanProbabilityMap,
    MissingClassError,
    SegmentationMap,
    argmax_segmentation,
    class_weights,
    dice_report,
    mean_probability,
    weighted_cross_entropy,
)

from conftest import make_class_spec, random_stack


def dice_oracle(pred: np.ndarray, label: np.ndarray, c: int):
    """Set-based Dice with the both-empty-is-1 convention, plus accuracy."""
    per = []
    h, w = pred.shape
    for cls in range(c):
        a = {(i, j) for i in range(h) for j in range(w) if pred[i, j] == cls}
        b = {(i, j) for i in range(h) for j in range(w) if label[i, j] == cls}
        if not a and not b:
            per.append(1.0)
        else:
            per.append(2.0 * len(a & b) / (len(a) + len(b)))
    acc = sum(
        1 for i in range(h) for j in range(w) if pred[i, j] == label[i, j]
    ) / (h * w)
    return per, sum(per) / c, acc


def wce_oracle(p: np.ndarray, label: np.ndarray, w_vec: np.ndarray) -> float:
    """Literal triple loop over pixels and classes."""
    c, h, w = p.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            for cls in range(c):
                g = 1.0 if label[i, j] == cls else 0.0
                clamped = min(max(float(p[cls, i, j]), 1e-12), 1.0)
                total += w_vec[cls] * g * math.log(clamped)
    return -total / (h * w)


class TestMeanProbability:
    def test_two_point_mean(self):
        stack = ProbabilityStack(
            np.array(
                [[[[0.6]], [[0.4]]], [[[0.8]], [[0.2]]]], dtype=np.float32
            )
        )
        out = mean_probability(stack)
        np.testing.assert_allclose(out.values[:, 0, 0], [0.7, 0.3], atol=1e-7)

    def test_single_pass_identity(self, rng):
        stack = ProbabilityStack(random_stack(rng, 1, 3, 4, 4))
        out = mean_probability(stack)
        np.testing.assert_allclose(out.values, stack.values[0], atol=0)

    def test_matches_naive_double_loop(self, rng):
        stack = ProbabilityStack(random_stack(rng, 5, 3, 4, 4))
        out = mean_probability(stack)
        t, c, h, w = stack.shape
        for cls in range(c):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for tt in range(t):
                        acc += float(stack.values[tt, cls, i, j])
                    assert abs(out.values[cls, i, j] - acc / t) < 1e-7


class TestArgmaxSegmentation:
    def test_clear_winner(self):
        pmap = MeanProbabilityMap(np.array([[[0.7]], [[0.3]]]))
        assert argmax_segmentation(pmap).values[0, 0] == 0

    def test_tie_breaks_to_lowest_index(self):
        pmap = MeanProbabilityMap(np.array([[[0.5]], [[0.5]]]))
        assert argmax_segmentation(pmap).values[0, 0] == 0
        pmap = MeanProbabilityMap(
            np.array([[[0.2]], [[0.4]], [[0.4]]])
        )
        assert argmax_segmentation(pmap).values[0, 0] == 1

    def test_matches_bruteforce_scan(self, rng):
        raw = rng.uniform(0.1, 1.0, size=(4, 6, 7))
        raw /= raw.sum(axis=0, keepdims=True)
        pmap = MeanProbabilityMap(raw)
        seg = argmax_segmentation(pmap)
        for i in range(6):
            for j in range(7):
                best, best_p = 0, -1.0
                for cls in range(4):
                    if raw[cls, i, j] > best_p:
                        best, best_p = cls, raw[cls, i, j]
                assert seg.values[i, j] == best


class TestDiceReport:
    def test_perfect_prediction(self, rng):
        spec = make_class_spec(3)
        lab = rng.integers(0, 3, size=(5, 5)).astype(np.uint8)
        report = dice_report(SegmentationMap(lab), LabelMap(lab), spec)
        np.testing.assert_array_equal(report.per_class, np.ones(3))
        assert report.mean_dice == 1.0
        assert report.pixel_accuracy == 1.0

    def test_hand_counted_2x2(self):
        spec = make_class_spec(2)
        pred = SegmentationMap(np.array([[0, 1], [1, 1]], dtype=np.uint8))
        label = LabelMap(np.array([[0, 1], [0, 1]], dtype=np.uint8))
        report = dice_report(pred, label, spec)
        np.testing.assert_allclose(report.per_class, [2 / 3, 4 / 5])
        assert abs(report.mean_dice - 11 / 15) < 1e-12
        assert report.pixel_accuracy == 0.75

    def test_false_positive_class_scores_zero(self):
        """Predicting a class the label lacks drives its Dice to zero."""
        spec = make_class_spec(3)
        pred = SegmentationMap(np.array([[2, 0], [0, 0]], dtype=np.uint8))
        label = LabelMap(np.zeros((2, 2), dtype=np.uint8))
        report = dice_report(pred, label, spec)
        assert report.per_class[2] == 0.0

    def test_both_empty_class_scores_one(self):
        spec = make_class_spec(3)
        pred = SegmentationMap(np.zeros((2, 2), dtype=np.uint8))
        label = LabelMap(np.zeros((2, 2), dtype=np.uint8))
        report = dice_report(pred, label, spec)
        assert report.per_class[1] == 1.0
        assert report.per_class[2] == 1.0

    def test_mean_is_arithmetic_mean(self, rng):
        spec = make_class_spec(4)
        pred = SegmentationMap(rng.integers(0, 4, size=(8, 8)).astype(np.uint8))
        label = LabelMap(rng.integers(0, 4, size=(8, 8)).astype(np.uint8))
        report = dice_report(pred, label, spec)
        assert abs(report.mean_dice - report.per_class.mean()) < 1e-12

    def test_dimension_mismatch(self, rng):
        spec = make_class_spec(2)
        with pytest.raises(ValueError, match="dimension mismatch"):
            dice_report(
                SegmentationMap(np.zeros((2, 2), dtype=np.uint8)),
                LabelMap(np.zeros((3, 2), dtype=np.uint8)),
                spec,
            )

    def test_1000_random_instances_match_set_oracle_exactly(self):
        rng = np.random.default_rng(1234)
        spec = make_class_spec(4)
        for _ in range(1000):
            pred = rng.integers(0, 4, size=(8, 8)).astype(np.uint8)
            label = rng.integers(0, 4, size=(8, 8)).astype(np.uint8)
            report = dice_report(SegmentationMap(pred), LabelMap(label), spec)
            per, mean, acc = dice_oracle(pred, label, 4)
            assert report.per_class.tolist() == per
            assert report.mean_dice == mean
            assert report.pixel_accuracy == acc


class TestDiceProperties:
    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    @settings(max_examples=40, deadline=None)
    def test_symmetry(self, seed, c):
        rng = np.random.default_rng(seed)
        spec = make_class_spec(c)
        a = rng.integers(0, c, size=(6, 6)).astype(np.uint8)
        b = rng.integers(0, c, size=(6, 6)).astype(np.uint8)
        fwd = dice_report(SegmentationMap(a), LabelMap(b), spec)
        rev = dice_report(SegmentationMap(b), LabelMap(a), spec)
        np.testing.assert_array_equal(fwd.per_class, rev.per_class)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_consistent_class_permutation_permutes_per_class(self, seed):
        rng = np.random.default_rng(seed)
        c = 4
        spec = make_class_spec(c)
        pred = rng.integers(0, c, size=(6, 6)).astype(np.uint8)
        label = rng.integers(0, c, size=(6, 6)).astype(np.uint8)
        perm = rng.permutation(c).astype(np.uint8)
        base = dice_report(SegmentationMap(pred), LabelMap(label), spec)
        mapped = dice_report(
            SegmentationMap(perm[pred]), LabelMap(perm[label]), spec
        )
        for cls in range(c):
            assert mapped.per_class[perm[cls]] == base.per_class[cls]
        assert (base.per_class >= 0).all() and (base.per_class <= 1).all()

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_single_pass_argmax_equals_pipeline(self, seed):
        rng = np.random.default_rng(seed)
        stack = ProbabilityStack(random_stack(rng, 1, 3, 5, 5))
        via_mean = argmax_segmentation(mean_probability(stack))
        direct = np.argmax(stack.values[0], axis=0)
        np.testing.assert_array_equal(via_mean.values, direct)


class TestClassWeights:
    def test_equal_counts_give_unit_weights(self):
        spec = make_class_spec(2)
        lab = LabelMap(np.array([[0, 1], [0, 1]], dtype=np.uint8))
        cw = class_weights([lab], spec)
        np.testing.assert_allclose(cw.w, [1.0, 1.0])

    def test_hand_formula_counts_3_1(self):
        spec = make_class_spec(2)
        lab = LabelMap(np.array([[0, 0], [0, 1]], dtype=np.uint8))
        cw = class_weights([lab], spec)
        np.testing.assert_allclose(cw.w, [2 / 3, 2.0])

    def test_absent_class_errors_naming_it(self):
        spec = make_class_spec(3)
        lab = LabelMap(np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(MissingClassError, match="class_1"):
            class_weights([lab], spec)

    def test_frequency_weighted_mean_is_one(self, rng):
        spec = make_class_spec(4)
        labs = [
            LabelMap(rng.integers(0, 4, size=(8, 8)).astype(np.uint8))
            for _ in range(3)
        ]
        cw = class_weights(labs, spec)
        counts = np.zeros(4)
        for lab in labs:
            counts += np.bincount(lab.values.ravel(), minlength=4)
        weighted_mean = float((counts / counts.sum()) @ cw.w)
        assert abs(weighted_mean - 1.0) < 1e-12


class TestWeightedCrossEntropy:
    def test_perfect_onehot_is_zero(self):
        label = LabelMap(np.array([[0, 1]], dtype=np.uint8))
        p = np.zeros((2, 1, 2))
        p[0, 0, 0] = 1.0
        p[1, 0, 0] = 0.0
        p[1, 0, 1] = 1.0
        pmap = MeanProbabilityMap(p)
        loss = weighted_cross_entropy(pmap, label, ClassWeights(np.ones(2)))
        assert loss == 0.0

    def test_single_pixel_half_half(self):
        label = LabelMap(np.array([[0]], dtype=np.uint8))
        pmap = MeanProbabilityMap(np.array([[[0.5]], [[0.5]]]))
        loss = weighted_cross_entropy(pmap, label, ClassWeights(np.ones(2)))
        assert abs(loss - math.log(2)) < 1e-12

    def test_matches_triple_loop_oracle(self, rng):
        spec = make_class_spec(3)
        raw = rng.uniform(0.05, 1.0, size=(3, 5, 6))
        raw /= raw.sum(axis=0, keepdims=True)
        pmap = MeanProbabilityMap(raw)
        label = LabelMap(rng.integers(0, 3, size=(5, 6)).astype(np.uint8))
        w_vec = rng.uniform(0.5, 2.0, size=3)
        loss = weighted_cross_entropy(pmap, label, ClassWeights(w_vec))
        assert abs(loss - wce_oracle(raw, label.values, w_vec)) < 1e-9

    def test_monotone_in_true_class_probability(self):
        """Raising the true-class probability at one pixel never raises the loss."""
        label = LabelMap(np.array([[0]], dtype=np.uint8))
        weights = ClassWeights(np.array([1.3, 0.7]))
        losses = []
        for p_true in np.linspace(0.05, 0.999, 30):
            pmap = MeanProbabilityMap(np.array([[[p_true]], [[1 - p_true]]]))
            losses.append(weighted_cross_entropy(pmap, label, weights))
        assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))
