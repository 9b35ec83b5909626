"""Overlap metrics against a per-pixel recount oracle, plus clDice conventions."""

from fractions import Fraction

import numpy as np
import pytest

from skelloss.metrics import (METRIC_HIGHER_IS_BETTER, METRIC_NAMES,
                              ConfusionCounts, cl_dice, confusion,
                              evaluate_masks, hard_predict, overlap_metrics)


def brute_counts(pred, gt, k):
    """Pure-Python per-pixel recount for one class, used as the oracle."""
    tp = fp = fn = tn = 0
    for r in range(gt.shape[0]):
        for c in range(gt.shape[1]):
            p = int(pred[r, c]) == k
            g = int(gt[r, c]) == k
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def exact_percent(num, den, if_empty):
    if den == 0:
        return if_empty
    return float(Fraction(100 * num, den))


def random_pair(rng, size=12, num_classes=1):
    pred = rng.integers(0, num_classes + 1, size=(size, size)).astype(np.int64)
    gt = rng.integers(0, num_classes + 1, size=(size, size)).astype(np.int64)
    return pred, gt


class TestConfusion:
    def test_matches_recount_on_random_pairs(self):
        rng = np.random.default_rng(0)
        for trial in range(40):
            k_max = 1 + trial % 3
            pred, gt = random_pair(rng, num_classes=k_max)
            counts = confusion(pred, gt, num_classes=k_max)
            for k in range(1, k_max + 1):
                assert brute_counts(pred, gt, k) == (
                    int(counts.tp[k - 1]), int(counts.fp[k - 1]),
                    int(counts.fn[k - 1]), int(counts.tn[k - 1]))
            assert counts.num_pixels == gt.size

    def test_default_class_count_comes_from_the_masks(self):
        pred = np.array([[0, 2], [0, 0]], dtype=np.int64)
        gt = np.array([[3, 0], [0, 0]], dtype=np.int64)
        assert confusion(pred, gt).num_classes == 3

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ValueError):
            confusion(np.zeros((2, 2), dtype=np.int64), np.zeros((2, 3), dtype=np.int64))


class TestOverlapMetrics:
    def test_all_counts_one(self):
        counts = ConfusionCounts(tp=np.array([1]), fp=np.array([1]),
                                 fn=np.array([1]), tn=np.array([1]), num_pixels=4)
        row = overlap_metrics(counts).per_class[1]
        assert row["dsc"] == 50.0
        assert row["jsi"] == pytest.approx(100.0 / 3.0, rel=1e-15)
        assert row["fnr"] == 50.0
        assert row["fpr"] == 50.0

    def test_values_match_exact_fractions(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            pred, gt = random_pair(rng, num_classes=2)
            report = overlap_metrics(confusion(pred, gt, num_classes=2))
            for k in (1, 2):
                tp, fp, fn, tn = brute_counts(pred, gt, k)
                row = report.per_class[k]
                assert row["dsc"] == exact_percent(2 * tp, 2 * tp + fp + fn, 100.0)
                assert row["jsi"] == exact_percent(tp, tp + fp + fn, 100.0)
                assert row["fnr"] == exact_percent(fn, fn + tp, 0.0)
                assert row["fpr"] == exact_percent(fp, fp + tn, 0.0)

    def test_jsi_is_dsc_over_two_minus_dsc(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            pred, gt = random_pair(rng)
            tp, fp, fn, _ = brute_counts(pred, gt, 1)
            if 2 * tp + fp + fn == 0:
                continue
            dsc = Fraction(2 * tp, 2 * tp + fp + fn)
            jsi = Fraction(tp, tp + fp + fn)
            assert jsi == dsc / (2 - dsc)

    def test_both_empty_conventions(self):
        zeros = np.zeros((4, 4), dtype=np.int64)
        row = overlap_metrics(confusion(zeros, zeros, num_classes=1)).per_class[1]
        assert row == {"dsc": 100.0, "jsi": 100.0, "fnr": 0.0, "fpr": 0.0}

    def test_empty_gt_nonempty_pred(self):
        gt = np.zeros((4, 4), dtype=np.int64)
        pred = gt.copy()
        pred[1, 1] = 1
        row = overlap_metrics(confusion(pred, gt, num_classes=1)).per_class[1]
        assert row["dsc"] == 0.0 and row["jsi"] == 0.0
        assert row["fnr"] == 0.0  # no positives to miss
        assert row["fpr"] == pytest.approx(100.0 / 16.0)

    def test_macro_is_mean_of_per_class(self):
        rng = np.random.default_rng(3)
        pred, gt = random_pair(rng, num_classes=3)
        report = overlap_metrics(confusion(pred, gt, num_classes=3))
        for name in ("dsc", "jsi", "fnr", "fpr"):
            expect = np.mean([report.per_class[k][name] for k in (1, 2, 3)])
            assert report.macro[name] == pytest.approx(expect, rel=1e-15)


class TestClDice:
    def test_identical_one_pixel_curves_score_100(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            mask = np.zeros((16, 16), dtype=np.int64)
            r, c = rng.integers(2, 14, size=2)
            if rng.random() < 0.5:
                mask[r, 2:14] = 1
            else:
                for i in range(10):
                    mask[min(15, r % 6 + i), min(15, c % 6 + i)] = 1
            assert cl_dice(mask, mask.copy())[1] == 100.0

    def test_disjoint_curves_score_0(self):
        a = np.zeros((10, 10), dtype=np.int64)
        b = np.zeros((10, 10), dtype=np.int64)
        a[2, 1:9] = 1
        b[7, 1:9] = 1
        assert cl_dice(a, b)[1] == 0.0

    def test_emptiness_conventions(self):
        zeros = np.zeros((6, 6), dtype=np.int64)
        line = zeros.copy()
        line[3, 1:5] = 1
        assert cl_dice(zeros, zeros)[1] == 100.0
        assert cl_dice(line, zeros)[1] == 0.0
        assert cl_dice(zeros, line)[1] == 0.0

    def test_vanishing_skeleton_falls_back_to_the_mask(self):
        block = np.zeros((8, 8), dtype=np.int64)
        block[3:5, 3:5] = 1  # isolated 2x2, thins away completely
        assert cl_dice(block, block.copy())[1] == 100.0
        shifted = np.roll(block, 3, axis=1)
        assert cl_dice(block, shifted)[1] == 0.0

    def test_macro_key_present(self):
        rng = np.random.default_rng(5)
        pred, gt = random_pair(rng, num_classes=2)
        out = cl_dice(pred, gt, num_classes=2)
        assert set(out) == {1, 2, "macro"}
        assert out["macro"] == pytest.approx((out[1] + out[2]) / 2.0, rel=1e-15)


class TestHardPredict:
    def test_binary_tie_goes_to_foreground(self):
        pred = np.full((2, 3, 3), 0.5)
        assert (hard_predict(pred) == 1).all()

    def test_binary_threshold(self):
        fg = np.array([[0.4, 0.6]])
        pred = np.stack([1.0 - fg, fg])
        assert hard_predict(pred).tolist() == [[0, 1]]
        assert hard_predict(pred, threshold=0.3).tolist() == [[1, 1]]

    def test_multiclass_argmax_with_low_channel_ties(self):
        pred = np.full((3, 2, 2), 1.0 / 3.0)
        assert (hard_predict(pred) == 0).all()
        pred = np.zeros((3, 1, 1))
        pred[2, 0, 0] = 0.6
        pred[0, 0, 0] = 0.4
        assert hard_predict(pred)[0, 0] == 2

    def test_rejects_unnormalized_input(self):
        with pytest.raises(ValueError):
            hard_predict(np.full((2, 2, 2), 0.6))

    def test_rejects_degenerate_threshold(self):
        pred = np.full((2, 2, 2), 0.5)
        for bad in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                hard_predict(pred, threshold=bad)


class TestEvaluateMasks:
    def test_metric_ordering_is_stable(self):
        rng = np.random.default_rng(6)
        pred, gt = random_pair(rng, num_classes=2)
        report = evaluate_masks(pred, gt, num_classes=2)
        assert tuple(report.macro) == METRIC_NAMES
        for k in (1, 2):
            assert tuple(report.per_class[k]) == METRIC_NAMES

    def test_perfect_prediction(self):
        rng = np.random.default_rng(7)
        gt = np.zeros((12, 12), dtype=np.int64)
        gt[4, 2:10] = 1
        report = evaluate_masks(gt.copy(), gt)
        assert report.macro == {"dsc": 100.0, "cldice": 100.0, "jsi": 100.0,
                                "fnr": 0.0, "fpr": 0.0}

    def test_direction_flags_cover_all_metrics(self):
        assert set(METRIC_HIGHER_IS_BETTER) == set(METRIC_NAMES)
