"""Loss-function values and analytic gradients against hand-computed cases."""

import math

import numpy as np
import pytest

from skelloss.losses import (LossConfig, combined_loss, cross_entropy_loss,
                             soft_dice_loss, srl_active_classes, srl_loss)


def two_channel(fg):
    """Stack a background channel under a foreground probability plane."""
    fg = np.asarray(fg, dtype=np.float64)
    return np.stack([1.0 - fg, fg])


def one_hot(gt, num_classes):
    maps = [(gt == k).astype(np.float64) for k in range(num_classes + 1)]
    return np.stack(maps)


class TestSrlLoss:
    def test_two_by_two_example(self):
        tubed = np.array([[1, 0], [0, 0]], dtype=np.int64)
        pred = two_channel([[0.8, 0.3], [0.1, 0.0]])
        value, grad, active = srl_loss(pred, tubed)
        assert value == -0.8
        assert active == (1,)
        expected = np.zeros_like(pred)
        expected[1, 0, 0] = -1.0
        assert np.array_equal(grad, expected)

    def test_perfect_recall_scores_minus_one(self):
        gt = np.zeros((6, 6), dtype=np.int64)
        gt[2, 1:5] = 1
        gt[4, 1:5] = 2
        pred = one_hot(gt, 2)
        value, _, active = srl_loss(pred, gt)  # any target subset works; use gt itself
        assert active == (1, 2)
        assert value == -1.0

    def test_zero_foreground_prediction_scores_zero(self):
        tubed = np.array([[1, 1], [0, 0]], dtype=np.int64)
        pred = two_channel([[0.0, 0.0], [0.0, 0.0]])
        value, grad, active = srl_loss(pred, tubed)
        assert value == 0.0
        assert active == (1,)
        assert (grad[1, 0] == -0.5).all()

    def test_empty_target_signals_via_flag(self):
        tubed = np.zeros((3, 3), dtype=np.int64)
        pred = two_channel(np.full((3, 3), 0.4))
        value, grad, active = srl_loss(pred, tubed)
        assert value == 0.0
        assert active == ()
        assert not grad.any()

    def test_gradient_support_matches_target(self):
        rng = np.random.default_rng(0)
        tubed = np.array([[1, 2, 0], [0, 2, 1], [0, 0, 0]], dtype=np.int64)
        fg = rng.random((3, 3)) * 0.4
        pred = np.stack([1.0 - 2 * fg, fg, fg])
        _, grad, active = srl_loss(pred, tubed)
        assert active == (1, 2)
        for k in (1, 2):
            assert (grad[k] != 0).sum() == (tubed == k).sum()
            assert ((grad[k] != 0) == (tubed == k)).all()
        assert not grad[0].any()

    def test_value_bounds_on_probability_fields(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            fg = rng.random((5, 5))
            tubed = (rng.random((5, 5)) < 0.3).astype(np.int64)
            value, _, _ = srl_loss(two_channel(fg), tubed)
            assert -1.0 <= value <= 0.0

    def test_include_background_adds_channel_zero(self):
        tubed = np.array([[1, 0], [0, 0]], dtype=np.int64)
        pred = two_channel([[0.8, 0.3], [0.1, 0.0]])
        cfg = LossConfig(include_background=True)
        value, grad, active = srl_loss(pred, tubed, cfg)
        assert active == (0, 1)
        # class 1: recall 0.8 on one pixel; class 0: (0.7+0.9+1.0)/3 on three
        expected = -0.5 * (0.8 + (0.7 + 0.9 + 1.0) / 3.0)
        assert value == pytest.approx(expected, rel=1e-12)
        assert grad[0, 0, 0] == 0.0
        assert grad[0, 0, 1] == pytest.approx(-1.0 / 6.0, rel=1e-15)

    def test_active_classes_drop_empty_ones(self):
        tubed = np.array([[2, 2], [0, 0]], dtype=np.int64)
        assert srl_active_classes(tubed, num_classes=3) == (2,)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            srl_loss(two_channel(np.zeros((2, 2))), np.zeros((3, 3), dtype=np.int64))


class TestSoftDiceLoss:
    def test_perfect_one_hot_is_zero(self):
        gt = np.array([[0, 1], [1, 0]], dtype=np.int64)
        value, _ = soft_dice_loss(one_hot(gt, 1), gt)
        assert abs(value) < 1e-6

    def test_half_probability_single_positive(self):
        gt = np.array([[1, 0], [0, 0]], dtype=np.int64)
        pred = two_channel([[0.5, 0.0], [0.0, 0.0]])
        value, _ = soft_dice_loss(pred, gt, LossConfig(epsilon=1e-12))
        assert value == pytest.approx(1.0 / 3.0, rel=1e-9)

    def test_zero_prediction_scores_near_one(self):
        gt = np.array([[1, 1], [0, 0]], dtype=np.int64)
        pred = two_channel(np.zeros((2, 2)))
        value, _ = soft_dice_loss(pred, gt)
        assert value == pytest.approx(1.0, abs=1e-5)

    def test_value_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            fg = rng.random((4, 4))
            gt = (rng.random((4, 4)) < 0.4).astype(np.int64)
            value, _ = soft_dice_loss(two_channel(fg), gt)
            assert 0.0 <= value <= 1.0

    def test_gradient_depends_on_prediction(self):
        gt = np.array([[1, 0], [0, 0]], dtype=np.int64)
        _, g1 = soft_dice_loss(two_channel([[0.5, 0.1], [0.1, 0.1]]), gt)
        _, g2 = soft_dice_loss(two_channel([[0.9, 0.1], [0.1, 0.1]]), gt)
        assert not np.array_equal(g1, g2)


class TestCrossEntropyLoss:
    def test_uniform_two_channel_is_ln_two(self):
        pred = np.full((2, 3, 3), 0.5)
        gt = np.zeros((3, 3), dtype=np.int64)
        gt[1, 1] = 1
        value, _ = cross_entropy_loss(pred, gt)
        assert value == pytest.approx(math.log(2.0), rel=1e-15)

    def test_one_pixel_at_clamp(self):
        pred = np.array([[[1.0 - 1e-6]], [[1e-6]]])
        gt = np.array([[1]], dtype=np.int64)
        value, grad = cross_entropy_loss(pred, gt)
        assert value == pytest.approx(-math.log(1e-6), rel=1e-12)
        assert value == pytest.approx(13.8155, abs=1e-4)
        assert grad[1, 0, 0] == pytest.approx(-1e6, rel=1e-12)

    def test_below_clamp_gradient_is_zero(self):
        pred = np.array([[[1.0]], [[0.0]]])
        gt = np.array([[1]], dtype=np.int64)
        value, grad = cross_entropy_loss(pred, gt)
        assert value == pytest.approx(-math.log(1e-6), rel=1e-12)
        assert grad[1, 0, 0] == 0.0

    def test_confident_correct_prediction_near_zero(self):
        gt = np.array([[0, 1], [1, 1]], dtype=np.int64)
        value, _ = cross_entropy_loss(one_hot(gt, 1), gt)
        assert 0.0 <= value <= 1e-6

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            fg = rng.random((4, 4))
            gt = (rng.random((4, 4)) < 0.5).astype(np.int64)
            value, _ = cross_entropy_loss(two_channel(fg), gt)
            assert value >= 0.0


class TestCombinedLoss:
    def setup_method(self):
        rng = np.random.default_rng(4)
        self.gt = (rng.random((6, 6)) < 0.3).astype(np.int64)
        fg = rng.random((6, 6)) * 0.9
        self.pred = two_channel(fg)
        self.tubed = np.where((rng.random((6, 6)) < 0.5) & (self.gt > 0), self.gt, 0)

    def test_alpha_zero_drops_srl_from_total(self):
        bd, grad = combined_loss(self.pred, self.gt, self.tubed, LossConfig(alpha=0.0))
        dice, gd = soft_dice_loss(self.pred, self.gt, LossConfig(alpha=0.0))
        cce, gc = cross_entropy_loss(self.pred, self.gt, LossConfig(alpha=0.0))
        assert bd.total == dice + cce
        assert bd.srl != 0.0  # still reported
        assert np.array_equal(grad, gd + gc)

    def test_alpha_two_doubles_srl_share(self):
        bd0, _ = combined_loss(self.pred, self.gt, self.tubed, LossConfig(alpha=0.0))
        bd2, _ = combined_loss(self.pred, self.gt, self.tubed, LossConfig(alpha=2.0))
        assert bd2.total - bd0.total == pytest.approx(2.0 * bd2.srl, rel=1e-12)

    def test_breakdown_sum_invariant(self):
        for alpha in (0.0, 0.5, 1.0, 2.0):
            bd, _ = combined_loss(self.pred, self.gt, self.tubed, LossConfig(alpha=alpha))
            assert bd.total == pytest.approx(bd.dice + bd.cce + alpha * bd.srl, abs=1e-9)

    def test_perfect_prediction_with_alpha_one(self):
        gt = np.zeros((8, 8), dtype=np.int64)
        gt[2:6, 3] = 1
        from skelloss.raster import tubed_skeletonize
        tubed = tubed_skeletonize(gt)
        bd, _ = combined_loss(one_hot(gt, 1), gt, tubed, LossConfig(alpha=1.0))
        assert bd.total == pytest.approx(-1.0, abs=1e-5)

    def test_gradient_is_sum_of_parts(self):
        cfg = LossConfig(alpha=1.5)
        _, grad = combined_loss(self.pred, self.gt, self.tubed, cfg)
        _, gd = soft_dice_loss(self.pred, self.gt, cfg)
        _, gc = cross_entropy_loss(self.pred, self.gt, cfg)
        _, gs, _ = srl_loss(self.pred, self.tubed, cfg)
        assert np.allclose(grad, gd + gc + 1.5 * gs, atol=1e-15)


class TestLossConfig:
    def test_rejects_negative_alpha(self):
        with pytest.raises(ValueError):
            LossConfig(alpha=-0.1)

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError):
            LossConfig(epsilon=0.0)
