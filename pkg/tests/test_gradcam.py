"""Grad-CAM weights against a finite-difference oracle on a contrived head,
class sensitivity, and overlay blending."""

import numpy as np
import pytest

from buscad.data import UNIT, GrayImage
from buscad.gradcam import Heatmap, grad_cam, grad_cam_components, heatmap_peak, upsample_overlay
from buscad.nn.layers import Conv3x3, Dense, GlobalAvgPool, ReLU
from buscad.nn.model import CnnModel


def contrived_model(seed=0, in_hw=(6, 6), n_maps=2):
    """Conv -> GAP -> Dense head whose class c logit reads only map c."""
    rng = np.random.default_rng(seed)
    conv = Conv3x3(1, n_maps, rng)
    head = Dense(n_maps, n_maps, rng)
    head.params["w"][...] = np.eye(n_maps)
    head.params["b"][...] = 0.0
    return CnnModel([conv, ReLU(), GlobalAvgPool(), head], in_hw, n_maps)


class TestGradCamWeights:
    def test_alpha_is_one_over_z_for_mean_logit(self):
        # s_c = GAP(map c) => dS/dA is 1/Z everywhere on map c
        model = contrived_model(1)
        img = np.random.default_rng(1).random((6, 6))
        acts, grads, alpha, pre = grad_cam_components(model, img, 0)
        z = acts.shape[1] * acts.shape[2]
        np.testing.assert_allclose(grads[0], 1.0 / z, atol=1e-12)
        assert alpha[0] == pytest.approx(1.0 / z)

    def test_alpha_matches_finite_differences(self):
        model = contrived_model(2)
        img = np.random.default_rng(2).random((6, 6))
        acts, grads, alpha, _ = grad_cam_components(model, img, 1)
        # numeric dS_c/dA via perturbing the GAP input is awkward; instead
        # perturb the conv bias, which shifts every pixel of one map equally:
        # dS/db_k = sum_uv dS/dA_kuv through the ReLU; with positive acts the
        # ReLU is locally identity, so compare against the captured grads
        h = 1e-6
        relu_active = acts > 0
        for k in range(2):
            b = model.layers[0].params["b"]
            orig = b[k]
            b[k] = orig + h
            lp, _ = model.forward(img[None, None])
            b[k] = orig - h
            lm, _ = model.forward(img[None, None])
            b[k] = orig
            numeric = (lp[0, 1] - lm[0, 1]) / (2 * h)
            analytic = grads[k][relu_active[k]].sum()
            assert analytic == pytest.approx(numeric, abs=1e-6)

    def test_heatmap_proportional_to_single_positive_map(self):
        model = contrived_model(3)
        img = np.abs(np.random.default_rng(3).random((6, 6))) + 0.01
        acts, _, alpha, _ = grad_cam_components(model, img, 0)
        hm = grad_cam(model, img, 0)
        want = np.maximum(alpha[0] * acts[0] + alpha[1] * acts[1], 0.0)
        np.testing.assert_allclose(hm.values, want, atol=1e-12)

    def test_class_sensitivity_zero_weight_on_irrelevant_map(self):
        model = contrived_model(4)
        img = np.random.default_rng(4).random((6, 6))
        _, _, alpha0, _ = grad_cam_components(model, img, 0)
        _, _, alpha1, _ = grad_cam_components(model, img, 1)
        assert abs(alpha0[1]) < 1e-10
        assert abs(alpha1[0]) < 1e-10

    def test_negative_weighted_sum_gives_zero_map(self):
        model = contrived_model(5)
        model.layers[-1].params["w"][...] = -np.eye(2)  # logit = -GAP(map c)
        img = np.random.default_rng(5).random((6, 6)) + 0.1
        hm = grad_cam(model, img, 0)
        assert np.all(hm.values == 0.0)

    def test_shape_contract_and_bad_class(self):
        model = contrived_model(6)
        img = np.random.default_rng(6).random((6, 6))
        hm = grad_cam(model, img, 0)
        assert (hm.height, hm.width) == (6, 6)
        with pytest.raises(ValueError, match="class index"):
            grad_cam(model, img, 5)

    def test_logit_scale_covariance(self):
        model = contrived_model(7)
        img = np.random.default_rng(7).random((6, 6))
        _, _, _, pre1 = grad_cam_components(model, img, 0)
        model.layers[-1].params["w"][...] *= 3.0
        _, _, _, pre3 = grad_cam_components(model, img, 0)
        np.testing.assert_allclose(pre3, 3.0 * pre1, atol=1e-12)


class TestOverlay:
    def test_alpha_zero_identity(self):
        img = GrayImage(np.random.default_rng(8).random((8, 8)), UNIT)
        hm = Heatmap(np.random.default_rng(9).random((4, 4)), 0)
        blend, _ = upsample_overlay(hm, img, alpha=0.0)
        np.testing.assert_array_equal(blend.pixels, img.pixels)

    def test_zero_heatmap(self):
        img = GrayImage(np.random.default_rng(10).random((8, 8)), UNIT)
        hm = Heatmap(np.zeros((4, 4)), 1)
        blend, heat = upsample_overlay(hm, img, alpha=0.4)
        assert np.all(heat == 0.0)
        np.testing.assert_allclose(blend.pixels, 0.6 * img.pixels)

    def test_single_peak_position_scales(self):
        values = np.zeros((4, 4))
        values[1, 2] = 1.0
        hm = Heatmap(values, 0)
        img = GrayImage(np.zeros((16, 16)), UNIT)
        _, heat = upsample_overlay(hm, img, alpha=1.0)
        # align-corners: source (1,2) maps to (1*15/3, 2*15/3) = (5, 10)
        assert heatmap_peak(heat) == (5, 10)

    def test_normalization_to_unit_peak(self):
        hm = Heatmap(np.array([[0.0, 2.5], [1.0, 0.5]]), 0)
        img = GrayImage(np.zeros((2, 2)), UNIT)
        _, heat = upsample_overlay(hm, img, alpha=1.0)
        assert heat.max() == 1.0

    def test_heatmap_nonnegativity_enforced(self):
        with pytest.raises(ValueError):
            Heatmap(np.array([[-0.1, 0.0]]), 0)
