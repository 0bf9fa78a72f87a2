import dataclasses

import numpy as np
import pytest

from mofcast.baselines import cv_cs_forecast
from mofcast.core import BBox, ObservationWindow, WindowSource, boxes_to_array
from mofcast.encdec import (
    FeatureStats,
    GRUParams,
    Model,
    ModelConfig,
    box_features,
    compute_feature_stats,
    decode,
    destandardize,
    encode,
    forecast_windows,
    gru_cell,
    init_params,
    residuals_to_boxes,
    smooth_l1,
    smooth_l1_grad,
    standardize,
    synthetic_flow_feature,
)
from mofcast.errors import FlowFeatureError

from conftest import linear_track, window_of


class TestBoxFeatures:
    def test_five_frame_velocity(self):
        # cx over frames j-4..j is 10,11,12,13,14 at the last observed frame
        window = window_of(linear_track(vx=1.0, cx0=-15.0, length=90))
        feats = box_features(window)
        assert feats.shape == (30, 8)
        assert feats[-1, 4] == pytest.approx(4.0)  # v_x = x_t - x_{t-4}

    def test_stationary_window_has_zero_velocity_terms(self):
        window = window_of(linear_track(vx=0.0, vy=0.0, length=90))
        feats = box_features(window)
        assert np.all(feats[:, 4:] == 0.0)

    def test_constant_size_moving_centroid(self):
        window = window_of(linear_track(vx=2.0, vy=1.0, length=90))
        feats = box_features(window)
        assert np.all(feats[:, 6] == 0.0)  # dw
        assert np.all(feats[:, 7] == 0.0)  # dh

    def test_padding_rule_uses_earliest_frame(self):
        window = window_of(linear_track(vx=1.0, length=90))
        feats = box_features(window)
        # frames 0..3 difference against frame 0: v_x = j - 0
        assert feats[0, 4] == 0.0
        assert feats[1, 4] == pytest.approx(1.0)
        assert feats[3, 4] == pytest.approx(3.0)
        assert feats[4, 4] == pytest.approx(4.0)

    def test_positions_copied_verbatim(self):
        window = window_of(linear_track(vx=0.5, vy=0.25, w=11.0, h=22.0, length=90))
        feats = box_features(window)
        assert np.array_equal(feats[:, :4], window.observed_array())


class TestStandardize:
    def test_train_mean_maps_to_zero(self, rng):
        features = rng.normal(size=(20, 30, 8)) * 5 + 3
        stats = compute_feature_stats(features)
        standardized = standardize(features, stats)
        assert np.allclose(standardized.reshape(-1, 8).mean(axis=0), 0.0, atol=1e-12)

    def test_round_trip_inverse(self, rng):
        features = rng.normal(size=(4, 30, 8))
        stats = compute_feature_stats(features)
        assert np.allclose(destandardize(standardize(features, stats), stats), features, atol=1e-12)

    def test_not_idempotent(self, rng):
        features = rng.normal(size=(4, 30, 8)) + 7.0
        stats = compute_feature_stats(features)
        once = standardize(features, stats)
        twice = standardize(once, stats)
        assert not np.allclose(once, twice)

    def test_constant_channel_floored(self):
        features = np.zeros((3, 30, 8))
        stats = compute_feature_stats(features)
        assert np.all(stats.std == 1e-6)
        assert np.all(np.isfinite(standardize(features, stats)))


class TestGruCell:
    def test_zero_weights_zero_state(self):
        params = GRUParams.zeros(4, 6)
        h = gru_cell(np.zeros(4), np.zeros(6), params)
        assert np.all(h == 0.0)

    def test_zero_weights_halve_state(self, rng):
        # z = sigmoid(0) = 0.5 and the candidate is tanh(0) = 0, so h' = h/2
        params = GRUParams.zeros(4, 6)
        h = rng.normal(size=6)
        out = gru_cell(rng.normal(size=4), h, params)
        assert np.allclose(out, 0.5 * h, atol=1e-15)

    def test_bounded_by_max_of_state_and_one(self, rng):
        params = GRUParams.init(rng, 4, 6)
        h = rng.normal(size=6) * 3
        out = gru_cell(rng.normal(size=4), h, params)
        assert np.all(np.abs(out) <= np.maximum(np.abs(h), 1.0) + 1e-12)


class TestEncodeDecode:
    def test_bb_only_code_dim(self, cv_window):
        config = ModelConfig(variant="bb_only", hidden=16)
        model = Model(params=init_params(config, 0), stats=FeatureStats.identity())
        assert encode(cv_window, model).shape == (256,)

    def test_both_code_dim_is_sum(self, cv_window):
        config = ModelConfig(variant="both", hidden=16, flow_dim=2048)
        window = dataclasses.replace(cv_window, flow_feature=synthetic_flow_feature(cv_window, 2048))
        model = Model(params=init_params(config, 0), stats=FeatureStats.identity())
        assert encode(window, model).shape == (256 + 2048,)

    def test_missing_flow_feature_raises(self, cv_window):
        config = ModelConfig(variant="of_only", hidden=16, flow_dim=32)
        model = Model(params=init_params(config, 0), stats=FeatureStats.identity())
        with pytest.raises(FlowFeatureError):
            encode(cv_window, model)

    def test_encode_deterministic(self, cv_window):
        config = ModelConfig(variant="bb_only", hidden=16)
        model = Model(params=init_params(config, 3), stats=FeatureStats.identity())
        a = encode(cv_window, model)
        b = encode(cv_window, model)
        assert np.array_equal(a, b)

    def test_decode_zero_output_layer_gives_zero_residuals(self, rng):
        config = ModelConfig(variant="bb_only", hidden=16)
        params = init_params(config, 0)  # output layer zeros by default
        residuals = decode(rng.normal(size=256), params)
        assert residuals.shape == (60, 4)
        assert np.all(residuals == 0.0)

    def test_decode_deterministic_and_sized(self, rng):
        config = ModelConfig(variant="bb_only", hidden=16)
        params = init_params(config, 0, zero_output=False)
        code = rng.normal(size=256)
        a = decode(code, params)
        b = decode(code, params)
        assert a.shape == (60, 4)
        assert np.array_equal(a, b)

    def test_decode_horizon_override(self, rng):
        config = ModelConfig(variant="bb_only", hidden=16)
        params = init_params(config, 0, zero_output=False)
        assert decode(rng.normal(size=256), params, horizon=17).shape == (17, 4)


class TestResidualsToBoxes:
    def test_zero_residuals_equal_cv_cs(self, cv_window):
        forecast = residuals_to_boxes(cv_window, np.zeros((60, 4)))
        reference = cv_cs_forecast(cv_window)
        diff = boxes_to_array(forecast.boxes) - boxes_to_array(reference.boxes)
        assert np.max(np.abs(diff)) <= 1e-9

    def test_exact_inverse_construction(self, cv_window):
        from mofcast.baselines import cv_cs_extrapolate

        gt = cv_window.future_array()
        residuals = gt - cv_cs_extrapolate(cv_window)
        forecast = residuals_to_boxes(cv_window, residuals)
        assert np.allclose(boxes_to_array(forecast.boxes), gt, atol=1e-12)

    def test_size_clamped_at_one_pixel(self, cv_window):
        residuals = np.zeros((60, 4))
        residuals[-1, 2] = -(cv_window.observed[-1].w - 0.5)
        forecast = residuals_to_boxes(cv_window, residuals)
        assert forecast.boxes[-1].w == 1.0


class TestUntrainedModelEqualsCvCs:
    @pytest.mark.parametrize("seed", (0, 1, 2))
    def test_forecasts_agree_exactly(self, seed):
        from mofcast.data import extract_windows, synth_generate_mixed

        tracks = synth_generate_mixed(("turning", "stop_and_go"), 3, 1.0, seed, n_frames=95)
        windows = [w for t in tracks for w in extract_windows(t, stride=3)]
        features = np.stack([box_features(w) for w in windows])
        config = ModelConfig(variant="bb_only", hidden=16)
        model = Model(params=init_params(config, seed), stats=compute_feature_stats(features))
        forecasts = forecast_windows(model, windows)
        for window, forecast in zip(windows, forecasts):
            reference = cv_cs_forecast(window)
            diff = boxes_to_array(forecast.boxes) - boxes_to_array(reference.boxes)
            assert np.max(np.abs(diff)) <= 1e-9


class TestSmoothL1:
    def test_zero_at_equality(self, rng):
        x = rng.normal(size=(60, 4))
        assert smooth_l1(x, x) == 0.0

    def test_quadratic_branch(self):
        pred = np.zeros((60, 4))
        target = np.zeros((60, 4))
        pred[0, 0] = 0.5
        assert smooth_l1(pred, target, beta=1.0) == pytest.approx((0.5 * 0.25) / 240)

    def test_linear_branch(self):
        pred = np.zeros((60, 4))
        target = np.zeros((60, 4))
        pred[0, 0] = 2.0
        assert smooth_l1(pred, target, beta=1.0) == pytest.approx(1.5 / 240)

    def test_continuous_and_differentiable_at_seam(self):
        target = np.zeros((1, 1))
        eps = 1e-9
        below = smooth_l1(np.array([[1.0 - eps]]), target, beta=1.0)
        above = smooth_l1(np.array([[1.0 + eps]]), target, beta=1.0)
        assert above - below == pytest.approx(2 * eps, rel=1e-3)
        g_below = smooth_l1_grad(np.array([[1.0 - eps]]), target, beta=1.0)
        g_above = smooth_l1_grad(np.array([[1.0 + eps]]), target, beta=1.0)
        assert g_below[0, 0] == pytest.approx(g_above[0, 0], abs=1e-6)

    def test_loss_non_negative(self, rng):
        pred, target = rng.normal(size=(8, 60, 4)), rng.normal(size=(8, 60, 4))
        assert smooth_l1(pred, target) >= 0.0

    def test_beta_validation(self):
        with pytest.raises(ValueError):
            smooth_l1(np.zeros(3), np.zeros(3), beta=0.0)


class TestTranslationEquivariance:
    def test_pipeline_translates_with_recomputed_stats(self):
        from mofcast.data import extract_windows, synth_generate

        tracks = synth_generate("turning", 2, 0.0, seed=4, n_frames=95)
        windows = [w for t in tracks for w in extract_windows(t, stride=6)]
        dx, dy = 210.0, -35.0

        def shift_window(w):
            return dataclasses.replace(
                w,
                observed=tuple(BBox(b.cx + dx, b.cy + dy, b.w, b.h) for b in w.observed),
                future=tuple(BBox(b.cx + dx, b.cy + dy, b.w, b.h) for b in w.future),
            )

        shifted = [shift_window(w) for w in windows]
        config = ModelConfig(variant="bb_only", hidden=16)
        params = init_params(config, 9, zero_output=False)

        stats = compute_feature_stats(np.stack([box_features(w) for w in windows]))
        stats_shifted = compute_feature_stats(np.stack([box_features(w) for w in shifted]))
        base = forecast_windows(Model(params=params, stats=stats), windows)
        moved = forecast_windows(Model(params=params, stats=stats_shifted), shifted)
        for f0, f1 in zip(base, moved):
            a, b = boxes_to_array(f0.boxes), boxes_to_array(f1.boxes)
            assert np.allclose(b[:, 0], a[:, 0] + dx, atol=1e-6)
            assert np.allclose(b[:, 1], a[:, 1] + dy, atol=1e-6)
            assert np.allclose(b[:, 2:], a[:, 2:], atol=1e-6)
