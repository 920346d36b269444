"""Residual motion maps, cue fusion, thresholding, and temporal voting."""

import numpy as np
import pytest
from scipy import ndimage

from camoflow.errors import ConfigError, PipelineError
from camoflow.evaluation import region_similarity
from camoflow.segmentation import (
    MotionSegmenter,
    SegmentationConfig,
    fuse_cues,
    otsu_threshold,
    residual_motion_map,
    segment_pair,
    segment_sequence,
    temporal_smooth,
    threshold_and_clean,
)


def brute_force_otsu(values, bins=256):
    """Independent reference: test every bin center, maximize the
    between-class variance computed directly from the samples."""
    v = np.asarray(values, dtype=float).ravel()
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return lo
    edges = np.linspace(lo, hi, bins + 1)
    centers = (edges[:-1] + edges[1:]) / 2.0
    # Work on the same quantization the histogram method sees.
    quantized = centers[np.clip(np.digitize(v, edges) - 1, 0, bins - 1)]
    best_thr, best_score = lo, -1.0
    for thr in centers:
        below = quantized[quantized <= thr]
        above = quantized[quantized > thr]
        if below.size == 0 or above.size == 0:
            continue
        w0, w1 = below.size / v.size, above.size / v.size
        score = w0 * w1 * (below.mean() - above.mean()) ** 2
        if score > best_score:
            best_score, best_thr = score, thr
    return best_thr


class TestResidualMotionMap:
    def test_flow_matching_homography_scores_zero(self, sprite_pair):
        """Exact synthetic flow agrees with the GT homography off-sprite."""
        residual = residual_motion_map(sprite_pair.flows[0], sprite_pair.homographies[0])
        background = ~sprite_pair.masks[0]
        assert residual[background].max() < 1e-9
        assert residual[sprite_pair.masks[0]].min() > 1e-3

    def test_identity_flow_zero_residual(self):
        residual = residual_motion_map(np.zeros((32, 32, 2)), np.eye(3))
        assert residual.max() < 1e-12

    def test_uniform_offset_measured_in_normalized_units(self):
        """A 5-px x-offset against identity reads 2*5/(W-1) everywhere."""
        flow = np.zeros((64, 128, 2))
        flow[:, :, 0] = 5.0
        residual = residual_motion_map(flow, np.eye(3))
        assert np.allclose(residual, 2.0 * 5.0 / 127.0)


class TestOtsu:
    def test_matches_brute_force_reference(self, rng):
        for _ in range(20):
            values = rng.normal(0.0, 1.0, size=300)
            values[: rng.integers(30, 150)] += rng.uniform(2.0, 6.0)
            ours = otsu_threshold(values)
            reference = brute_force_otsu(values)
            assert np.isclose(ours, reference, atol=1e-9)

    def test_separates_bimodal_clusters(self, rng):
        """The threshold may sit anywhere in the empty gap (the variance is
        flat there); what matters is that the partition splits the modes."""
        low = rng.normal(0.1, 0.01, size=500)
        high = rng.normal(0.9, 0.01, size=100)
        thr = otsu_threshold(np.concatenate([low, high]))
        assert (low <= thr).mean() > 0.99
        assert (high > thr).all()

    def test_constant_input_returns_value(self):
        assert otsu_threshold(np.full(10, 0.37)) == 0.37

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            otsu_threshold(np.array([]))


class TestFuseCues:
    def test_alpha_extremes_select_single_cue(self, rng):
        motion = rng.uniform(size=(16, 16))
        diff = rng.uniform(size=(16, 16))

        def minmax(a):
            return (a - a.min()) / (a.max() - a.min())

        assert np.allclose(fuse_cues(motion, diff, alpha=1.0), minmax(motion))
        assert np.allclose(fuse_cues(motion, diff, alpha=0.0), minmax(diff))

    def test_invalid_pixels_zeroed(self, rng):
        motion = rng.uniform(size=(8, 8))
        valid = np.zeros((8, 8), dtype=bool)
        valid[2:6, 2:6] = True
        fused = fuse_cues(motion, motion, valid=valid)
        assert np.all(fused[~valid] == 0.0)

    def test_constant_cue_contributes_nothing(self):
        motion = np.full((8, 8), 3.0)
        diff = np.zeros((8, 8))
        diff[4, 4] = 1.0
        fused = fuse_cues(motion, diff, alpha=0.7)
        assert fused[4, 4] == pytest.approx(0.3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fuse_cues(np.ones((4, 4)), np.ones((5, 5)))


class TestThresholdAndClean:
    def test_recovers_blob_and_discards_salt(self, rng):
        saliency = rng.uniform(0.0, 0.1, size=(64, 64))
        saliency[20:36, 24:44] = rng.uniform(0.8, 1.0, size=(16, 20))
        salt = rng.integers(0, 64, size=(25, 2))
        saliency[salt[:, 0], salt[:, 1]] = 1.0
        mask = threshold_and_clean(saliency)
        blob = np.zeros((64, 64), dtype=bool)
        blob[20:36, 24:44] = True
        assert region_similarity(mask, blob) > 0.85
        # isolated salt pixels cannot survive a 3x3 opening
        outside = mask & ~ndimage.binary_dilation(blob, iterations=2)
        assert outside.sum() == 0

    def test_keeps_only_largest_component(self):
        saliency = np.zeros((40, 40))
        saliency[5:15, 5:15] = 1.0     # 100 px
        saliency[25:31, 25:31] = 1.0   # 36 px
        mask = threshold_and_clean(saliency, SegmentationConfig(threshold=0.5))
        assert mask[7, 7] and not mask[27, 27]

    def test_min_area_monotonicity(self, rng):
        """Raising the area floor can only remove foreground pixels."""
        for _ in range(10):
            saliency = ndimage.gaussian_filter(rng.uniform(size=(48, 48)), 3.0)
            previous = None
            for fraction in (0.0, 0.01, 0.05, 0.2):
                mask = threshold_and_clean(
                    saliency, SegmentationConfig(min_area_fraction=fraction)
                )
                if previous is not None:
                    assert not np.any(mask & ~previous), "gained pixels"
                previous = mask

    def test_small_component_suppressed(self):
        saliency = np.zeros((100, 100))
        saliency[50:53, 50:53] = 1.0  # 9 px of 10000 = 0.09%
        cfg = SegmentationConfig(threshold=0.5, min_area_fraction=0.001)
        assert not threshold_and_clean(saliency, cfg).any()

    def test_all_background_allowed(self):
        mask = threshold_and_clean(np.zeros((16, 16)))
        assert mask.dtype == bool and not mask.any()

    def test_fixed_threshold_respected(self):
        saliency = np.full((10, 10), 0.4)
        saliency[5, 5] = 0.9
        cfg = SegmentationConfig(threshold=0.95)
        assert not threshold_and_clean(saliency, cfg).any()


class TestTemporalSmooth:
    def test_window_one_is_identity(self, rng):
        masks = [rng.uniform(size=(8, 8)) > 0.5 for _ in range(4)]
        out = temporal_smooth(masks, window=1)
        for a, b in zip(out, masks):
            assert np.array_equal(a, b)

    def test_hand_computed_majority(self):
        """Three 1x2 masks, window 3, strict majority checked by hand."""
        m0 = np.array([[True, False]])
        m1 = np.array([[False, False]])
        m2 = np.array([[True, True]])
        out = temporal_smooth([m0, m1, m2], window=3)
        # t=0: window {m0, m1}: col0 has 1 of 2 votes -> strict majority fails
        assert np.array_equal(out[0], [[False, False]])
        # t=1: window {m0, m1, m2}: col0 2/3 on, col1 1/3 off
        assert np.array_equal(out[1], [[True, False]])
        # t=2: window {m1, m2}: col0 1/2, col1 1/2 -> both off
        assert np.array_equal(out[2], [[False, False]])

    def test_single_frame_dropout_restored(self):
        blob = np.zeros((12, 12), dtype=bool)
        blob[4:8, 4:8] = True
        masks = [blob.copy() for _ in range(5)]
        masks[2] = np.zeros_like(blob)
        out = temporal_smooth(masks, window=3)
        assert np.array_equal(out[2], blob)

    def test_single_frame_blip_removed(self):
        empty = np.zeros((6, 6), dtype=bool)
        blip = empty.copy()
        blip[3, 3] = True
        out = temporal_smooth([empty, blip, empty], window=3)
        assert not out[1].any()

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            temporal_smooth([np.zeros((2, 2), dtype=bool)], window=2)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            temporal_smooth([np.zeros((2, 2), dtype=bool), np.zeros((3, 3), dtype=bool)], 3)

    def test_empty_list(self):
        assert temporal_smooth([], window=3) == []


class TestSegmentPair:
    def test_finds_the_sprite(self, sprite_pair):
        result = segment_pair(
            sprite_pair.frames[0], sprite_pair.frames[1], sprite_pair.flows[0]
        )
        assert region_similarity(result.mask, sprite_pair.masks[0]) > 0.85

    def test_output_shapes_consistent(self, sprite_pair):
        result = segment_pair(
            sprite_pair.frames[0], sprite_pair.frames[1], sprite_pair.flows[0]
        )
        shape = sprite_pair.frames[0].shape[:2]
        for field in (result.mask, result.saliency, result.motion, result.diff, result.valid):
            assert field.shape == shape

    def test_ransac_route_works_too(self, sprite_pair):
        result = segment_pair(
            sprite_pair.frames[0],
            sprite_pair.frames[1],
            sprite_pair.flows[0],
            estimator="ransac",
            seed=5,
        )
        assert region_similarity(result.mask, sprite_pair.masks[0]) > 0.85


class TestSegmentSequence:
    def test_whole_sequence_quality(self, short_sequence):
        pairs = segment_sequence(short_sequence.frames, short_sequence.flows)
        scores = [
            region_similarity(p.mask, m)
            for p, m in zip(pairs, short_sequence.masks)
        ]
        assert np.mean(scores) > 0.8, f"per-pair J: {np.round(scores, 3)}"

    def test_pipeline_error_carries_pair_index(self, short_sequence):
        """A flow that collapses everything to one point breaks the DLT
        for pair 1, and the error must say so."""
        flows = [f.copy() for f in short_sequence.flows]
        h, w = flows[1].shape[:2]
        gx, gy = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
        flows[1][:, :, 0] = 10.0 - gx
        flows[1][:, :, 1] = 10.0 - gy
        with pytest.raises(PipelineError) as excinfo:
            segment_sequence(short_sequence.frames, flows)
        assert excinfo.value.frame_index == 1

    def test_jobs_do_not_change_results(self, short_sequence):
        serial = segment_sequence(short_sequence.frames, short_sequence.flows, jobs=1)
        parallel = segment_sequence(short_sequence.frames, short_sequence.flows, jobs=3)
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.mask, b.mask)

    def test_length_validation(self, short_sequence):
        with pytest.raises(ValueError):
            segment_sequence(short_sequence.frames[:1], [])
        with pytest.raises(ValueError):
            segment_sequence(short_sequence.frames, short_sequence.flows[:-1])


class TestMotionSegmenter:
    def test_sklearn_protocol(self):
        seg = MotionSegmenter(alpha=0.5, window=5)
        params = seg.get_params()
        assert params["alpha"] == 0.5 and params["window"] == 5
        seg.set_params(alpha=0.9)
        assert seg.alpha == 0.9

    def test_fit_predict_matches_functional_route(self, short_sequence):
        masks = MotionSegmenter().fit_predict(short_sequence.frames, short_sequence.flows)
        reference = segment_sequence(short_sequence.frames, short_sequence.flows)
        for a, b in zip(masks, reference):
            assert np.array_equal(a, b.mask)

    def test_fit_stores_pair_results(self, short_sequence):
        seg = MotionSegmenter().fit(short_sequence.frames, short_sequence.flows)
        assert len(seg.pairs_) == len(short_sequence.flows)
        assert len(seg.masks_) == len(short_sequence.flows)


class TestSegmentationConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": 1.5},
            {"alpha": -0.1},
            {"threshold": 2.0},
            {"min_area_fraction": 1.5},
            {"window": 2},
            {"window": 0},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            SegmentationConfig(**kwargs)
