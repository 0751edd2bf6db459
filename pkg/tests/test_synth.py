import csv
import json

import numpy as np
import pytest

from reflectkit.errors import (BaseTooSmallError, DimensionMismatchError,
                               FrameSmallerThanWindowError,
                               InvalidArgumentError)
from reflectkit.frames import FrameSequence, snap_to_grid
from reflectkit.layers import LayerDecomposition
from reflectkit.synth import (BlendConfig, GroundTruthBundle, auto_scribbles,
                              blend, default_bases, default_bundle, evaluate,
                              load_bundle, make_bundle,
                              make_translating_sequence, ownership_labels,
                              save_bundle, scaled_contributions, ssim)
from reflectkit.tracking import LayerLabel


def small_config(**overrides):
    kwargs = dict(alpha=0.8, v_background=(3.0, 0.0),
                  v_reflection=(-3.0, 0.0), frame_count=8,
                  dimensions=(48, 40))
    kwargs.update(overrides)
    return BlendConfig(**kwargs)


class TestBlendConfig:
    def test_defaults(self):
        cfg = BlendConfig()
        assert cfg.alpha == 0.8
        assert cfg.v_background == (3.0, 0.0)
        assert cfg.v_reflection == (-3.0, 0.0)
        assert cfg.frame_count == 30
        assert cfg.dimensions == (128, 128)

    @pytest.mark.parametrize("alpha", [-0.1, 1.0001, 2.0])
    def test_alpha_out_of_range(self, alpha):
        with pytest.raises(InvalidArgumentError):
            BlendConfig(alpha=alpha)

    def test_bad_shape_fields(self):
        with pytest.raises(InvalidArgumentError):
            BlendConfig(frame_count=0)
        with pytest.raises(InvalidArgumentError):
            BlendConfig(dimensions=(0, 10))

    def test_json_round_trip(self, tmp_path):
        cfg = small_config(alpha=0.75, v_reflection=(-2.0, 1.0))
        path = tmp_path / "config.json"
        cfg.save(str(path))
        assert BlendConfig.load(str(path)) == cfg

    def test_malformed_config(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"alpha": 0.8}))
        with pytest.raises(InvalidArgumentError):
            BlendConfig.load(str(path))


class TestTranslatingSequence:
    def base(self, h=40, w=150, seed=5):
        return np.random.default_rng(seed).random((h, w))

    def test_zero_velocity_repeats_first_frame(self):
        seq = make_translating_sequence(self.base(), (0, 0), 6, (60, 40))
        for t in range(6):
            assert np.array_equal(seq.data[t], seq.data[0])

    def test_integral_velocity_is_a_shift(self):
        seq = make_translating_sequence(self.base(), (3, 0), 8, (60, 40))
        for t in range(1, 8):
            assert np.array_equal(seq.data[t][:, 3 * t:],
                                  seq.data[0][:, :60 - 3 * t])

    def test_negative_velocity_mirrors_positive(self):
        base = self.base()
        fwd = make_translating_sequence(base[:, ::-1], (3, 0), 8, (60, 40))
        rev = make_translating_sequence(base, (-3, 0), 8, (60, 40))
        assert np.array_equal(fwd.data[:, :, ::-1, :], rev.data)

    def test_fractional_velocity_hits_integral_crops(self):
        # at even t the accumulated half-pixel offset is integral, so those
        # frames must be exact crops
        base = self.base()
        seq = make_translating_sequence(base, (0.5, 0), 6, (60, 40))
        whole = make_translating_sequence(base, (1.0, 0), 3, (60, 40))
        for t in range(3):
            assert np.array_equal(seq.data[2 * t], whole.data[t])

    def test_vertical_motion(self):
        base = self.base(h=120, w=80)
        seq = make_translating_sequence(base, (0, 2), 10, (60, 40))
        for t in range(1, 10):
            assert np.array_equal(seq.data[t][2 * t:, :],
                                  seq.data[0][:40 - 2 * t, :])

    def test_base_too_small(self):
        with pytest.raises(BaseTooSmallError):
            make_translating_sequence(self.base(w=80), (3, 0), 8, (60, 40))

    def test_deterministic(self):
        base = self.base()
        a = make_translating_sequence(base, (2.5, -1.5), 6, (60, 30))
        b = make_translating_sequence(base, (2.5, -1.5), 6, (60, 30))
        assert np.array_equal(a.data, b.data)


class TestBlend:
    def streams(self):
        gen = np.random.default_rng(2)
        v1 = FrameSequence(gen.random((4, 20, 24, 1)))
        v2 = FrameSequence(gen.random((4, 20, 24, 1)))
        return v1, v2

    def test_alpha_one_is_first_stream(self):
        v1, v2 = self.streams()
        assert np.array_equal(blend(v1, v2, 1.0).data, v1.data)

    def test_known_mix_value(self):
        v1 = FrameSequence(np.full((1, 12, 12, 1), 0.5))
        v2 = FrameSequence(np.full((1, 12, 12, 1), 1.0))
        out = blend(v1, v2, 0.8)
        assert out.data[0, 0, 0, 0] == pytest.approx(0.6, abs=1e-8)

    def test_half_mix_of_identical_streams(self):
        v1, _ = self.streams()
        assert np.array_equal(blend(v1, v1, 0.5).data, v1.data)

    def test_dimension_mismatch(self):
        v1, _ = self.streams()
        v3 = FrameSequence(np.zeros((4, 20, 25, 1)))
        with pytest.raises(DimensionMismatchError):
            blend(v1, v3, 0.8)

    def test_alpha_validated(self):
        v1, v2 = self.streams()
        with pytest.raises(InvalidArgumentError):
            blend(v1, v2, 1.5)

    def test_mix_invertible_through_contributions(self):
        bundle = default_bundle(small_config())
        b_s, r_s = scaled_contributions(bundle)
        assert np.array_equal(b_s.data + r_s.data, bundle.mixed.data)
        assert np.array_equal(bundle.mixed.data - b_s.data, r_s.data)


class TestSsim:
    def test_identical_frames_score_one(self):
        x = np.random.default_rng(0).random((20, 24, 1))
        assert ssim(x, x) == 1.0

    def test_uniform_frames_closed_form(self):
        a = snap_to_grid(np.full((20, 20, 1), 0.4))
        b = snap_to_grid(np.full((20, 20, 1), 0.6))
        c1 = 0.01 ** 2
        expect = (2 * 0.4 * 0.6 + c1) / (0.4 ** 2 + 0.6 ** 2 + c1)
        assert ssim(a, b) == pytest.approx(expect, abs=1e-8)

    def test_symmetric(self):
        gen = np.random.default_rng(3)
        a = gen.random((16, 18, 1))
        b = gen.random((16, 18, 1))
        assert ssim(a, b) == ssim(b, a)

    def test_bounded(self):
        gen = np.random.default_rng(4)
        for _ in range(5):
            a = gen.random((14, 14, 1))
            b = gen.random((14, 14, 1))
            assert abs(ssim(a, b)) <= 1.0 + 1e-12

    def test_noise_scores_below_identity(self):
        gen = np.random.default_rng(5)
        x = gen.random((24, 24, 1)) * 0.5 + 0.25
        y = np.clip(x + 0.05 * gen.standard_normal(x.shape), 0, 1)
        assert ssim(x, y) < 1.0

    def test_rgb_averages_channels(self):
        gen = np.random.default_rng(6)
        a = gen.random((16, 16))
        b = gen.random((16, 16))
        rgb_a = np.repeat(a[..., None], 3, axis=2)
        rgb_b = np.repeat(b[..., None], 3, axis=2)
        assert ssim(rgb_a, rgb_b) == pytest.approx(ssim(a, b), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ssim(np.zeros((14, 14)), np.zeros((14, 15)))

    def test_frame_smaller_than_window(self):
        with pytest.raises(FrameSmallerThanWindowError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))


class TestBundle:
    def test_default_bundle_composition(self):
        bundle = default_bundle(small_config())
        a = bundle.config.alpha
        raw = (a * bundle.gt_background.data
               + (1 - a) * bundle.gt_reflection.data)
        assert np.abs(bundle.mixed.data - raw).max() <= 1e-9

    def test_deterministic(self):
        cfg = small_config()
        b1 = default_bundle(cfg, seed=0)
        b2 = default_bundle(cfg, seed=0)
        assert np.array_equal(b1.mixed.data, b2.mixed.data)
        assert np.array_equal(b1.gt_labels, b2.gt_labels)

    def test_ownership_masks_cover_both_layers(self):
        bundle = default_bundle()
        for t in range(bundle.mixed.frame_count):
            assert (bundle.gt_labels[t] == LayerLabel.BACKGROUND).any()
            assert (bundle.gt_labels[t] == LayerLabel.REFLECTION).any()

    def test_contested_pixels_are_unowned(self):
        cfg = small_config()
        bg, _ = default_bases(cfg)
        seq = make_translating_sequence(bg, (3.0, 0.0), cfg.frame_count,
                                        cfg.dimensions)
        labels = ownership_labels(seq, seq)
        assert not labels.any()

    def test_wrong_mixture_rejected(self):
        bundle = default_bundle(small_config())
        with pytest.raises(InvalidArgumentError):
            GroundTruthBundle(
                mixed=FrameSequence(np.zeros_like(bundle.mixed.data)),
                gt_background=bundle.gt_background,
                gt_reflection=bundle.gt_reflection,
                gt_labels=bundle.gt_labels, config=bundle.config)

    def test_label_shape_checked(self):
        bundle = default_bundle(small_config())
        with pytest.raises(DimensionMismatchError):
            GroundTruthBundle(mixed=bundle.mixed,
                              gt_background=bundle.gt_background,
                              gt_reflection=bundle.gt_reflection,
                              gt_labels=bundle.gt_labels[:, :10, :10],
                              config=bundle.config)

    def test_save_load_round_trip(self, tmp_path):
        bundle = default_bundle(small_config())
        out = tmp_path / "bundle"
        save_bundle(bundle, str(out))
        loaded = load_bundle(str(out))
        assert loaded.config == bundle.config
        assert np.array_equal(loaded.gt_labels, bundle.gt_labels)
        # frame files are 8-bit, so pixels return within one step
        assert np.abs(loaded.mixed.data - bundle.mixed.data).max() <= 0.5 / 255


class TestEvaluate:
    def test_exact_decomposition_scores_one(self):
        bundle = default_bundle(small_config())
        b_s, r_s = scaled_contributions(bundle)
        dec = LayerDecomposition(
            background=b_s, reflection=r_s,
            layer_map=np.zeros(bundle.gt_labels.shape, np.uint8))
        res = evaluate(dec, bundle)
        assert np.all(res.ssim_background == 1.0)
        assert np.all(res.ssim_reflection == 1.0)
        assert res.wins == bundle.mixed.frame_count

    def test_null_separation_matches_baseline(self):
        bundle = default_bundle(small_config())
        dec = LayerDecomposition(
            background=bundle.mixed,
            reflection=FrameSequence(np.zeros_like(bundle.mixed.data)),
            layer_map=np.zeros(bundle.gt_labels.shape, np.uint8))
        res = evaluate(dec, bundle)
        assert np.array_equal(res.ssim_background, res.ssim_baseline)
        assert res.wins == 0

    def test_dimension_mismatch(self):
        bundle = default_bundle(small_config())
        z = np.zeros((2, 12, 12, 1))
        dec = LayerDecomposition(background=FrameSequence(z),
                                 reflection=FrameSequence(z),
                                 layer_map=np.zeros((2, 12, 12), np.uint8))
        with pytest.raises(DimensionMismatchError):
            evaluate(dec, bundle)

    def test_csv_round_trip(self, tmp_path):
        bundle = default_bundle(small_config())
        dec = LayerDecomposition(
            background=bundle.mixed,
            reflection=FrameSequence(np.zeros_like(bundle.mixed.data)),
            layer_map=np.zeros(bundle.gt_labels.shape, np.uint8))
        res = evaluate(dec, bundle)
        path = tmp_path / "ssim.csv"
        res.write_csv(str(path))
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["frame", "ssim_b", "ssim_r", "ssim_input_baseline"]
        assert len(rows) == bundle.mixed.frame_count + 1
        assert float(rows[1][1]) == res.ssim_background[0]


class TestAutoScribbles:
    def test_seeds_both_classes_on_owned_pixels(self):
        bundle = default_bundle(small_config(dimensions=(96, 96),
                                             frame_count=10))
        s = auto_scribbles(bundle, 0)
        labels = bundle.gt_labels[0]
        refl = [st for st in s.strokes if st.label == LayerLabel.REFLECTION]
        back = [st for st in s.strokes if st.label == LayerLabel.BACKGROUND]
        assert refl and back
        for st in refl:
            x, y = st.points[0]
            assert labels[int(y), int(x)] == LayerLabel.REFLECTION
        mask = labels == LayerLabel.REFLECTION
        ys, xs = np.nonzero(mask)
        for st in back:
            x, y = st.points[0]
            d = np.hypot(xs - x, ys - y).min()
            assert d >= 16.0

    def test_frame_out_of_range(self):
        bundle = default_bundle(small_config())
        with pytest.raises(InvalidArgumentError):
            auto_scribbles(bundle, bundle.mixed.frame_count)

    def test_frame_without_reflection_pixels(self):
        cfg = small_config()
        bg, _ = default_bases(cfg)
        flat = np.full((40, 80), 0.3)
        bundle = make_bundle(bg, flat, cfg)
        with pytest.raises(InvalidArgumentError):
            auto_scribbles(bundle, 0)
