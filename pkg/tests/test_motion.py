import json

import numpy as np
import pytest

from reflectkit.errors import (
    DegenerateConfigurationError,
    InvalidArgumentError,
    MissingWarpError,
    SingularHomographyError,
)
from reflectkit.motion import (
    Homography,
    IrlsConfig,
    WarpSet,
    WindowConfig,
    build_warpsets,
    estimate_homography_dlt,
    estimate_homography_irls,
    reprojection_residuals,
    reprojection_rms,
)
from reflectkit.tracking import LayerLabel, Track, TrackSet


def make_translating_trackset(n_frames=15, bg_v=(3.0, 0.0), refl_v=(-2.0, 1.0),
                              noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    tracks = []
    tid = 0
    for gy in range(4):
        for gx in range(5):
            p0 = np.array([10.0 + 20 * gx, 8.0 + 12 * gy])
            pos = np.array([p0 + np.array(bg_v) * t for t in range(n_frames)])
            pos = pos + rng.normal(0, noise, pos.shape)
            tracks.append(Track(id=tid, start_frame=0, positions=pos,
                                label=LayerLabel.BACKGROUND))
            tid += 1
    for gy in range(3):
        for gx in range(3):
            p0 = np.array([15.0 + 25 * gx, 12.0 + 15 * gy])
            pos = np.array([p0 + np.array(refl_v) * t for t in range(n_frames)])
            pos = pos + rng.normal(0, noise, pos.shape)
            tracks.append(Track(id=tid, start_frame=0, positions=pos,
                                label=LayerLabel.REFLECTION))
            tid += 1
    return TrackSet(tracks=tracks, frame_count=n_frames)


class TestHomography:
    def test_identity_apply_is_noop(self):
        pts = np.array([[1.5, 2.5], [0.0, 0.0], [100.0, -3.0]])
        assert np.array_equal(Homography.identity().apply(pts), pts)

    def test_normalizes_bottom_right(self):
        h = Homography(2.0 * np.eye(3))
        assert h.m[2, 2] == 1.0
        assert np.array_equal(h.m, np.eye(3))

    def test_compose_matches_sequential_apply(self):
        a = Homography(np.array([[1, 0, 3.0], [0, 1, -2.0], [0, 0, 1]]))
        b = Homography(np.array([[0.9, 0.1, 0], [-0.1, 1.1, 5.0], [1e-4, 0, 1]]))
        pts = np.random.default_rng(0).uniform(0, 50, (8, 2))
        ab = a.compose(b)
        assert np.allclose(ab.apply(pts), a.apply(b.apply(pts)), atol=1e-12)

    def test_inverse_round_trips(self):
        h = Homography(np.array([[1.1, 0.02, -4], [0.01, 0.95, 2], [2e-4, 1e-4, 1]]))
        pts = np.random.default_rng(1).uniform(0, 80, (10, 2))
        assert np.allclose(h.inverse().apply(h.apply(pts)), pts, atol=1e-9)

    def test_singular_rejected(self):
        with pytest.raises(SingularHomographyError):
            Homography(np.array([[1, 0, 0], [2, 0, 0], [0, 0, 1.0]]))

    def test_zero_corner_rejected(self):
        m = np.eye(3)
        m[2, 2] = 0.0
        with pytest.raises(SingularHomographyError):
            Homography(m)


class TestDlt:
    def test_recovers_projective_map_noise_free(self):
        rng = np.random.default_rng(7)
        truth = Homography(np.array([[1.02, 0.01, 4.0],
                                     [-0.015, 0.98, -2.5],
                                     [1e-4, -2e-4, 1.0]]))
        src = rng.uniform(0, 100, size=(12, 2))
        est = estimate_homography_dlt(src, truth.apply(src))
        assert np.abs(est.m - truth.m).max() < 1e-8

    def test_exactly_four_points(self):
        src = np.array([[0, 0], [10, 0], [10, 10], [0, 10.0]])
        truth = Homography(np.array([[1, 0, 2.0], [0, 1, -3.0], [0, 0, 1]]))
        est = estimate_homography_dlt(src, truth.apply(src))
        assert np.abs(est.m - truth.m).max() < 1e-10

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        src = rng.uniform(0, 50, size=(9, 2))
        dst = src @ np.array([[0.98, 0.03], [-0.02, 1.01]]).T + [1.5, -0.5]
        e1 = estimate_homography_dlt(src, dst)
        e2 = estimate_homography_dlt(src * 10, dst * 10)
        s = np.diag([10.0, 10.0, 1.0])
        back = np.linalg.inv(s) @ e2.m @ s
        assert np.abs(back / back[2, 2] - e1.m).max() < 1e-6

    def test_collinear_points_rejected(self):
        src = np.array([[0, 0], [1, 1], [2, 2], [3, 3.0]])
        with pytest.raises(DegenerateConfigurationError):
            estimate_homography_dlt(src, src + 1)

    def test_coincident_points_rejected(self):
        src = np.zeros((5, 2))
        with pytest.raises(DegenerateConfigurationError):
            estimate_homography_dlt(src, src)

    def test_too_few_points_rejected(self):
        src = np.array([[0, 0], [5, 0], [0, 5.0]])
        with pytest.raises(InvalidArgumentError):
            estimate_homography_dlt(src, src + 2)

    def test_residual_helpers(self):
        src = np.array([[0, 0], [4, 0], [4, 4], [0, 4.0], [2, 1]])
        h = Homography(np.array([[1, 0, 1.0], [0, 1, 0], [0, 0, 1]]))
        r = reprojection_residuals(h, src, src)
        assert np.allclose(r, 1.0)
        assert reprojection_rms(h, src, src) == pytest.approx(1.0)


class TestIrls:
    def outlier_fixture(self, n_in=20, n_out=5, shift=(3.0, -1.0), mag=50.0):
        rng = np.random.default_rng(11)
        src = rng.uniform(0, 200, size=(n_in + n_out, 2))
        dst = src + np.asarray(shift)
        bump = rng.normal(size=(n_out, 2))
        bump = mag * bump / np.linalg.norm(bump, axis=1, keepdims=True)
        dst[:n_out] += bump
        return src, dst, n_out

    def test_matches_dlt_when_clean(self):
        rng = np.random.default_rng(5)
        src = rng.uniform(0, 100, size=(10, 2))
        dst = src + [2.0, 7.0]
        clean = estimate_homography_dlt(src, dst)
        robust = estimate_homography_irls(src, dst)
        assert np.abs(clean.m - robust.m).max() < 1e-8

    def test_ignores_gross_outliers(self):
        src, dst, n_out = self.outlier_fixture()
        est = estimate_homography_irls(src, dst)
        inlier_resid = reprojection_residuals(est, src[n_out:], dst[n_out:])
        assert inlier_resid.max() < 0.1

    def test_weighted_cost_non_increasing(self):
        src, dst, _ = self.outlier_fixture()
        _, info = estimate_homography_irls(src, dst, return_info=True)
        trace = info["cost_trace"]
        assert len(trace) >= 2
        for a, b in zip(trace, trace[1:]):
            assert b <= a + 1e-9 * max(a, 1.0)

    def test_outliers_end_up_downweighted(self):
        src, dst, n_out = self.outlier_fixture()
        _, info = estimate_homography_irls(src, dst, return_info=True)
        w = info["weights"]
        assert w[:n_out].max() < 0.05
        assert w[n_out:].min() > 0.99

    def test_iteration_cap_warns_and_returns(self):
        src, dst, _ = self.outlier_fixture()
        cfg = IrlsConfig(max_iterations=1, weight_tol=1e-15)
        with pytest.warns(RuntimeWarning):
            est = estimate_homography_irls(src, dst, cfg)
        assert isinstance(est, Homography)

    def test_half_outliers_returns_some_model(self):
        rng = np.random.default_rng(2)
        src = rng.uniform(0, 100, size=(8, 2))
        dst = src + [4.0, 0.0]
        dst[:4] += rng.uniform(20, 40, size=(4, 2))
        est = estimate_homography_irls(src, dst)
        assert isinstance(est, Homography)


class TestWarpSet:
    def test_translation_recovered_per_window(self):
        ts = make_translating_trackset()
        ws = build_warpsets(ts, WindowConfig(length=10, stride=1))
        # background drifts +3 px/frame so frame r+k maps back by -3k
        for r in (0, 3, 5):
            for k in (1, 4, 9):
                m = ws.homography(r, r + k, LayerLabel.BACKGROUND).m
                expect = np.array([[1, 0, -3.0 * k], [0, 1, 0], [0, 0, 1]])
                assert np.abs(m - expect).max() < 1e-6

    def test_reference_entry_is_identity(self):
        ts = make_translating_trackset()
        ws = build_warpsets(ts)
        for start in ws.window_starts:
            for layer in (LayerLabel.BACKGROUND, LayerLabel.REFLECTION):
                assert np.array_equal(ws.window_matrices(start, layer)[0].m,
                                      np.eye(3))

    def test_tail_frames_route_through_last_window(self):
        ts = make_translating_trackset(n_frames=15, refl_v=(-2.0, 1.0))
        ws = build_warpsets(ts)
        m = ws.homography(14, 8, LayerLabel.REFLECTION).m
        assert m[0, 2] == pytest.approx(-12.0, abs=1e-6)
        assert m[1, 2] == pytest.approx(6.0, abs=1e-6)
        back = ws.homography(8, 14, LayerLabel.REFLECTION).m
        assert back[0, 2] == pytest.approx(12.0, abs=1e-6)

    def test_composition_consistency_with_noise(self):
        ts = make_translating_trackset(noise=0.05, seed=4)
        ws = build_warpsets(ts)
        corners = np.array([[0, 0], [100, 0], [100, 50], [0, 50.0]])
        for r, i, j in [(0, 4, 8), (2, 5, 9), (0, 1, 9)]:
            direct = ws.homography(r, i, LayerLabel.BACKGROUND)
            via = ws.homography(r, j, LayerLabel.BACKGROUND).compose(
                ws.homography(j, i, LayerLabel.BACKGROUND))
            gap = np.hypot(*(direct.apply(corners) - via.apply(corners)).T)
            assert gap.max() < 0.2

    def test_far_apart_frames_raise(self):
        ts = make_translating_trackset()
        ws = build_warpsets(ts)
        with pytest.raises(MissingWarpError):
            ws.homography(0, 12, LayerLabel.BACKGROUND)

    def test_fallback_reuses_previous_window(self):
        ts = make_translating_trackset(n_frames=12)
        # kill all reflection tracks beyond frame 10: windows starting later
        # lose their correspondences at the last offsets
        trimmed = []
        for t in ts.tracks:
            if t.label is LayerLabel.REFLECTION:
                trimmed.append(Track(id=t.id, start_frame=0,
                                     positions=t.positions[:10], label=t.label))
            else:
                trimmed.append(t)
        ts2 = TrackSet(tracks=trimmed, frame_count=12)
        ws = build_warpsets(ts2)
        assert (1, 10, LayerLabel.REFLECTION) in ws.fallbacks
        assert (2, 11, LayerLabel.REFLECTION) in ws.fallbacks
        # the reused matrix equals the same-offset estimate from window 0
        reused = ws.window_matrices(1, LayerLabel.REFLECTION)[9].m
        donor = ws.window_matrices(0, LayerLabel.REFLECTION)[9].m
        assert np.array_equal(reused, donor)
        assert not any(f[2] is LayerLabel.BACKGROUND for f in ws.fallbacks)

    def test_no_labels_at_all_falls_back_to_identity(self):
        ts = make_translating_trackset()
        for t in ts.tracks:
            if t.label is LayerLabel.REFLECTION:
                t.label = LayerLabel.UNLABELED
        ws = build_warpsets(ts)
        m = ws.homography(0, 5, LayerLabel.REFLECTION).m
        assert np.array_equal(m, np.eye(3))
        assert (0, 5, LayerLabel.REFLECTION) in ws.fallbacks

    def test_sequence_shorter_than_window_rejected(self):
        ts = make_translating_trackset(n_frames=6)
        with pytest.raises(InvalidArgumentError):
            build_warpsets(ts, WindowConfig(length=10))

    def test_json_round_trip(self, tmp_path):
        ts = make_translating_trackset(noise=0.02, seed=9)
        ws = build_warpsets(ts)
        path = tmp_path / "warps.json"
        ws.save(str(path))
        loaded = WarpSet.load(str(path))
        assert loaded.frame_count == ws.frame_count
        assert loaded.window.length == ws.window.length
        assert loaded.fallbacks == ws.fallbacks
        for key, mats in ws.matrices.items():
            got = loaded.matrices[key]
            for a, b in zip(mats, got):
                assert np.allclose(a.m, b.m, atol=1e-15)
        payload = json.loads(path.read_text())
        assert {w["layer"] for w in payload["windows"]} == {"background",
                                                            "reflection"}

    def test_malformed_json_rejected(self):
        with pytest.raises(InvalidArgumentError):
            WarpSet.from_json({"frame_count": 10})

    def test_build_is_deterministic(self):
        ts = make_translating_trackset(noise=0.05, seed=6)
        a = build_warpsets(ts).to_json()
        b = build_warpsets(ts).to_json()
        assert json.dumps(a) == json.dumps(b)
