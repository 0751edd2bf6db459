"""Per-layer projective motion.

Homographies are estimated from labeled track correspondences with a
normalized DLT, made robust by iteratively reweighted least squares using
Huber weights w = min(1, delta / residual) applied to the DLT rows (so the
solved objective is sum (w * r)^2, which crushes outlier influence
quadratically). Warp sets hold, per sliding window and per layer, the
homography mapping each member frame onto the window's reference frame.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InvalidArgumentError,
    MissingWarpError,
    SingularHomographyError,
)
from .tracking import LayerLabel, TrackSet

_LAYERS = (LayerLabel.BACKGROUND, LayerLabel.REFLECTION)


@dataclass
class WindowConfig:
    length: int = 10
    stride: int = 1


@dataclass
class IrlsConfig:
    max_iterations: int = 50
    huber_delta: float = 1.0     # px
    weight_tol: float = 1e-6


class Homography:
    """3x3 projective map with m[2][2] fixed to 1."""

    def __init__(self, m: np.ndarray):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3, 3):
            raise InvalidArgumentError("homography must be 3x3")
        if abs(m[2, 2]) <= 1e-12:
            raise SingularHomographyError("cannot normalize m[2][2] to 1")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise SingularHomographyError("homography is singular")
        self.m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        homo = np.column_stack([pts, np.ones(len(pts))]) @ self.m.T
        return homo[:, :2] / homo[:, 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def compose(self, other: "Homography") -> "Homography":
        """self after other: (self.compose(other)).apply == self(other(p))."""
        return Homography(self.m @ other.m)

    def __repr__(self) -> str:
        return f"Homography({self.m.tolist()})"


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley normalization: centroid to origin, mean radius sqrt(2)."""
    centroid = pts.mean(axis=0)
    shifted = pts - centroid
    mean_dist = np.mean(np.hypot(shifted[:, 0], shifted[:, 1]))
    if mean_dist < 1e-12:
        raise DegenerateConfigurationError("correspondences are coincident")
    s = np.sqrt(2.0) / mean_dist
    t = np.array([[s, 0, -s * centroid[0]],
                  [0, s, -s * centroid[1]],
                  [0, 0, 1.0]])
    return shifted * s, t


def _dlt_rows(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    r1 = np.stack([-x, -y, -one, zero, zero, zero, u * x, u * y, u], axis=1)
    r2 = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=1)
    return np.stack([r1, r2], axis=1)  # (K, 2, 9)


def _solve_dlt(src: np.ndarray, dst: np.ndarray,
               weights: np.ndarray | None = None) -> tuple[Homography, np.ndarray]:
    """Weighted normalized DLT; returns (H, unit h in normalized space)."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise InvalidArgumentError("src and dst must pair up")
    if len(src) < 4:
        raise InvalidArgumentError("need at least 4 correspondences")
    if not (np.isfinite(src).all() and np.isfinite(dst).all()):
        raise InvalidArgumentError("correspondences must be finite")

    src_n, t_src = _normalize_points(src)
    dst_n, t_dst = _normalize_points(dst)
    rows = _dlt_rows(src_n, dst_n)
    if weights is not None:
        rows = rows * weights[:, None, None]
    a = rows.reshape(-1, 9)
    # full matrices: with exactly 4 pairs A is 8x9 and the null vector only
    # appears in the full V
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    if s[7] <= 1e-9 * max(s[0], 1e-300):
        raise DegenerateConfigurationError(
            "correspondence geometry does not determine a homography "
            "(3+ collinear or coincident points)")
    h = vt[-1]
    hn = h.reshape(3, 3)
    m = np.linalg.inv(t_dst) @ hn @ t_src
    return Homography(m), h


def reprojection_residuals(h: Homography, src: np.ndarray,
                           dst: np.ndarray) -> np.ndarray:
    mapped = h.apply(src)
    d = mapped - np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    return np.hypot(d[:, 0], d[:, 1])


def reprojection_rms(h: Homography, src: np.ndarray, dst: np.ndarray) -> float:
    r = reprojection_residuals(h, src, dst)
    return float(np.sqrt(np.mean(r ** 2)))


def estimate_homography_dlt(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Normalized DLT from >= 4 correspondences (src frame -> dst frame)."""
    h, _ = _solve_dlt(src, dst)
    return h


def estimate_homography_irls(src: np.ndarray, dst: np.ndarray,
                             cfg: IrlsConfig | None = None,
                             return_info: bool = False):
    """Robust DLT with Huber row weights min(1, delta/residual).

    Iterates until the weight vector moves less than weight_tol or the
    iteration cap is hit (then the best iterate is returned with a warning).
    The weighted algebraic cost is checked to be non-increasing under fixed
    weights at every iteration.
    """
    cfg = cfg or IrlsConfig()
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    weights = np.ones(len(src))
    h, h_unit = _solve_dlt(src, dst, weights)
    cost_trace = []
    converged = False

    src_n, _ = _normalize_points(src)
    dst_n, _ = _normalize_points(dst)
    rows = _dlt_rows(src_n, dst_n)

    def algebraic_cost(unit_h, w):
        scaled = rows * w[:, None, None]
        return float(np.sum((scaled.reshape(-1, 9) @ unit_h) ** 2))

    for _ in range(cfg.max_iterations):
        residuals = reprojection_residuals(h, src, dst)
        new_weights = np.minimum(1.0, cfg.huber_delta / np.maximum(residuals, 1e-12))
        prev_cost = algebraic_cost(h_unit, new_weights)
        h_new, h_unit_new = _solve_dlt(src, dst, new_weights)
        new_cost = algebraic_cost(h_unit_new, new_weights)
        # the weighted solve must not increase its own objective
        assert new_cost <= prev_cost + 1e-9 * max(prev_cost, 1.0)
        cost_trace.append(new_cost)
        shift = float(np.max(np.abs(new_weights - weights)))
        h, h_unit, weights = h_new, h_unit_new, new_weights
        if shift < cfg.weight_tol:
            converged = True
            break
    if not converged:
        warnings.warn("IRLS homography did not converge; returning best iterate",
                      RuntimeWarning, stacklevel=2)
    if return_info:
        info = {
            "iterations": len(cost_trace),
            "converged": converged,
            "cost_trace": cost_trace,
            "rms": reprojection_rms(h, src, dst),
            "weights": weights,
        }
        return h, info
    return h


class WarpSet:
    """Per-window, per-layer homographies onto the window reference frame.

    ``matrices[(start, layer)][k]`` maps frame start+k coordinates into frame
    start coordinates; entry 0 is the identity. ``fallbacks`` records (start,
    frame, layer) triples whose estimate was reused from a preceding window
    for lack of correspondences.
    """

    def __init__(self, frame_count: int, window: WindowConfig):
        if frame_count < window.length:
            raise InvalidArgumentError(
                f"sequence of {frame_count} frames is shorter than one "
                f"window ({window.length})")
        self.frame_count = frame_count
        self.window = window
        self.matrices: dict = {}
        self.fallbacks: set = set()

    @property
    def window_starts(self) -> list:
        return list(range(0, self.frame_count - self.window.length + 1,
                          self.window.stride))

    def set_window(self, start: int, layer: LayerLabel, mats: list) -> None:
        if len(mats) != self.window.length:
            raise InvalidArgumentError("window matrix list has wrong length")
        self.matrices[(start, layer)] = list(mats)

    def window_matrices(self, start: int, layer: LayerLabel) -> list:
        try:
            return self.matrices[(start, layer)]
        except KeyError:
            raise MissingWarpError(
                f"no warps for window {start}, layer {layer.to_name()}",
                window=start, layer=layer.to_name()) from None

    def homography(self, reference: int, frame: int, layer: LayerLabel) -> Homography:
        """Map ``frame`` coordinates into ``reference`` coordinates.

        Both frames must share a window; the pair is routed through the
        window starting at min(reference, frame) clamped to the last start.
        """
        lo = min(reference, frame)
        hi = max(reference, frame)
        if hi - lo > self.window.length - 1:
            raise MissingWarpError(
                f"frames {reference} and {frame} do not share a window",
                reference=reference, frame=frame)
        start = min(lo, self.frame_count - self.window.length)
        if start < 0 or hi >= self.frame_count:
            raise MissingWarpError(
                f"frames {reference} and {frame} out of range",
                reference=reference, frame=frame)
        mats = self.window_matrices(start, layer)
        h_frame = mats[frame - start]     # frame -> start
        h_ref = mats[reference - start]   # reference -> start
        if reference == frame:
            return Homography.identity()
        return h_ref.inverse().compose(h_frame)

    def to_json(self) -> dict:
        windows = []
        for (start, layer), mats in sorted(
                self.matrices.items(), key=lambda kv: (kv[0][0], int(kv[0][1]))):
            windows.append({
                "start": start,
                "layer": layer.to_name(),
                "matrices": [m.m.ravel().tolist() for m in mats],
                "fallback": [(start, start + k, layer) in self.fallbacks
                             for k in range(self.window.length)],
            })
        return {
            "frame_count": self.frame_count,
            "window": {"length": self.window.length, "stride": self.window.stride},
            "windows": windows,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "WarpSet":
        try:
            window = WindowConfig(**payload["window"])
            out = cls(int(payload["frame_count"]), window)
            for rec in payload["windows"]:
                layer = LayerLabel.from_name(rec["layer"])
                mats = [Homography(np.asarray(flat).reshape(3, 3))
                        for flat in rec["matrices"]]
                out.set_window(int(rec["start"]), layer, mats)
                for k, flag in enumerate(rec.get("fallback", [])):
                    if flag:
                        out.fallbacks.add((rec["start"], rec["start"] + k, layer))
            return out
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed warp JSON: {exc}") from exc

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path: str) -> "WarpSet":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def build_warpsets(ts: TrackSet, window: WindowConfig | None = None,
                   irls: IrlsConfig | None = None, min_pairs: int = 4,
                   progress=None) -> WarpSet:
    """Estimate per-window homographies for both layers from labeled tracks.

    For each window start r and member frame i, tracks alive at both r and i
    with the layer's label provide correspondences i -> r. Frame pairs with
    fewer than min_pairs correspondences reuse the same-offset matrix from
    the nearest preceding window (identity if none exists yet) and are
    flagged in ``fallbacks``.

    ``progress``, if given, is called as progress(done, total) after each
    (layer, window) unit.
    """
    window = window or WindowConfig()
    irls = irls or IrlsConfig()
    out = WarpSet(ts.frame_count, window)
    last_good: dict = {}
    n_units = len(_LAYERS) * len(out.window_starts)
    done = 0

    for layer in _LAYERS:
        for start in out.window_starts:
            mats = []
            for k in range(window.length):
                i = start + k
                if k == 0:
                    mats.append(Homography.identity())
                    continue
                alive = ts.alive_at(start, i, layer)
                if len(alive) >= min_pairs:
                    src = np.array([t.position_at(i) for t in alive])
                    dst = np.array([t.position_at(start) for t in alive])
                    try:
                        h = estimate_homography_irls(src, dst, irls)
                        mats.append(h)
                        last_good[(layer, k)] = h
                        continue
                    except DegenerateConfigurationError:
                        pass
                fallback = last_good.get((layer, k))
                if fallback is None:
                    fallback = Homography.identity()
                mats.append(fallback)
                out.fallbacks.add((start, i, layer))
            out.set_window(start, layer, mats)
            done += 1
            if progress is not None:
                progress(done, n_units)
    return out
