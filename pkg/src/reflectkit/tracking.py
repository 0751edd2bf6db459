"""Sparse point tracking.

Corners are structure-tensor minima (Shi-Tomasi style), tracked with a
pyramidal Lucas-Kanade kernel and validated by a forward-backward round trip.
Tracks that fail validation or leave the frame end (they are never resumed),
and empty coverage cells are re-seeded periodically. Everything is free of
randomness: the same sequence always yields the same TrackSet.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError
from .frames import FrameSequence
from .imageops import bilinear_sample

# An LK system is treated as flat (zero update) below this normal-matrix
# determinant; flat patches keep their position, they do not kill the track.
_FLAT_DET = 1e-12


class LayerLabel(IntEnum):
    UNLABELED = 0
    BACKGROUND = 1
    REFLECTION = 2

    def to_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "LayerLabel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise InvalidArgumentError(f"unknown label {name!r}") from None


@dataclass
class TrackerConfig:
    pyramid_levels: int = 3
    window_radius: int = 7          # 15x15 window
    max_iterations: int = 30
    epsilon: float = 0.01           # convergence, px
    fb_threshold: float = 0.5       # forward-backward tolerance, px
    reseed_interval: int = 5
    coverage_cell: int = 16
    max_features: int = 600
    quality: float = 0.01
    min_distance: float = 6.0


@dataclass
class Track:
    """One tracked point. Alive on [start_frame, start_frame + len - 1]."""

    id: int
    start_frame: int
    positions: np.ndarray           # (L, 2), columns x, y
    label: LayerLabel = LayerLabel.UNLABELED

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        if len(self.positions) == 0:
            raise InvalidArgumentError("track needs at least one position")

    @property
    def last_frame(self) -> int:
        return self.start_frame + len(self.positions) - 1

    def alive_at(self, frame: int) -> bool:
        return self.start_frame <= frame <= self.last_frame

    def position_at(self, frame: int) -> np.ndarray:
        if not self.alive_at(frame):
            raise InvalidArgumentError(
                f"track {self.id} not alive at frame {frame}")
        return self.positions[frame - self.start_frame]

    def velocity_at(self, frame: int) -> np.ndarray:
        """Displacement frame -> frame+1; needs both ends alive."""
        return self.position_at(frame + 1) - self.position_at(frame)

    def mean_velocity(self) -> np.ndarray:
        if len(self.positions) < 2:
            return np.zeros(2)
        return (self.positions[-1] - self.positions[0]) / (len(self.positions) - 1)


class TrackSet:
    def __init__(self, tracks: list, frame_count: int):
        self.tracks = list(tracks)
        self.frame_count = int(frame_count)
        self._by_id = {t.id: t for t in self.tracks}
        if len(self._by_id) != len(self.tracks):
            raise InvalidArgumentError("track ids must be unique")

    def __len__(self) -> int:
        return len(self.tracks)

    def __iter__(self):
        return iter(self.tracks)

    def get(self, track_id: int) -> Track:
        try:
            return self._by_id[track_id]
        except KeyError:
            raise InvalidArgumentError(f"no track with id {track_id}") from None

    def alive_at(self, i: int, j: int | None = None,
                 label: LayerLabel | None = None) -> list:
        out = []
        for t in self.tracks:
            if not t.alive_at(i):
                continue
            if j is not None and not t.alive_at(j):
                continue
            if label is not None and t.label != label:
                continue
            out.append(t)
        return out

    def to_json(self) -> dict:
        return {
            "frame_count": self.frame_count,
            "tracks": [
                {
                    "id": t.id,
                    "start_frame": t.start_frame,
                    "label": t.label.to_name(),
                    "positions": [[float(x), float(y)] for x, y in t.positions],
                }
                for t in self.tracks
            ],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "TrackSet":
        try:
            tracks = [
                Track(
                    id=int(rec["id"]),
                    start_frame=int(rec["start_frame"]),
                    positions=np.asarray(rec["positions"], dtype=np.float64),
                    label=LayerLabel.from_name(rec.get("label", "unlabeled")),
                )
                for rec in payload["tracks"]
            ]
            return cls(tracks, int(payload["frame_count"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed track JSON: {exc}") from exc

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path: str) -> "TrackSet":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def tracks_alive_at(ts: TrackSet, i: int, j: int | None = None,
                    label: LayerLabel | None = None) -> list:
    """Tracks alive at frame i (and j if given), optionally label-filtered."""
    return ts.alive_at(i, j, label)


# --- detection ---------------------------------------------------------------

def _min_eigen_response(plane: np.ndarray) -> np.ndarray:
    gx, gy = np.gradient(plane)[::-1]
    # 3x3 box sums of the tensor products
    a = ndimage.uniform_filter(gx * gx, size=3, mode="nearest")
    b = ndimage.uniform_filter(gx * gy, size=3, mode="nearest")
    c = ndimage.uniform_filter(gy * gy, size=3, mode="nearest")
    return (a + c) / 2 - np.sqrt(((a - c) / 2) ** 2 + b ** 2)


def detect_features(plane: np.ndarray, max_count: int = 600,
                    quality: float = 0.01, min_distance: float = 6.0
                    ) -> np.ndarray:
    """Corner positions (K, 2) as x, y floats, strongest first.

    Keeps local maxima of the structure-tensor minimum eigenvalue above
    quality * global max, then greedily enforces the pairwise min distance.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise InvalidArgumentError("detect_features expects a 2-D plane")
    if max_count < 1 or not (0 < quality <= 1) or min_distance < 0:
        raise InvalidArgumentError("bad detection parameters")
    response = _min_eigen_response(plane)
    peak = response.max()
    if peak <= 0:
        return np.zeros((0, 2))
    local_max = response == ndimage.maximum_filter(response, size=3, mode="nearest")
    ys, xs = np.nonzero(local_max & (response > quality * peak))
    order = np.argsort(-response[ys, xs], kind="stable")
    ys, xs = ys[order], xs[order]

    kept = []
    min_d2 = min_distance ** 2
    for x, y in zip(xs, ys):
        ok = True
        for kx, ky in kept:
            if (kx - x) ** 2 + (ky - y) ** 2 < min_d2:
                ok = False
                break
        if ok:
            kept.append((float(x), float(y)))
            if len(kept) == max_count:
                break
    return np.asarray(kept, dtype=np.float64).reshape(-1, 2)


# --- Lucas-Kanade kernel ------------------------------------------------------

def _allowed_levels(h: int, w: int, requested: int) -> int:
    levels = 1
    while levels < requested and min(h, w) / 2 ** levels >= 8:
        levels += 1
    return levels


def _build_pyramid(plane: np.ndarray, levels: int) -> list:
    out = []
    img = plane
    for lvl in range(levels):
        if lvl > 0:
            img = ndimage.gaussian_filter(img, 1.0, mode="nearest")[::2, ::2]
        gy, gx = np.gradient(img)
        out.append((img, gx, gy))
    return out


def _lk_flow(prev_pyr: list, next_pyr: list, points: np.ndarray,
             cfg: TrackerConfig) -> np.ndarray:
    """Vectorized pyramidal LK: displacement (K, 2) for all points at once."""
    k = len(points)
    if k == 0:
        return np.zeros((0, 2))
    r = cfg.window_radius
    oy, ox = np.mgrid[-r:r + 1, -r:r + 1]
    ox = ox.ravel()[None, :]
    oy = oy.ravel()[None, :]

    d = np.zeros((k, 2))
    levels = len(prev_pyr)
    for lvl in reversed(range(levels)):
        img_p, gx_p, gy_p = prev_pyr[lvl]
        img_n = next_pyr[lvl][0]
        scale = 2.0 ** lvl
        px = points[:, 0:1] / scale + ox
        py = points[:, 1:2] / scale + oy
        t_patch, _ = bilinear_sample(img_p, px, py)
        gx, _ = bilinear_sample(gx_p, px, py)
        gy, _ = bilinear_sample(gy_p, px, py)
        a = np.sum(gx * gx, axis=1)
        b = np.sum(gx * gy, axis=1)
        c = np.sum(gy * gy, axis=1)
        det = a * c - b * b
        solvable = det > _FLAT_DET
        inv_det = np.where(solvable, det, 1.0)

        active = solvable.copy()
        for _ in range(cfg.max_iterations):
            if not active.any():
                break
            j_patch, _ = bilinear_sample(
                img_n, px[active] + d[active, 0:1], py[active] + d[active, 1:2])
            e = t_patch[active] - j_patch
            bx = np.sum(gx[active] * e, axis=1)
            by = np.sum(gy[active] * e, axis=1)
            idx = np.nonzero(active)[0]
            dx = (c[idx] * bx - b[idx] * by) / inv_det[idx]
            dy = (a[idx] * by - b[idx] * bx) / inv_det[idx]
            d[idx, 0] += dx
            d[idx, 1] += dy
            still = np.hypot(dx, dy) >= cfg.epsilon
            active[idx] = still
        if lvl > 0:
            d *= 2.0
    return d


def _in_bounds(points: np.ndarray, h: int, w: int) -> np.ndarray:
    return ((points[:, 0] >= 0) & (points[:, 0] <= w - 1) &
            (points[:, 1] >= 0) & (points[:, 1] <= h - 1))


def _step_tracks(prev_pyr, next_pyr, points, cfg, h, w):
    """One tracking step with forward-backward validation.

    Returns (new_points, ok) where ok marks tracks that survive.
    """
    fwd = _lk_flow(prev_pyr, next_pyr, points, cfg)
    new_points = points + fwd
    ok = np.isfinite(new_points).all(axis=1) & _in_bounds(new_points, h, w)
    if ok.any():
        back = _lk_flow(next_pyr, prev_pyr, new_points[ok], cfg)
        fb_err = np.hypot(*(new_points[ok] + back - points[ok]).T)
        sub = ok[ok].copy()
        sub &= np.isfinite(fb_err) & (fb_err <= cfg.fb_threshold)
        ok[np.nonzero(ok)[0]] = sub
    return new_points, ok


def track_sequence(seq: FrameSequence, cfg: TrackerConfig | None = None) -> TrackSet:
    """Detect and track corners across the whole sequence.

    Seeding happens at frame 0 and every reseed_interval frames after that,
    restricted to coverage cells with no live track. All tracks come back
    unlabeled.
    """
    cfg = cfg or TrackerConfig()
    lumas = seq.luma()
    n, h, w = lumas.shape
    levels = _allowed_levels(h, w, cfg.pyramid_levels)

    pyramids = [None] * n

    def pyr(i):
        if pyramids[i] is None:
            pyramids[i] = _build_pyramid(lumas[i], levels)
        return pyramids[i]

    done: list[Track] = []
    live_ids: list[int] = []
    live_start: list[int] = []
    live_pos: list[list] = []          # per live track: list of (x, y)
    next_id = 0

    def seed(frame_idx):
        nonlocal next_id
        occupied = set()
        for pos in live_pos:
            x, y = pos[-1]
            occupied.add((int(x // cfg.coverage_cell), int(y // cfg.coverage_cell)))
        candidates = detect_features(lumas[frame_idx], cfg.max_features,
                                     cfg.quality, cfg.min_distance)
        for x, y in candidates:
            cell = (int(x // cfg.coverage_cell), int(y // cfg.coverage_cell))
            if cell in occupied:
                continue
            occupied.add(cell)
            live_ids.append(next_id)
            live_start.append(frame_idx)
            live_pos.append([(float(x), float(y))])
            next_id += 1

    def retire(indices):
        for i in sorted(indices, reverse=True):
            done.append(Track(live_ids[i], live_start[i],
                              np.asarray(live_pos[i])))
            del live_ids[i], live_start[i], live_pos[i]

    for f in range(n):
        if f % cfg.reseed_interval == 0:
            seed(f)
        if f == n - 1:
            break
        if not live_ids:
            continue
        points = np.asarray([p[-1] for p in live_pos])
        new_points, ok = _step_tracks(pyr(f), pyr(f + 1), points, cfg, h, w)
        dead = []
        for i in range(len(live_ids)):
            if ok[i]:
                live_pos[i].append((float(new_points[i, 0]), float(new_points[i, 1])))
            else:
                dead.append(i)
        retire(dead)

    retire(range(len(live_ids)))
    done.sort(key=lambda t: t.id)
    return TrackSet(done, n)


def track_from_point(seq: FrameSequence, frame: int, x: float, y: float,
                     cfg: TrackerConfig | None = None) -> np.ndarray:
    """Track a single point forward from (frame, x, y) until it is lost.

    Returns the positions array (L >= 1, 2); L == 1 means the very first
    step already failed validation (or frame is the last one).
    """
    cfg = cfg or TrackerConfig()
    lumas = seq.luma()
    n, h, w = lumas.shape
    if not 0 <= frame < n:
        raise InvalidArgumentError(f"frame {frame} out of range")
    if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
        raise InvalidArgumentError(f"point ({x}, {y}) is outside the frame")
    levels = _allowed_levels(h, w, cfg.pyramid_levels)
    pyramids = {}

    def pyr(i):
        if i not in pyramids:
            pyramids[i] = _build_pyramid(lumas[i], levels)
        return pyramids[i]

    positions = [(float(x), float(y))]
    for f in range(frame, n - 1):
        points = np.asarray([positions[-1]])
        new_points, ok = _step_tracks(pyr(f), pyr(f + 1), points, cfg, h, w)
        if not ok[0]:
            break
        positions.append((float(new_points[0, 0]), float(new_points[0, 1])))
    return np.asarray(positions)
