"""Scribble-driven track labeling.

Polyline scribbles on a single frame seed the labels of nearby tracks; a
random walker on a motion/color affinity graph extends the seeds to every
track alive at that frame; track identity carries labels across frames, and
tracks born later are labeled by re-solving the walker at their birth frame
with the already-labeled co-alive tracks as seeds. A k-means fallback labels
tracks with no user assistance at all.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image
from scipy.sparse import coo_matrix, csgraph, diags
from scipy.sparse.linalg import spsolve

from .errors import (
    ConflictingScribblesError,
    DisconnectedComponentError,
    InsufficientTracksError,
    InvalidArgumentError,
    MissingLabelSeedsError,
    TrackImmediatelyLostError,
    UnlabelableTrackError,
)
from .frames import FrameSequence
from .tracking import (
    LayerLabel,
    Track,
    TrackSet,
    TrackerConfig,
    track_from_point,
)

_SEED_LABELS = (LayerLabel.BACKGROUND, LayerLabel.REFLECTION)


@dataclass
class Stroke:
    label: LayerLabel
    radius: float
    points: np.ndarray   # (K, 2) x,y polyline

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(self.points) == 0:
            raise InvalidArgumentError("stroke needs at least one point")
        if not np.isfinite(self.points).all():
            raise InvalidArgumentError("stroke points must be finite")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidArgumentError("stroke radius must be positive")
        if self.label not in _SEED_LABELS:
            raise InvalidArgumentError("stroke label must be background or reflection")


@dataclass
class ScribbleSet:
    frame_index: int
    strokes: list = field(default_factory=list)

    def __post_init__(self):
        if self.frame_index < 0:
            raise InvalidArgumentError("frame_index must be >= 0")

    def to_json(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "strokes": [{
                "label": s.label.to_name(),
                "radius": s.radius,
                "points": s.points.tolist(),
            } for s in self.strokes],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ScribbleSet":
        try:
            strokes = [Stroke(label=LayerLabel.from_name(rec["label"]),
                              radius=float(rec["radius"]),
                              points=rec["points"])
                       for rec in payload["strokes"]]
            return cls(frame_index=int(payload["frame_index"]), strokes=strokes)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed scribble JSON: {exc}") from exc

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path: str) -> "ScribbleSet":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def from_mask(cls, mask: np.ndarray, frame_index: int) -> "ScribbleSet":
        """Label mask (0 none, 1 background, 2 reflection) to point strokes.

        Each marked pixel becomes its own single-point stroke of radius 0.5
        so mask coverage and stroke coverage coincide.
        """
        mask = np.asarray(mask)
        extra = set(np.unique(mask)) - {0, 1, 2}
        if extra:
            raise InvalidArgumentError(f"mask values must be 0/1/2, got {sorted(extra)}")
        strokes = []
        for value, label in ((1, LayerLabel.BACKGROUND), (2, LayerLabel.REFLECTION)):
            ys, xs = np.nonzero(mask == value)
            for x, y in zip(xs, ys):
                strokes.append(Stroke(label=label, radius=0.5,
                                      points=np.array([[float(x), float(y)]])))
        return cls(frame_index=frame_index, strokes=strokes)

    @classmethod
    def from_mask_file(cls, path: str, frame_index: int) -> "ScribbleSet":
        with Image.open(path) as img:
            mask = np.asarray(img.convert("P") if img.mode == "P" else img.convert("L"))
        return cls.from_mask(mask, frame_index)


def _polyline_distance(p: np.ndarray, pts: np.ndarray) -> float:
    if len(pts) == 1:
        return float(np.hypot(*(p - pts[0])))
    a, b = pts[:-1], pts[1:]
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = p - proj
    return float(np.min(np.hypot(d[:, 0], d[:, 1])))


def apply_scribbles(ts: TrackSet, s: ScribbleSet) -> dict:
    """Seed labels for tracks whose position at s.frame_index touches a stroke."""
    if s.frame_index >= ts.frame_count:
        raise InvalidArgumentError(
            f"scribble frame {s.frame_index} beyond sequence of {ts.frame_count}")
    seeds: dict = {}
    for track in ts.alive_at(s.frame_index):
        pos = track.position_at(s.frame_index)
        for stroke in s.strokes:
            if _polyline_distance(pos, stroke.points) <= stroke.radius:
                prev = seeds.get(track.id)
                if prev is not None and prev is not stroke.label:
                    raise ConflictingScribblesError(
                        f"track {track.id} touched by both labels",
                        track_id=track.id)
                seeds[track.id] = stroke.label
    return seeds


@dataclass
class AffinityGraph:
    frame: int
    node_ids: list                    # sorted track ids alive at frame
    weights: dict = field(default_factory=dict)  # (lo_id, hi_id) -> w > 0

    def __post_init__(self):
        for key, w in self.weights.items():
            if not (w > 0):
                raise InvalidArgumentError(f"edge {key} weight must be positive")
            if key[0] == key[1]:
                raise InvalidArgumentError("self edges are not allowed")


def _track_velocities(track: Track) -> np.ndarray:
    return np.diff(track.positions, axis=0)  # row f-1 is velocity at start+f


def _pair_motion_distance(a: Track, b: Track) -> float:
    lo = max(a.start_frame, b.start_frame) + 1
    hi = min(a.last_frame, b.last_frame)
    if hi < lo:
        d = a.mean_velocity() - b.mean_velocity()
        return float(np.hypot(*d))
    va = _track_velocities(a)[lo - a.start_frame - 1: hi - a.start_frame]
    vb = _track_velocities(b)[lo - b.start_frame - 1: hi - b.start_frame]
    d = va - vb
    return float(np.mean(np.hypot(d[:, 0], d[:, 1])))


def _track_patch_color(track: Track, pixels: np.ndarray, half: int = 2) -> np.ndarray:
    """Lifetime mean of the 5x5 patch mean around each tracked position."""
    n, h, w = pixels.shape[:3]
    means = []
    for offset, (x, y) in enumerate(track.positions):
        f = track.start_frame + offset
        cx, cy = int(round(x)), int(round(y))
        x0, x1 = max(0, cx - half), min(w, cx + half + 1)
        y0, y1 = max(0, cy - half), min(h, cy + half + 1)
        patch = pixels[f, y0:y1, x0:x1]
        means.append(patch.reshape(-1, pixels.shape[3] if pixels.ndim == 4 else 1).mean(axis=0))
    return np.mean(means, axis=0)


def build_affinity_graph(ts: TrackSet, seq: FrameSequence, frame: int,
                         k_neighbors: int = 8, sigma_motion: float = 1.0,
                         sigma_color: float = 0.1) -> AffinityGraph:
    """Connect each track alive at ``frame`` to its spatial k nearest peers.

    Edge weight is exp(-d_motion^2/sigma_motion^2) * exp(-d_color^2/sigma_color^2)
    with d_motion the mean per-frame velocity difference over the co-alive
    span and d_color the difference of lifetime-mean 5x5 patch color.
    """
    alive = ts.alive_at(frame)
    if len(alive) < 2:
        raise InsufficientTracksError(
            f"need at least 2 tracks alive at frame {frame}, found {len(alive)}")
    alive = sorted(alive, key=lambda t: t.id)
    positions = np.array([t.position_at(frame) for t in alive])
    colors = {t.id: _track_patch_color(t, seq.data) for t in alive}

    diff = positions[:, None, :] - positions[None, :, :]
    spatial = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(spatial, np.inf)
    k = min(k_neighbors, len(alive) - 1)

    pairs = set()
    for i in range(len(alive)):
        order = np.argsort(spatial[i], kind="stable")[:k]
        for j in order:
            pairs.add((min(i, int(j)), max(i, int(j))))

    weights = {}
    for i, j in sorted(pairs):
        a, b = alive[i], alive[j]
        dm = _pair_motion_distance(a, b)
        dc = float(np.linalg.norm(colors[a.id] - colors[b.id]))
        w = np.exp(-(dm / sigma_motion) ** 2) * np.exp(-(dc / sigma_color) ** 2)
        weights[(a.id, b.id)] = max(float(w), 1e-300)
    return AffinityGraph(frame=frame, node_ids=[t.id for t in alive],
                         weights=weights)


def random_walk_labels(g: AffinityGraph, seeds: dict,
                       return_probabilities: bool = False):
    """Dirichlet-problem labeling of unseeded nodes.

    Unseeded potentials x solve L_uu x = W_us x_s per label; each node takes
    the label with the larger absorption probability, ties to Background.
    With return_probabilities the background probability per node comes back
    alongside the labels (seeds pinned to exactly 0 or 1).
    """
    if not seeds:
        raise MissingLabelSeedsError("no seeds given")
    seed_labels = set(seeds.values())
    if LayerLabel.UNLABELED in seed_labels:
        raise InvalidArgumentError("seeds must be background or reflection")
    if seed_labels != set(_SEED_LABELS):
        missing = (set(_SEED_LABELS) - seed_labels).pop()
        raise MissingLabelSeedsError(f"no {missing.to_name()} seeds")
    index = {tid: i for i, tid in enumerate(g.node_ids)}
    for tid in seeds:
        if tid not in index:
            raise InvalidArgumentError(f"seed track {tid} is not a graph node")

    n = len(g.node_ids)
    if not g.weights and n > len(seeds):
        unseeded_ids = [tid for tid in g.node_ids if tid not in seeds]
        raise DisconnectedComponentError(
            "graph has no edges", component=unseeded_ids)
    ii = np.array([index[a] for a, b in g.weights], dtype=int)
    jj = np.array([index[b] for a, b in g.weights], dtype=int)
    ww = np.array(list(g.weights.values()))
    w_mat = coo_matrix((np.concatenate([ww, ww]),
                        (np.concatenate([ii, jj]), np.concatenate([jj, ii]))),
                       shape=(n, n)).tocsr()

    n_comp, comp = csgraph.connected_components(w_mat, directed=False)
    seeded_idx = np.array([index[tid] for tid in seeds], dtype=int)
    seeded_comps = set(comp[seeded_idx])
    for c in range(n_comp):
        members = np.nonzero(comp == c)[0]
        if c not in seeded_comps:
            raise DisconnectedComponentError(
                "unseeded tracks unreachable from any seed",
                component=[g.node_ids[m] for m in members])

    out = dict(seeds)
    bg_prob = {tid: (1.0 if label is LayerLabel.BACKGROUND else 0.0)
               for tid, label in seeds.items()}
    unseeded = np.array([i for i in range(n) if g.node_ids[i] not in seeds],
                        dtype=int)
    if len(unseeded) == 0:
        return (out, bg_prob) if return_probabilities else out

    degree = np.asarray(w_mat.sum(axis=1)).ravel()
    lap = (diags(degree) - w_mat).tocsr()
    l_uu = lap[unseeded][:, unseeded].tocsc()
    w_us = w_mat[unseeded][:, seeded_idx]

    probs = {}
    for label in _SEED_LABELS:
        x_s = np.array([1.0 if seeds[tid] is label else 0.0 for tid in seeds])
        b = w_us @ x_s
        x = spsolve(l_uu, b)
        x = np.atleast_1d(x)
        probs[label] = x
    total = probs[LayerLabel.BACKGROUND] + probs[LayerLabel.REFLECTION]
    assert np.all(np.abs(total - 1.0) <= 1e-9), "absorption probabilities must sum to 1"
    for label in _SEED_LABELS:
        assert np.all(probs[label] >= -1e-9) and np.all(probs[label] <= 1 + 1e-9)

    for row, i in enumerate(unseeded):
        bg = probs[LayerLabel.BACKGROUND][row]
        rf = probs[LayerLabel.REFLECTION][row]
        out[g.node_ids[i]] = LayerLabel.BACKGROUND if bg >= rf else LayerLabel.REFLECTION
        bg_prob[g.node_ids[i]] = float(bg)
    return (out, bg_prob) if return_probabilities else out


def add_user_track(ts: TrackSet, seq: FrameSequence, start: tuple,
                   label: LayerLabel, cfg: TrackerConfig | None = None) -> TrackSet:
    """Track a user-chosen point forward and add it pre-labeled."""
    frame, x, y = start
    if frame >= seq.frame_count - 1:
        raise InvalidArgumentError("cannot start a track on the last frame")
    positions = track_from_point(seq, frame, x, y, cfg)
    if len(positions) == 1:
        raise TrackImmediatelyLostError(
            "point could not be followed past its first frame",
            frame=frame, x=x, y=y)
    new_id = max((t.id for t in ts.tracks), default=-1) + 1
    added = Track(id=new_id, start_frame=frame, positions=positions, label=label)
    return TrackSet(tracks=list(ts.tracks) + [added], frame_count=ts.frame_count)


def propagate_labels(ts: TrackSet, labels_at_frame: dict, seq: FrameSequence,
                     k_neighbors: int = 8, sigma_motion: float = 1.0,
                     sigma_color: float = 0.1) -> TrackSet:
    """Carry frame labels over track lifetimes; label later-born tracks.

    Tracks named in ``labels_at_frame`` take that label for their whole
    lifetime. Remaining tracks are handled in birth-frame order: the random
    walker is re-solved over tracks alive at the birth frame with every
    already-labeled one as a seed (a single seed class short-circuits to
    that class).
    """
    by_id = {}
    for t in ts.tracks:
        if t.id in by_id:
            raise InvalidArgumentError(f"duplicate track id {t.id}")
        by_id[t.id] = t
    labels = {}
    for tid, label in labels_at_frame.items():
        if tid not in by_id:
            raise InvalidArgumentError(f"labeled track {tid} does not exist")
        if label not in _SEED_LABELS:
            raise InvalidArgumentError("labels must be background or reflection")
        labels[tid] = label
    for t in ts.tracks:
        if t.label is not LayerLabel.UNLABELED:
            prev = labels.get(t.id)
            if prev is not None and prev is not t.label:
                raise ConflictingScribblesError(
                    f"track {t.id} already labeled {t.label.to_name()}",
                    track_id=t.id)
            labels[t.id] = t.label

    pending = sorted((t for t in ts.tracks if t.id not in labels),
                     key=lambda t: (t.start_frame, t.id))
    for track in pending:
        if track.id in labels:
            continue
        birth = track.start_frame
        alive = ts.alive_at(birth)
        seeds = {t.id: labels[t.id] for t in alive if t.id in labels}
        if not seeds:
            raise UnlabelableTrackError(
                f"track {track.id} shares no frame with any labeled track",
                track_id=track.id, frame=birth)
        classes = set(seeds.values())
        if len(classes) == 1:
            only = classes.pop()
            for t in alive:
                labels.setdefault(t.id, only)
            continue
        graph = build_affinity_graph(ts, seq, birth, k_neighbors,
                                     sigma_motion, sigma_color)
        solved = random_walk_labels(graph, seeds)
        for tid, label in solved.items():
            labels.setdefault(tid, label)

    relabeled = [replace(t, label=labels[t.id]) for t in ts.tracks]
    return TrackSet(tracks=relabeled, frame_count=ts.frame_count)


def kmeans_fallback(ts: TrackSet) -> TrackSet:
    """Two-cluster mean-velocity labeling for runs without any scribbles.

    Seeding picks the two most distant velocity vectors, Lloyd iterations
    run to a fixed point, and the larger cluster is called Background. All
    velocities identical collapses to one cluster: everything Background
    and a warning.
    """
    eligible = [t for t in ts.tracks if len(t.positions) >= 2]
    if len(eligible) < 2:
        raise InsufficientTracksError(
            f"k-means needs 2 tracks with motion, found {len(eligible)}")
    vel = np.array([t.mean_velocity() for t in eligible])

    diff = vel[:, None, :] - vel[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    i, j = np.unravel_index(np.argmax(dist), dist.shape)
    labels = {t.id: LayerLabel.BACKGROUND for t in ts.tracks}
    if dist[i, j] == 0.0:
        warnings.warn("all track velocities identical; labeling everything "
                      "background", RuntimeWarning, stacklevel=2)
        out = [replace(t, label=labels[t.id]) for t in ts.tracks]
        return TrackSet(tracks=out, frame_count=ts.frame_count)

    centroids = np.array([vel[i], vel[j]])
    assign = None
    for _ in range(100):
        d0 = np.hypot(*(vel - centroids[0]).T)
        d1 = np.hypot(*(vel - centroids[1]).T)
        new_assign = (d1 < d0).astype(int)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        if assign.min() == assign.max():
            break
        centroids = np.array([vel[assign == 0].mean(axis=0),
                              vel[assign == 1].mean(axis=0)])

    sizes = np.bincount(assign, minlength=2)
    if sizes.min() == 0:
        warnings.warn("velocity clustering collapsed to one cluster; labeling "
                      "everything background", RuntimeWarning, stacklevel=2)
        bg_cluster = int(sizes.argmax())
    elif sizes[0] != sizes[1]:
        bg_cluster = int(sizes.argmax())
    else:
        # tie: the cluster holding the smallest track id is called background
        first = min(range(len(eligible)), key=lambda idx: eligible[idx].id)
        bg_cluster = int(assign[first])
    for t, a in zip(eligible, assign):
        labels[t.id] = (LayerLabel.BACKGROUND if a == bg_cluster
                        else LayerLabel.REFLECTION)
    out = [replace(t, label=labels[t.id]) for t in ts.tracks]
    return TrackSet(tracks=out, frame_count=ts.frame_count)
