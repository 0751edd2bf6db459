"""
Labeling tracks from a single hint per layer
============================================

Two groups of tracks drift through the same footage. One seed on each
group is enough: labels spread along the affinity graph to every
unseeded track, weighted by how alike their motion and color are.
"""

import numpy as np

from reflectkit import FrameSequence, propagate_labels
from reflectkit.hints import build_affinity_graph
from reflectkit.tracking import LayerLabel, Track, TrackSet

rng = np.random.default_rng(5)
n_frames = 8


def drifting(tid, p0, v):
    p0, v = np.asarray(p0, float), np.asarray(v, float)
    return Track(id=tid, start_frame=0,
                 positions=np.array([p0 + v * t for t in range(n_frames)]))


# left pack moves right, right pack moves left
tracks = [drifting(i, (15.0 + 7 * i, 12.0 + 3 * (i % 3)), (3.0, 0.0))
          for i in range(6)]
tracks += [drifting(6 + i, (70.0 + 7 * i, 30.0 - 3 * (i % 3)), (-3.0, 0.0))
           for i in range(6)]
ts = TrackSet(tracks, n_frames)
seq = FrameSequence(np.full((n_frames, 48, 130), 0.5))

g = build_affinity_graph(ts, seq, 0)
within = [w for (a, b), w in g.weights.items() if (a < 6) == (b < 6)]
across = [w for (a, b), w in g.weights.items() if (a < 6) != (b < 6)]
print(f"affinity within a pack: {min(within):.3g} .. {max(within):.3g}")
print(f"affinity across packs: {max(across):.3g} at most")

# one hint per layer, nothing else
labeled = propagate_labels(ts, {0: LayerLabel.BACKGROUND,
                                6: LayerLabel.REFLECTION}, seq)
for t in labeled:
    marker = " <- seed" if t.id in (0, 6) else ""
    vx, vy = t.positions[1] - t.positions[0]
    print(f"track {t.id:2d}  v=({vx:+.0f},{vy:+.0f})  "
          f"{t.label.to_name()}{marker}")

assert all(t.label is LayerLabel.BACKGROUND for t in labeled if t.id < 6)
assert all(t.label is LayerLabel.REFLECTION for t in labeled if t.id >= 6)
