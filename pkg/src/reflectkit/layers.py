"""Initial background/reflection decomposition.

Within each sliding window the member frames are warped onto the window's
first frame with the background homographies; the per-pixel minimum over the
aligned stack is the initial background (background intensity is a lower
envelope under additive reflections), the residual is the initial
reflection, and thresholding the temporal variability of gradient magnitude
on edges yields the binary layer map. The minimum is floor-quantized to the
intensity grid so background + reflection reproduces the input bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError
from .frames import LUMA_WEIGHTS, Frame, FrameSequence, snap_floor
from .imageops import canny, spatial_gradient, warp_homography
from .motion import WarpSet, WindowConfig
from .tracking import LayerLabel


@dataclass
class LayerInitConfig:
    edge_threshold: float = 0.08   # std of |grad| on [0,1] intensities
    canny_low: float = 0.1
    canny_high: float = 0.2
    canny_sigma: float = 1.4


@dataclass
class LayerDecomposition:
    background: FrameSequence
    reflection: FrameSequence
    layer_map: np.ndarray   # (N, H, W) uint8, 0 background / 1 reflection

    def __post_init__(self):
        self.layer_map = np.asarray(self.layer_map)
        b, r = self.background, self.reflection
        shape = (b.frame_count, b.height, b.width)
        if (r.frame_count, r.height, r.width) != shape or b.channels != r.channels:
            raise DimensionMismatchError("background/reflection shape mismatch")
        if self.layer_map.shape != shape:
            raise DimensionMismatchError(
                f"layer map shape {self.layer_map.shape} != {shape}")
        values = set(np.unique(self.layer_map))
        if not values <= {0, 1}:
            raise InvalidArgumentError("layer map must be binary")


def _window_members(warps: WarpSet, reference: int) -> range:
    length = warps.window.length
    last_start = warps.frame_count - length
    if reference <= last_start:
        return range(reference, reference + length)
    # tail frame: realign the last window's members onto it instead
    return range(last_start, last_start + length)


def _aligned_samples(seq: FrameSequence, warps: WarpSet, reference: int,
                     members) -> list:
    samples = []
    for i in members:
        if i == reference:
            frame = seq.frame(i)
            samples.append((frame, np.ones((seq.height, seq.width), dtype=bool)))
            continue
        h = warps.homography(reference, i, LayerLabel.BACKGROUND)
        warped, valid = warp_homography(seq.data[i], h)
        samples.append((Frame(pixels=warped, timestamp_index=i), valid))
    # reference first so downstream consumers can rely on a complete frame 0
    samples.sort(key=lambda s: s[0].timestamp_index != reference)
    return samples


def stabilize_window(seq: FrameSequence, warps: WarpSet, r: int,
                     cfg: WindowConfig | None = None) -> list:
    """Warp window frames onto the window's first frame (background motion).

    Returns [(Frame, validity mask)] with the reference frame first under an
    all-true mask.
    """
    if cfg is not None and (cfg.length != warps.window.length
                            or cfg.stride != warps.window.stride):
        raise InvalidArgumentError("window config disagrees with the warp set")
    length = warps.window.length
    if not 0 <= r <= seq.frame_count - length:
        raise InvalidArgumentError(
            f"window start {r} outside [0, {seq.frame_count - length}]")
    if warps.frame_count != seq.frame_count:
        raise InvalidArgumentError("warp set built for a different sequence")
    return _aligned_samples(seq, warps, r, range(r, r + length))


def min_filter_background(warped: list) -> Frame:
    """Per-pixel minimum over valid aligned samples.

    The first element must carry an all-true mask so every pixel has at
    least one contribution.
    """
    if not warped:
        raise InvalidArgumentError("no warped frames given")
    first, mask0 = warped[0]
    if not mask0.all():
        raise InvalidArgumentError("first sample must be fully valid")
    out = first.pixels.copy()
    for frame, mask in warped[1:]:
        if frame.pixels.shape != out.shape:
            raise DimensionMismatchError("warped frame shapes differ")
        out[mask] = np.minimum(out[mask], frame.pixels[mask])
    return Frame(pixels=out, timestamp_index=first.timestamp_index)


def residual_reflection(i_r: Frame, b_r: Frame) -> Frame:
    if i_r.pixels.shape != b_r.pixels.shape:
        raise DimensionMismatchError("frame shapes differ")
    return Frame(pixels=np.clip(i_r.pixels - b_r.pixels, 0.0, 1.0),
                 timestamp_index=i_r.timestamp_index)


def _sample_luma(frame: Frame) -> np.ndarray:
    if frame.pixels.shape[2] == 1:
        return frame.pixels[..., 0]
    return frame.pixels @ np.asarray(LUMA_WEIGHTS)


def _map_from_samples(reference_luma: np.ndarray, samples: list,
                      cfg: LayerInitConfig, edge_threshold: float) -> np.ndarray:
    edges = canny(reference_luma, cfg.canny_low, cfg.canny_high, cfg.canny_sigma)
    mags = []
    masks = []
    for frame, mask in samples:
        gx, gy = spatial_gradient(_sample_luma(frame))
        mags.append(np.hypot(gx, gy))
        masks.append(mask)
    mags = np.stack(mags)
    masks = np.stack(masks).astype(np.float64)
    count = masks.sum(axis=0)
    mean = (mags * masks).sum(axis=0) / count
    var = (((mags - mean) ** 2) * masks).sum(axis=0) / count
    std = np.sqrt(np.maximum(var, 0.0))
    out = np.ones_like(edges, dtype=np.uint8)
    out[edges & (std < edge_threshold)] = 0
    return out


def compute_layer_map(seq: FrameSequence, warps: WarpSet, r: int,
                      cfg: LayerInitConfig | None = None,
                      edge_threshold: float | None = None) -> np.ndarray:
    """Binary layer map for frame r: 0 where an edge is stable under
    background alignment, 1 on moving edges and everywhere off-edge."""
    cfg = cfg or LayerInitConfig()
    if edge_threshold is None:
        edge_threshold = cfg.edge_threshold
    if not 0 <= r < seq.frame_count:
        raise InvalidArgumentError(f"frame {r} out of range")
    samples = _aligned_samples(seq, warps, r, _window_members(warps, r))
    luma_r = _sample_luma(samples[0][0])
    return _map_from_samples(luma_r, samples, cfg, edge_threshold)


def initialize_layers(seq: FrameSequence, warps: WarpSet,
                      cfg: LayerInitConfig | None = None,
                      progress=None) -> LayerDecomposition:
    """Min-filter background, residual reflection, and layer map per frame.

    Every frame acts as the reference of its own window (trailing frames use
    the last window backwards), so all N frames are covered. The quantized
    minimum keeps background + reflection == input exact. ``progress``, if
    given, is called as progress(done, total) after each frame.
    """
    cfg = cfg or LayerInitConfig()
    if warps.frame_count != seq.frame_count:
        raise InvalidArgumentError("warp set built for a different sequence")
    n = seq.frame_count
    backgrounds = np.empty_like(seq.data)
    reflections = np.empty_like(seq.data)
    layer_map = np.empty((n, seq.height, seq.width), dtype=np.uint8)
    for r in range(n):
        samples = _aligned_samples(seq, warps, r, _window_members(warps, r))
        b_min = min_filter_background(samples)
        b_q = snap_floor(b_min.pixels)
        backgrounds[r] = b_q
        reflections[r] = seq.data[r] - b_q
        layer_map[r] = _map_from_samples(_sample_luma(samples[0][0]), samples,
                                         cfg, cfg.edge_threshold)
        if progress is not None:
            progress(r + 1, n)
    assert np.array_equal(backgrounds + reflections, seq.data), \
        "decomposition must reproduce the input exactly"
    return LayerDecomposition(background=FrameSequence(backgrounds),
                              reflection=FrameSequence(reflections),
                              layer_map=layer_map)
