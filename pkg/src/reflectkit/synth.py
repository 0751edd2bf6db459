"""Synthetic two-layer sequences with known ground truth, and SSIM scoring.

A bundle is built by translating two textured base images with independent
velocities and mixing them as alpha*V1 + (1-alpha)*V2. The alpha-weighted
stream is the background. Ownership masks mark edge pixels that belong to
exactly one layer, which is what seed generation and scoring need.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage, signal

from .errors import (BaseTooSmallError, DimensionMismatchError,
                     FrameSmallerThanWindowError, InvalidArgumentError,
                     IoFailureError)
from .frames import (Frame, FrameSequence, load_sequence, save_sequence,
                     snap_floor)
from .hints import ScribbleSet, Stroke
from .imageops import bilinear_sample, canny
from .layers import LayerDecomposition
from .tracking import LayerLabel


@dataclass
class BlendConfig:
    alpha: float = 0.8
    v_background: tuple = (3.0, 0.0)
    v_reflection: tuple = (-3.0, 0.0)
    frame_count: int = 30
    dimensions: tuple = (128, 128)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError(
                f"alpha must lie in [0, 1], got {self.alpha}")
        if self.frame_count < 1:
            raise InvalidArgumentError("frame_count must be >= 1")
        w, h = self.dimensions
        if w < 1 or h < 1:
            raise InvalidArgumentError("dimensions must be positive")
        self.v_background = tuple(float(v) for v in self.v_background)
        self.v_reflection = tuple(float(v) for v in self.v_reflection)
        self.dimensions = (int(w), int(h))

    def to_json(self) -> dict:
        return {"alpha": self.alpha,
                "v_background": list(self.v_background),
                "v_reflection": list(self.v_reflection),
                "frame_count": self.frame_count,
                "dimensions": list(self.dimensions)}

    @classmethod
    def from_json(cls, payload: dict) -> "BlendConfig":
        try:
            return cls(alpha=float(payload["alpha"]),
                       v_background=tuple(payload["v_background"]),
                       v_reflection=tuple(payload["v_reflection"]),
                       frame_count=int(payload["frame_count"]),
                       dimensions=tuple(payload["dimensions"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed blend config: {exc}") from exc

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path: str) -> "BlendConfig":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read blend config: {exc}") from exc
        return cls.from_json(payload)


@dataclass
class GroundTruthBundle:
    mixed: FrameSequence
    gt_background: FrameSequence
    gt_reflection: FrameSequence
    gt_labels: np.ndarray
    config: BlendConfig

    def __post_init__(self):
        shapes = {self.mixed.data.shape, self.gt_background.data.shape,
                  self.gt_reflection.data.shape}
        if len(shapes) != 1:
            raise DimensionMismatchError(
                "mixed and ground-truth sequences must share dimensions")
        self.gt_labels = np.asarray(self.gt_labels, dtype=np.uint8)
        if self.gt_labels.shape != self.mixed.data.shape[:3]:
            raise DimensionMismatchError(
                f"ownership masks {self.gt_labels.shape} do not match frames "
                f"{self.mixed.data.shape[:3]}")
        if not np.isin(self.gt_labels, (0, 1, 2)).all():
            raise InvalidArgumentError("ownership masks must hold 0, 1 or 2")
        a = self.config.alpha
        recomposed = (a * self.gt_background.data
                      + (1.0 - a) * self.gt_reflection.data)
        # in-memory bundles are exact to the intensity grid; bundles reloaded
        # from 8-bit frame files are exact to one quantization step
        if np.abs(self.mixed.data - recomposed).max() > 2.0 / 255.0:
            raise InvalidArgumentError(
                "mixed frames are not the weighted sum of the layers")


def scaled_contributions(bundle: GroundTruthBundle
                         ) -> tuple[FrameSequence, FrameSequence]:
    """The two streams as they appear inside the mixed video.

    Background is floor-quantized so that background + reflection equals the
    mixed sequence bitwise, mirroring how decompositions are constructed.
    """
    b = snap_floor(bundle.config.alpha * bundle.gt_background.data)
    r = bundle.mixed.data - b
    return FrameSequence(b), FrameSequence(r)


def _as_plane(base) -> np.ndarray:
    pixels = base.pixels if isinstance(base, Frame) else np.asarray(base)
    pixels = pixels.astype(np.float64)
    if pixels.ndim == 2:
        pixels = pixels[..., np.newaxis]
    if pixels.ndim != 3:
        raise InvalidArgumentError("base image must be (H, W) or (H, W, C)")
    return pixels


def make_translating_sequence(base, v: tuple, n: int,
                              dims: tuple) -> FrameSequence:
    """n crops of base whose content moves by +v px per frame.

    dims is (W, H). The first crop starts at the end of the base that leaves
    room for the whole sweep, so a positive velocity needs margin on the
    right/bottom and a negative one on the left/top.
    """
    pixels = _as_plane(base)
    vx, vy = float(v[0]), float(v[1])
    w, h = int(dims[0]), int(dims[1])
    bh, bw, _ = pixels.shape
    need_w = w + int(np.ceil(n * abs(vx)))
    need_h = h + int(np.ceil(n * abs(vy)))
    if bw < need_w or bh < need_h:
        raise BaseTooSmallError(
            f"base {bw}x{bh} cannot hold {n} crops of {w}x{h} moving "
            f"({vx}, {vy}) px/frame; needs at least {need_w}x{need_h}",
            required=(need_w, need_h))

    ox0 = bw - w if vx > 0 else 0
    oy0 = bh - h if vy > 0 else 0
    integral = float(vx).is_integer() and float(vy).is_integer()
    frames = []
    for t in range(n):
        ox = ox0 - t * vx
        oy = oy0 - t * vy
        if integral:
            ix, iy = int(round(ox)), int(round(oy))
            frames.append(pixels[iy:iy + h, ix:ix + w])
        else:
            ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
            values, _ = bilinear_sample(pixels, xs + ox, ys + oy)
            frames.append(values)
    return FrameSequence(np.stack(frames))


def blend(v1: FrameSequence, v2: FrameSequence, alpha: float) -> FrameSequence:
    """Per-pixel alpha*v1 + (1-alpha)*v2; v1 is the background stream."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1], got {alpha}")
    if v1.data.shape != v2.data.shape:
        raise DimensionMismatchError(
            f"cannot blend {v1.data.shape} with {v2.data.shape}")
    return FrameSequence(alpha * v1.data + (1.0 - alpha) * v2.data)


# SSIM ------------------------------------------------------------------------

_SSIM_SIDE = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


def _ssim_kernel() -> np.ndarray:
    half = _SSIM_SIDE // 2
    ys, xs = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    k = np.exp(-(xs * xs + ys * ys) / (2.0 * _SSIM_SIGMA ** 2))
    return k / k.sum()


_KERNEL = _ssim_kernel()


def _ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    def f(img):
        return signal.convolve2d(img, _KERNEL, mode="valid")

    mu_x = f(x)
    mu_y = f(y)
    var_x = f(x * x) - mu_x * mu_x
    var_y = f(y * y) - mu_y * mu_y
    cov = f(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """Mean structural similarity over 11x11 Gaussian windows (sigma 1.5).

    Windows are fully interior (no padding); RGB inputs average the
    per-channel scores. 1.0 means the frames are identical.
    """
    pa = _as_plane(a)
    pb = _as_plane(b)
    if pa.shape != pb.shape:
        raise DimensionMismatchError(
            f"cannot compare {pa.shape} with {pb.shape}")
    h, w, c = pa.shape
    if h < _SSIM_SIDE or w < _SSIM_SIDE:
        raise FrameSmallerThanWindowError(
            f"frames must be at least {_SSIM_SIDE}x{_SSIM_SIDE}, got {w}x{h}")
    return float(np.mean([_ssim_plane(pa[..., ch], pb[..., ch])
                          for ch in range(c)]))


# scoring ----------------------------------------------------------------------

@dataclass
class EvaluationResult:
    ssim_background: np.ndarray
    ssim_reflection: np.ndarray
    ssim_baseline: np.ndarray

    @property
    def frame_count(self) -> int:
        return len(self.ssim_background)

    @property
    def mean_background(self) -> float:
        return float(np.mean(self.ssim_background))

    @property
    def mean_reflection(self) -> float:
        return float(np.mean(self.ssim_reflection))

    @property
    def mean_baseline(self) -> float:
        return float(np.mean(self.ssim_baseline))

    @property
    def wins(self) -> int:
        """Frames where the recovered background beats the raw input."""
        return int(np.sum(self.ssim_background > self.ssim_baseline))

    def write_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("frame,ssim_b,ssim_r,ssim_input_baseline\n")
            for t in range(self.frame_count):
                fh.write(f"{t},{float(self.ssim_background[t])!r},"
                         f"{float(self.ssim_reflection[t])!r},"
                         f"{float(self.ssim_baseline[t])!r}\n")


def evaluate(dec: LayerDecomposition, gt: GroundTruthBundle) -> EvaluationResult:
    """Per-frame SSIM of each recovered layer against its compositing
    contribution, next to the do-nothing baseline SSIM(mixed, background)."""
    if dec.background.data.shape != gt.mixed.data.shape:
        raise DimensionMismatchError(
            f"decomposition {dec.background.data.shape} does not match "
            f"ground truth {gt.mixed.data.shape}")
    b_gt, r_gt = scaled_contributions(gt)
    n = gt.mixed.frame_count
    curves = np.empty((n, 3))
    for t in range(n):
        curves[t, 0] = ssim(dec.background.data[t], b_gt.data[t])
        curves[t, 1] = ssim(dec.reflection.data[t], r_gt.data[t])
        curves[t, 2] = ssim(gt.mixed.data[t], b_gt.data[t])
    return EvaluationResult(ssim_background=curves[:, 0],
                            ssim_reflection=curves[:, 1],
                            ssim_baseline=curves[:, 2])


# bundle construction -----------------------------------------------------------

def ownership_labels(v1: FrameSequence, v2: FrameSequence,
                     low: float = 0.05, high: float = 0.15,
                     sigma: float = 1.0) -> np.ndarray:
    """Per-frame masks: 1 where only the background has an edge, 2 where only
    the reflection does, 0 elsewhere (including contested pixels).

    Edges are found on the unscaled layers so the labeling does not depend on
    the mixing weight.
    """
    l1 = v1.luma()
    l2 = v2.luma()
    out = np.zeros(l1.shape, dtype=np.uint8)
    for t in range(l1.shape[0]):
        e1 = canny(l1[t], low, high, sigma)
        e2 = canny(l2[t], low, high, sigma)
        out[t][e1 & ~e2] = LayerLabel.BACKGROUND
        out[t][e2 & ~e1] = LayerLabel.REFLECTION
    return out


def make_bundle(base_background, base_reflection,
                config: BlendConfig | None = None) -> GroundTruthBundle:
    config = config or BlendConfig()
    v1 = make_translating_sequence(base_background, config.v_background,
                                   config.frame_count, config.dimensions)
    v2 = make_translating_sequence(base_reflection, config.v_reflection,
                                   config.frame_count, config.dimensions)
    return GroundTruthBundle(mixed=blend(v1, v2, config.alpha),
                             gt_background=v1, gt_reflection=v2,
                             gt_labels=ownership_labels(v1, v2),
                             config=config)


def default_bases(config: BlendConfig | None = None, seed: int = 0,
                  cell: int = 16, blob_count: int = 6
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic textured bases: a random-gray checker background and a
    dark reflection plate with bright blobs, both sized for the sweep."""
    config = config or BlendConfig()
    w, h = config.dimensions
    n = config.frame_count

    def base_size(v):
        return (h + int(np.ceil(n * abs(v[1]))),
                w + int(np.ceil(n * abs(v[0]))))

    gen = np.random.default_rng(seed)
    bh, bw = base_size(config.v_background)
    cells = gen.uniform(0.15, 0.95, ((bh + cell - 1) // cell,
                                     (bw + cell - 1) // cell))
    background = np.kron(cells, np.ones((cell, cell)))[:bh, :bw]

    # hard-edged disks: soft blobs have gradients too weak for any edge
    # detector to assign ownership
    rh, rw = base_size(config.v_reflection)
    reflection = np.full((rh, rw), 0.05)
    ys, xs = np.mgrid[0:rh, 0:rw].astype(np.float64)
    for _ in range(blob_count):
        cx = gen.uniform(0.1 * rw, 0.9 * rw)
        cy = gen.uniform(0.1 * rh, 0.9 * rh)
        radius = gen.uniform(6.0, 12.0)
        amp = gen.uniform(0.5, 0.9)
        dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
        disk = amp * np.clip(radius - dist, 0.0, 1.0)
        reflection = np.maximum(reflection, 0.05 + disk)
    return background, np.clip(reflection, 0.0, 1.0)


def default_bundle(config: BlendConfig | None = None,
                   seed: int = 0) -> GroundTruthBundle:
    config = config or BlendConfig()
    bg, rf = default_bases(config, seed)
    return make_bundle(bg, rf, config)


def auto_scribbles(bundle: GroundTruthBundle, frame_index: int,
                   reflection_radius: float = 1.5,
                   background_radius: float = 5.0,
                   background_margin: float = 16.0,
                   background_stride: int = 24) -> "ScribbleSet":
    """Seed scribbles derived from the ownership masks of one frame.

    Reflection seeds are point strokes on reflection-owned edge pixels;
    background seeds are a sparse grid of point strokes kept at least
    background_margin px away from any reflection-owned pixel.
    """
    if not 0 <= frame_index < bundle.mixed.frame_count:
        raise InvalidArgumentError(
            f"frame {frame_index} out of range [0, {bundle.mixed.frame_count})")
    labels = bundle.gt_labels[frame_index]
    refl = labels == LayerLabel.REFLECTION
    if not refl.any():
        raise InvalidArgumentError(
            f"frame {frame_index} has no reflection-owned pixels to seed from")

    strokes = []
    ys, xs = np.nonzero(refl)
    for y, x in zip(ys, xs):
        strokes.append(Stroke(label=LayerLabel.REFLECTION,
                              radius=reflection_radius,
                              points=np.array([[float(x), float(y)]])))

    clearance = ndimage.distance_transform_edt(~refl)
    h, w = labels.shape
    placed = 0
    for y in range(background_stride // 2, h, background_stride):
        for x in range(background_stride // 2, w, background_stride):
            if clearance[y, x] >= background_margin:
                strokes.append(Stroke(label=LayerLabel.BACKGROUND,
                                      radius=background_radius,
                                      points=np.array([[float(x), float(y)]])))
                placed += 1
    if placed == 0:
        raise InvalidArgumentError(
            f"frame {frame_index} has no clear background area "
            f">= {background_margin} px from reflection pixels")
    return ScribbleSet(frame_index=frame_index, strokes=strokes)


# bundle I/O --------------------------------------------------------------------

def save_bundle(bundle: GroundTruthBundle, directory: str) -> None:
    """Write mixed/, gt_background/, gt_reflection/, gt_labels/, config.json."""
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise IoFailureError(f"cannot create {directory!r}: {exc}",
                             path=directory) from exc
    save_sequence(bundle.mixed, os.path.join(directory, "mixed"))
    save_sequence(bundle.gt_background, os.path.join(directory, "gt_background"))
    save_sequence(bundle.gt_reflection, os.path.join(directory, "gt_reflection"))
    labels_dir = os.path.join(directory, "gt_labels")
    os.makedirs(labels_dir, exist_ok=True)
    for t in range(bundle.gt_labels.shape[0]):
        img = Image.fromarray(bundle.gt_labels[t], mode="L")
        img.save(os.path.join(labels_dir, f"frame_{t:04d}.png"))
    bundle.config.save(os.path.join(directory, "config.json"))


def load_bundle(directory: str) -> GroundTruthBundle:
    config = BlendConfig.load(os.path.join(directory, "config.json"))
    mixed = load_sequence(os.path.join(directory, "mixed"))
    gt_b = load_sequence(os.path.join(directory, "gt_background"))
    gt_r = load_sequence(os.path.join(directory, "gt_reflection"))
    labels_dir = os.path.join(directory, "gt_labels")
    if os.path.isdir(labels_dir):
        paths = sorted(os.listdir(labels_dir))
        planes = [np.asarray(Image.open(os.path.join(labels_dir, p)))
                  for p in paths if p.endswith(".png")]
        labels = np.stack(planes).astype(np.uint8)
    else:
        labels = np.zeros(mixed.data.shape[:3], np.uint8)
    return GroundTruthBundle(mixed=mixed, gt_background=gt_b,
                             gt_reflection=gt_r, gt_labels=labels,
                             config=config)
