"""Frame sequences on disk and in memory.

Sequences are dense float64 arrays of shape (N, H, W, C) with intensities in
[0, 1] and C in {1, 3}. On construction every intensity is snapped to the
nearest multiple of 2**-30 (max perturbation ~4.7e-10, well below the 8-bit
quantum). The snap makes layer arithmetic exact: for grid values I and B,
R = I - B is computed without rounding, so B + R == I holds bitwise.
"""

from __future__ import annotations

import glob
import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DimensionMismatchError,
    InvalidArgumentError,
    IoFailureError,
    NoFilesMatchedError,
    UndecodableFileError,
)

_GRID = 2.0 ** 30

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def snap_to_grid(values: np.ndarray) -> np.ndarray:
    """Round intensities to the 2**-30 grid used by all sequences."""
    return np.round(np.asarray(values, dtype=np.float64) * _GRID) / _GRID


def snap_floor(values: np.ndarray) -> np.ndarray:
    """Round down to the grid; never exceeds the input."""
    return np.floor(np.asarray(values, dtype=np.float64) * _GRID) / _GRID


@dataclass
class Frame:
    """One frame: pixels (H, W, C) plus its index in the owning sequence."""

    pixels: np.ndarray
    timestamp_index: int

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


class FrameSequence:
    """Ordered stack of equally sized frames with shared channel count."""

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 3:
            data = data[..., np.newaxis]
        if data.ndim != 4:
            raise InvalidArgumentError(
                "sequence data must have shape (N, H, W) or (N, H, W, C)")
        n, h, w, c = data.shape
        if n < 1 or h < 1 or w < 1:
            raise InvalidArgumentError("sequence must contain at least one non-empty frame")
        if c not in (1, 3):
            raise InvalidArgumentError(f"channel count must be 1 or 3, got {c}")
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("intensities must be finite")
        if data.min() < -1e-9 or data.max() > 1 + 1e-9:
            raise InvalidArgumentError(
                f"intensities must lie in [0, 1], got range "
                f"[{data.min():.6g}, {data.max():.6g}]")
        data = snap_to_grid(np.clip(data, 0.0, 1.0))
        self.data = data

    @property
    def frame_count(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def __len__(self) -> int:
        return self.frame_count

    def frame(self, index: int) -> Frame:
        if not 0 <= index < self.frame_count:
            raise InvalidArgumentError(
                f"frame index {index} out of range [0, {self.frame_count})")
        return Frame(self.data[index], index)

    def __iter__(self):
        for i in range(self.frame_count):
            yield self.frame(i)

    def luma(self) -> np.ndarray:
        """Luma stack (N, H, W). For 1-channel input this is the data itself."""
        if self.channels == 1:
            return self.data[..., 0]
        w = np.array(LUMA_WEIGHTS)
        return snap_to_grid(np.clip(self.data @ w, 0.0, 1.0))

    def copy(self) -> "FrameSequence":
        return FrameSequence(self.data.copy())


def _numeric_key(path: str):
    stem = os.path.splitext(os.path.basename(path))[0]
    groups = re.findall(r"\d+", stem)
    index = int(groups[-1]) if groups else -1
    return (index, os.path.basename(path))


def load_sequence(path_pattern: str) -> FrameSequence:
    """Load PNG frames matching a glob pattern (or all PNGs in a directory).

    Frames are ordered by the last run of digits in each file name, 8-bit
    values are mapped to v/255. All frames must agree on size and channels.
    """
    if os.path.isdir(path_pattern):
        pattern = os.path.join(path_pattern, "*.png")
    else:
        pattern = path_pattern
    paths = sorted(glob.glob(pattern), key=_numeric_key)
    if not paths:
        raise NoFilesMatchedError(f"no frames matched {pattern!r}", pattern=pattern)

    planes = []
    shape = None
    for path in paths:
        try:
            with Image.open(path) as img:
                if img.mode in ("1", "L", "I", "I;16", "F", "LA"):
                    img = img.convert("L")
                elif img.mode != "RGB":
                    img = img.convert("RGB")
                arr = np.asarray(img, dtype=np.float64) / 255.0
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            raise UndecodableFileError(
                f"cannot decode {path!r}: {exc}", path=path) from exc
        if arr.ndim == 2:
            arr = arr[..., np.newaxis]
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise DimensionMismatchError(
                f"frame {path!r} has shape {arr.shape[1::-1]}x{arr.shape[2]}, "
                f"expected {shape[1::-1]}x{shape[2]}", path=path)
        planes.append(arr)
    return FrameSequence(np.stack(planes))


def save_sequence(seq: FrameSequence, directory: str, stem: str = "frame") -> list:
    """Write frames as ``<stem>_%04d.png``; returns the written paths."""
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise IoFailureError(f"cannot create {directory!r}: {exc}", path=directory) from exc
    bytes_ = np.clip(np.round(seq.data * 255.0), 0, 255).astype(np.uint8)
    paths = []
    for i in range(seq.frame_count):
        arr = bytes_[i]
        if seq.channels == 1:
            img = Image.fromarray(arr[..., 0], mode="L")
        else:
            img = Image.fromarray(arr, mode="RGB")
        path = os.path.join(directory, f"{stem}_{i:04d}.png")
        try:
            img.save(path)
        except OSError as exc:
            raise IoFailureError(f"cannot write {path!r}: {exc}", path=path) from exc
        paths.append(path)
    return paths


def to_luma(seq: FrameSequence) -> FrameSequence:
    """Collapse RGB to a single luma channel (0.299, 0.587, 0.114)."""
    if seq.channels == 1:
        return FrameSequence(seq.data.copy())
    return FrameSequence(seq.luma()[..., np.newaxis])
