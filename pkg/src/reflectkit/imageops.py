"""Single-plane image kernels shared by tracking, warping and the optimizer.

All functions take 2-D float arrays (one channel); multi-channel callers loop
or broadcast. The bilinear sample/scatter pair is an exact transpose, which
the energy gradients rely on.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import (
    InvalidArgumentError,
    InvalidThresholdsError,
    SingularHomographyError,
    TooManyLevelsError,
)

# Coordinates this close to an integer are snapped before interpolation, so
# integral translations reproduce pixel values bitwise.
_SNAP = 1e-9


def spatial_gradient(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(gx, gy) via central differences, one-sided at the borders."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or min(plane.shape) < 2:
        raise InvalidArgumentError("gradient needs a 2-D plane of size >= 2x2")
    gy, gx = np.gradient(plane)
    return gx, gy


def spatial_gradient_adjoint(ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
    """Exact transpose of :func:`spatial_gradient` (for energy gradients)."""

    def adj_1d(u: np.ndarray, axis: int) -> np.ndarray:
        u = np.moveaxis(u, axis, 0)
        out = np.zeros_like(u)
        out[0] -= u[0]
        out[1] += u[0]
        out[-1] += u[-1]
        out[-2] -= u[-1]
        if u.shape[0] > 2:
            out[2:] += 0.5 * u[1:-1]
            out[:-2] -= 0.5 * u[1:-1]
        return np.moveaxis(out, 0, axis)

    return adj_1d(np.asarray(ux, dtype=np.float64), 1) + \
        adj_1d(np.asarray(uy, dtype=np.float64), 0)


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Sample img at float coordinates; returns (values, in_bounds_mask).

    Out-of-bounds coordinates are clamped (nearest pixel) so callers that
    tolerate border bleed can still use the values; the mask tells which
    samples came entirely from inside [0, W-1] x [0, H-1].
    """
    img = np.asarray(img, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    h, w = img.shape[:2]

    xr = np.round(xs)
    xs = np.where(np.abs(xs - xr) < _SNAP, xr, xs)
    yr = np.round(ys)
    ys = np.where(np.abs(ys - yr) < _SNAP, yr, ys)

    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)

    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = np.clip(x0.astype(np.int64), 0, w - 1)
    y0 = np.clip(y0.astype(np.int64), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)

    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    if img.ndim == 3:
        w00, w10, w01, w11 = (w[..., None] for w in (w00, w10, w01, w11))
    values = (w00 * img[y0, x0] + w10 * img[y0, x1] +
              w01 * img[y1, x0] + w11 * img[y1, x1])
    return values, valid


def bilinear_scatter(values: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                     shape: tuple[int, int]) -> np.ndarray:
    """Exact adjoint of :func:`bilinear_sample` for a single-channel plane.

    Out-of-bounds samples contribute nothing (they must be masked out of
    ``values`` by the caller, matching how the forward result is used).
    """
    h, w = shape
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()

    xr = np.round(xs)
    xs = np.where(np.abs(xs - xr) < _SNAP, xr, xs)
    yr = np.round(ys)
    ys = np.where(np.abs(ys - yr) < _SNAP, yr, ys)

    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    values = np.where(valid, values, 0.0)

    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = np.clip(x0.astype(np.int64), 0, w - 1)
    y0 = np.clip(y0.astype(np.int64), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)

    out = np.zeros(h * w)
    for wgt, yy, xx in (((1 - fx) * (1 - fy), y0, x0),
                        (fx * (1 - fy), y0, x1),
                        ((1 - fx) * fy, y1, x0),
                        (fx * fy, y1, x1)):
        out += np.bincount(yy * w + xx, weights=wgt * values, minlength=h * w)
    return out.reshape(h, w)


def _as_matrix(h) -> np.ndarray:
    m = np.asarray(getattr(h, "m", h), dtype=np.float64)
    if m.shape != (3, 3):
        raise InvalidArgumentError("homography must be a 3x3 matrix")
    return m


def homography_source_coords(h, shape: tuple[int, int]
                             ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-output-pixel source coordinates for warping content by H.

    Returns (sx, sy, finite): where output pixel p should sample, i.e.
    H^-1 @ p, with non-finite projections flagged and parked at -1.
    """
    m = _as_matrix(h)
    if abs(np.linalg.det(m)) <= 1e-12:
        raise SingularHomographyError("homography is singular")
    hh, ww = shape
    inv = np.linalg.inv(m)
    ys, xs = np.mgrid[0:hh, 0:ww]
    ones = np.ones_like(xs, dtype=np.float64)
    coords = np.stack([xs.astype(np.float64), ys.astype(np.float64), ones])
    src = np.tensordot(inv, coords, axes=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = src[0] / src[2]
        sy = src[1] / src[2]
    finite = np.isfinite(sx) & np.isfinite(sy)
    sx = np.where(finite, sx, -1.0)
    sy = np.where(finite, sy, -1.0)
    return sx, sy, finite


def warp_homography(plane: np.ndarray, h) -> tuple[np.ndarray, np.ndarray]:
    """Warp a plane so content at p lands at H @ p (inverse-mapped bilinear).

    Accepts (H, W) or (H, W, C) arrays and a 3x3 matrix or any object with an
    ``m`` attribute. Returns (warped, validity) where validity marks output
    pixels whose source sample fell inside the input bounds. Invalid pixels
    hold clamped border values and must not be trusted.
    """
    plane = np.asarray(plane, dtype=np.float64)
    sx, sy, finite = homography_source_coords(h, plane.shape[:2])
    values, valid = bilinear_sample(plane, sx, sy)
    return values, valid & finite


def canny(plane: np.ndarray, low: float = 0.1, high: float = 0.2,
          sigma: float = 1.4) -> np.ndarray:
    """Boolean edge map: Gaussian blur, Sobel, NMS, hysteresis linking.

    Thresholds apply to the gradient magnitude in intensity units per pixel
    (Sobel responses are scaled to unit derivative gain), so they live on the
    same [0, 1] scale as the image.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise InvalidArgumentError("canny expects a single 2-D plane")
    if not (0.0 <= low <= high <= 1.0):
        raise InvalidThresholdsError(
            f"thresholds must satisfy 0 <= low <= high <= 1, got ({low}, {high})")

    smoothed = ndimage.gaussian_filter(plane, sigma, mode="nearest")
    gx = ndimage.sobel(smoothed, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(smoothed, axis=0, mode="nearest") / 8.0
    mag = np.hypot(gx, gy)

    # Non-maximum suppression with the gradient direction quantized to 4 bins.
    angle = (np.rad2deg(np.arctan2(gy, gx)) + 180.0) % 180.0
    padded = np.pad(mag, 1, mode="constant")
    east = padded[1:-1, 2:]
    west = padded[1:-1, :-2]
    north = padded[:-2, 1:-1]
    south = padded[2:, 1:-1]
    ne = padded[:-2, 2:]
    sw = padded[2:, :-2]
    nw = padded[:-2, :-2]
    se = padded[2:, 2:]

    n1 = np.where((angle < 22.5) | (angle >= 157.5), east,
                  np.where(angle < 67.5, se,
                           np.where(angle < 112.5, south, sw)))
    n2 = np.where((angle < 22.5) | (angle >= 157.5), west,
                  np.where(angle < 67.5, nw,
                           np.where(angle < 112.5, north, ne)))
    ridge = (mag >= n1) & (mag >= n2)

    weak = ridge & (mag >= low)
    strong = ridge & (mag >= high)
    if not strong.any():
        return np.zeros_like(weak)
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.zeros(count + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def gaussian_pyramid(plane: np.ndarray, levels: int) -> list:
    """Level 0 is the input; each further level blurs (sigma=1) and halves."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise InvalidArgumentError("pyramid expects a single 2-D plane")
    if levels < 1:
        raise InvalidArgumentError("levels must be >= 1")
    if min(plane.shape) / 2 ** (levels - 1) < 8:
        raise TooManyLevelsError(
            f"{levels} levels would shrink {plane.shape[1]}x{plane.shape[0]} "
            f"below 8 px", levels=levels)
    out = [plane]
    for _ in range(levels - 1):
        blurred = ndimage.gaussian_filter(out[-1], 1.0, mode="nearest")
        out.append(blurred[::2, ::2])
    return out
