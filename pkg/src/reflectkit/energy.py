"""Energy refinement of a layer decomposition.

The objective is E = lambda_d*Ed + lambda_l*El + lambda_s*Es over both layer
stacks jointly: Ed aligns each layer with its motion-warped neighbors, El
charges background gradients on edges the layer map assigns to the
reflection (and vice versa), Es penalizes first-order gradients everywhere.
L1 norms are smoothed as sqrt(x^2 + eps^2) - eps so plain projected gradient
descent with a backtracking line search applies; every accepted step is
non-increasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergedError, InvalidArgumentError
from .frames import FrameSequence
from .imageops import (
    bilinear_sample,
    bilinear_scatter,
    canny,
    homography_source_coords,
    spatial_gradient,
    spatial_gradient_adjoint,
)
from .layers import LayerDecomposition
from .motion import WarpSet
from .tracking import LayerLabel


@dataclass
class EnergyWeights:
    lambda_d: float = 2.0
    lambda_l: float = 2.0
    lambda_s: float = 1.0

    def __post_init__(self):
        if min(self.lambda_d, self.lambda_l, self.lambda_s) < 0:
            raise InvalidArgumentError("energy weights must be >= 0")


@dataclass
class OptimizerConfig:
    max_iters: int = 60
    step_size: float = 0.5
    huber_eps: float = 1e-3
    pair_radius: int = 9
    enforce_composition: bool = True
    tol: float = 1e-6

    def __post_init__(self):
        if self.huber_eps <= 0:
            raise InvalidArgumentError("huber_eps must be > 0")
        if self.pair_radius < 1:
            raise InvalidArgumentError("pair_radius must be >= 1")
        if self.step_size <= 0:
            raise InvalidArgumentError("step_size must be > 0")


def _huber(x: np.ndarray, eps: float) -> np.ndarray:
    return np.sqrt(x * x + eps * eps) - eps


def _huber_prime(x: np.ndarray, eps: float) -> np.ndarray:
    return x / np.sqrt(x * x + eps * eps)


def edge_maps(seq: FrameSequence, low: float = 0.1, high: float = 0.2,
              sigma: float = 1.4) -> np.ndarray:
    """Per-frame Canny edge indicators of the input sequence, (N, H, W)."""
    lumas = seq.luma()
    return np.stack([canny(lumas[t], low, high, sigma)
                     for t in range(seq.frame_count)])


def _chain_homography(warps: WarpSet, t: int, rho: int, layer: LayerLabel):
    """H mapping frame rho coordinates into frame t, hopping across windows
    when the pair spans more than one."""
    span = warps.window.length - 1
    if abs(t - rho) <= span:
        return warps.homography(t, rho, layer)
    step = span if rho > t else -span
    mid = rho - step
    return _chain_homography(warps, t, mid, layer).compose(
        warps.homography(mid, rho, layer))


def _frame_pairs(n: int, radius: int) -> list:
    return [(t, rho) for t in range(n)
            for rho in range(t + 1, min(t + radius, n - 1) + 1)]


class _PairGeometry:
    """Source coordinates for warping frame rho onto frame t, cached."""

    def __init__(self, warps: WarpSet, pairs: list, shape: tuple):
        self.entries = {}
        for t, rho in pairs:
            coords = {}
            for layer in (LayerLabel.BACKGROUND, LayerLabel.REFLECTION):
                h = _chain_homography(warps, t, rho, layer)
                sx, sy, finite = homography_source_coords(h, shape)
                hh, ww = shape
                inside = (finite & (sx >= 0) & (sx <= ww - 1)
                          & (sy >= 0) & (sy <= hh - 1))
                coords[layer] = (sx, sy, inside, int(inside.sum()))
            self.entries[(t, rho)] = coords


def _pair_residual_energy(stack: np.ndarray, t: int, rho: int,
                          geo, eps: float) -> float:
    sx, sy, inside, count = geo
    if count == 0:
        return 0.0
    warped, _ = bilinear_sample(stack[rho], sx, sy)
    resid = (stack[t] - warped)[inside]
    return float(_huber(resid, eps).sum()) / (count * stack.shape[3])


def _data_components(b: np.ndarray, r: np.ndarray, geom: _PairGeometry,
                     eps: float) -> float:
    total = 0.0
    for (t, rho), coords in geom.entries.items():
        total += _pair_residual_energy(b, t, rho,
                                       coords[LayerLabel.BACKGROUND], eps)
        total += _pair_residual_energy(r, t, rho,
                                       coords[LayerLabel.REFLECTION], eps)
    return total


def _data_gradient(b: np.ndarray, r: np.ndarray, geom: _PairGeometry,
                   eps: float) -> tuple[np.ndarray, np.ndarray]:
    gb = np.zeros_like(b)
    gr = np.zeros_like(r)
    shape = b.shape[1:3]
    for (t, rho), coords in geom.entries.items():
        for stack, grad, layer in ((b, gb, LayerLabel.BACKGROUND),
                                   (r, gr, LayerLabel.REFLECTION)):
            sx, sy, inside, count = coords[layer]
            if count == 0:
                continue
            warped, _ = bilinear_sample(stack[rho], sx, sy)
            resid = stack[t] - warped
            scale = 1.0 / (count * stack.shape[3])
            dphi = _huber_prime(resid, eps) * inside[..., None] * scale
            grad[t] += dphi
            for ch in range(stack.shape[3]):
                grad[rho, :, :, ch] -= bilinear_scatter(
                    dphi[..., ch][inside], sx[inside], sy[inside], shape)
    return gb, gr


def _gradient_prior_energy(stack: np.ndarray, weight: np.ndarray,
                           eps: float) -> float:
    total = 0.0
    for t in range(stack.shape[0]):
        for ch in range(stack.shape[3]):
            gx, gy = spatial_gradient(stack[t, :, :, ch])
            mag = np.sqrt(gx * gx + gy * gy + eps * eps) - eps
            total += float((weight[t] * mag).sum())
    return total / stack[..., 0].size / stack.shape[3]


def _gradient_prior_gradient(stack: np.ndarray, weight: np.ndarray,
                             eps: float) -> np.ndarray:
    out = np.zeros_like(stack)
    norm = 1.0 / (stack[..., 0].size * stack.shape[3])
    for t in range(stack.shape[0]):
        for ch in range(stack.shape[3]):
            gx, gy = spatial_gradient(stack[t, :, :, ch])
            s = np.sqrt(gx * gx + gy * gy + eps * eps)
            out[t, :, :, ch] = spatial_gradient_adjoint(
                weight[t] * gx / s, weight[t] * gy / s) * norm
    return out


def data_term(dec: LayerDecomposition, warps: WarpSet,
              cfg: OptimizerConfig | None = None) -> float:
    """Mean smoothed-L1 alignment error of each layer against its warped
    neighbors, summed over unordered frame pairs within pair_radius."""
    cfg = cfg or OptimizerConfig()
    b, r = dec.background.data, dec.reflection.data
    pairs = _frame_pairs(b.shape[0], cfg.pair_radius)
    geom = _PairGeometry(warps, pairs, b.shape[1:3])
    return _data_components(b, r, geom, cfg.huber_eps)


def layer_prior_term(dec: LayerDecomposition, edges: np.ndarray,
                     cfg: OptimizerConfig | None = None) -> float:
    """Edge pixels owned by the background (M=0) may carry background
    gradient; reflection-owned edges (M=1) may carry reflection gradient.
    The crossed combinations are charged."""
    cfg = cfg or OptimizerConfig()
    edges = np.asarray(edges, dtype=np.float64)
    m = dec.layer_map.astype(np.float64)
    return (_gradient_prior_energy(dec.background.data, m * edges, cfg.huber_eps)
            + _gradient_prior_energy(dec.reflection.data, (1.0 - m) * edges,
                                     cfg.huber_eps))


def smoothness_term(dec: LayerDecomposition,
                    cfg: OptimizerConfig | None = None) -> float:
    cfg = cfg or OptimizerConfig()
    ones = np.ones(dec.layer_map.shape, dtype=np.float64)
    return (_gradient_prior_energy(dec.background.data, ones, cfg.huber_eps)
            + _gradient_prior_energy(dec.reflection.data, ones, cfg.huber_eps))


def total_energy(dec: LayerDecomposition, warps: WarpSet, edges: np.ndarray,
                 w: EnergyWeights, cfg: OptimizerConfig | None = None) -> float:
    cfg = cfg or OptimizerConfig()
    total = 0.0
    if w.lambda_d != 0.0:
        total += w.lambda_d * data_term(dec, warps, cfg)
    if w.lambda_l != 0.0:
        total += w.lambda_l * layer_prior_term(dec, edges, cfg)
    if w.lambda_s != 0.0:
        total += w.lambda_s * smoothness_term(dec, cfg)
    return total


def energy_gradient(dec: LayerDecomposition, warps: WarpSet,
                    edges: np.ndarray, w: EnergyWeights | None = None,
                    cfg: OptimizerConfig | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the total energy wrt (background, reflection)."""
    w = w or EnergyWeights()
    cfg = cfg or OptimizerConfig()
    b, r = dec.background.data, dec.reflection.data
    obj = _Objective(b.shape, warps, edges, dec.layer_map, w, cfg)
    return obj.gradient(b, r)


class _Objective:
    """Joint energy/gradient evaluation with cached pair geometry.

    Terms whose weight is zero are never evaluated, so their inputs cannot
    influence the result in any way.
    """

    def __init__(self, shape, warps, edges, layer_map, w: EnergyWeights,
                 cfg: OptimizerConfig):
        self.w = w
        self.cfg = cfg
        self.geom = None
        if w.lambda_d != 0.0:
            pairs = _frame_pairs(shape[0], cfg.pair_radius)
            self.geom = _PairGeometry(warps, pairs, shape[1:3])
        self.edge_weight_b = None
        self.edge_weight_r = None
        if w.lambda_l != 0.0:
            e = np.asarray(edges, dtype=np.float64)
            m = layer_map.astype(np.float64)
            self.edge_weight_b = m * e
            self.edge_weight_r = (1.0 - m) * e
        self.ones = np.ones(shape[:3], dtype=np.float64)

    def components(self, b, r):
        eps = self.cfg.huber_eps
        ed = el = es = 0.0
        if self.w.lambda_d != 0.0:
            ed = _data_components(b, r, self.geom, eps)
        if self.w.lambda_l != 0.0:
            el = (_gradient_prior_energy(b, self.edge_weight_b, eps)
                  + _gradient_prior_energy(r, self.edge_weight_r, eps))
        if self.w.lambda_s != 0.0:
            es = (_gradient_prior_energy(b, self.ones, eps)
                  + _gradient_prior_energy(r, self.ones, eps))
        total = (self.w.lambda_d * ed + self.w.lambda_l * el
                 + self.w.lambda_s * es)
        return total, ed, el, es

    def gradient(self, b, r):
        eps = self.cfg.huber_eps
        gb = np.zeros_like(b)
        gr = np.zeros_like(r)
        if self.w.lambda_d != 0.0:
            db, dr = _data_gradient(b, r, self.geom, eps)
            gb += self.w.lambda_d * db
            gr += self.w.lambda_d * dr
        if self.w.lambda_l != 0.0:
            gb += self.w.lambda_l * _gradient_prior_gradient(
                b, self.edge_weight_b, eps)
            gr += self.w.lambda_l * _gradient_prior_gradient(
                r, self.edge_weight_r, eps)
        if self.w.lambda_s != 0.0:
            gb += self.w.lambda_s * _gradient_prior_gradient(b, self.ones, eps)
            gr += self.w.lambda_s * _gradient_prior_gradient(r, self.ones, eps)
        return gb, gr


def _project(b, r, intensities, enforce):
    b = np.clip(b, 0.0, 1.0)
    r = np.clip(r, 0.0, 1.0)
    if enforce:
        b = np.clip(b, np.maximum(0.0, intensities - 1.0), intensities)
        r = intensities - b
    return b, r


def optimize(init: LayerDecomposition, warps: WarpSet, edges: np.ndarray,
             w: EnergyWeights | None = None,
             cfg: OptimizerConfig | None = None,
             intensities: np.ndarray | None = None,
             progress=None):
    """Projected gradient descent from the initial decomposition.

    Returns (refined decomposition, trace) where trace rows are
    (E, Ed, El, Es) starting with the initial energy; accepted steps never
    increase E. The composition constraint projects against B + R from the
    initialization unless explicit input intensities are given. ``progress``,
    if given, is called as progress(done, total) after each iteration.
    """
    w = w or EnergyWeights()
    cfg = cfg or OptimizerConfig()
    b = init.background.data.copy()
    r = init.reflection.data.copy()
    if intensities is None:
        intensities = b + r
    obj = _Objective(b.shape, warps, edges, init.layer_map, w, cfg)

    energy, ed, el, es = obj.components(b, r)
    trace = [(energy, ed, el, es)]
    step = cfg.step_size
    rises = 0
    for it in range(cfg.max_iters):
        gb, gr = obj.gradient(b, r)
        accepted = False
        while step >= 1e-12:
            nb, nr = _project(b - step * gb, r - step * gr, intensities,
                              cfg.enforce_composition)
            new_energy, ned, nel, nes = obj.components(nb, nr)
            if new_energy <= energy:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        b, r = nb, nr
        rises = rises + 1 if new_energy > energy else 0
        if rises >= 5:
            raise DivergedError("energy rose on 5 consecutive steps")
        improved = energy - new_energy
        energy, ed, el, es = new_energy, ned, nel, nes
        trace.append((energy, ed, el, es))
        step = min(step * 1.5, cfg.step_size)
        if progress is not None:
            progress(it + 1, cfg.max_iters)
        if improved <= cfg.tol * max(abs(energy), 1e-12):
            break

    out = LayerDecomposition(background=FrameSequence(b),
                             reflection=FrameSequence(r),
                             layer_map=init.layer_map.copy())
    return out, trace


def write_trace_csv(trace, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("iter,E,Ed,El,Es\n")
        for i, (e, ed, el, es) in enumerate(trace):
            fh.write(f"{i},{e!r},{ed!r},{el!r},{es!r}\n")
