"""File-to-file pipeline stages shared by the CLI and the service.

Every stage reads and writes only documented formats (PNG frame
directories, JSON track/scribble/warp files, CSV traces) and echoes the
configuration it ran with, so any stage can be re-run from its inputs alone.
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from .config import PipelineConfig
from .energy import edge_maps, optimize, write_trace_csv
from .errors import (ConflictingScribblesError, InvalidArgumentError,
                     MissingLabelSeedsError)
from .frames import load_sequence, save_sequence
from .hints import ScribbleSet, apply_scribbles, kmeans_fallback, propagate_labels
from .layers import LayerDecomposition, initialize_layers
from .motion import build_warpsets
from .synth import auto_scribbles, default_bundle, evaluate, load_bundle, save_bundle
from .tracking import TrackSet, track_sequence


def _echo_config(config: PipelineConfig, directory: str) -> None:
    # not plain config.json: a bundle directory already uses that name
    # for its blend parameters
    config.save(os.path.join(directory, "pipeline_config.json"))


def _ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


def load_scribble_file(path: str) -> list:
    """A scribble file holds one scribble set or a list of them."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidArgumentError(f"cannot read scribbles: {exc}") from exc
    if isinstance(payload, list):
        return [ScribbleSet.from_json(p) for p in payload]
    return [ScribbleSet.from_json(payload)]


def merge_seeds(ts: TrackSet, scribble_sets: list) -> dict:
    """Apply several scribble sets and merge their track labels.

    The same track may be claimed from different frames only with the same
    label; apply_scribbles already rejects within-frame conflicts.
    """
    merged = {}
    for s in scribble_sets:
        for track_id, label in apply_scribbles(ts, s).items():
            if merged.get(track_id, label) != label:
                raise ConflictingScribblesError(
                    f"track {track_id} scribbled as both labels across frames",
                    track_id=track_id)
            merged[track_id] = label
    return merged


def stage_track(frames_dir: str, out_path: str,
                config: PipelineConfig | None = None) -> TrackSet:
    config = config or PipelineConfig()
    seq = load_sequence(frames_dir)
    ts = track_sequence(seq, config.tracker)
    ts.save(out_path)
    config.save(out_path + ".config.json")
    return ts


def stage_label(tracks_path: str, out_path: str,
                config: PipelineConfig | None = None,
                scribble_paths: list | None = None,
                mask_path: str | None = None, mask_frame: int = 0,
                frames_dir: str | None = None,
                use_kmeans: bool = False) -> TrackSet:
    config = config or PipelineConfig()
    ts = TrackSet.load(tracks_path)

    if use_kmeans:
        labeled = kmeans_fallback(ts)
    else:
        sets = []
        for path in scribble_paths or []:
            sets.extend(load_scribble_file(path))
        if mask_path is not None:
            sets.append(ScribbleSet.from_mask_file(mask_path, mask_frame))
        if not sets:
            raise InvalidArgumentError(
                "labeling needs scribbles, a mask, or --kmeans")
        if frames_dir is None:
            raise InvalidArgumentError(
                "scribble propagation needs the input frames")
        seq = load_sequence(frames_dir)
        seeds = merge_seeds(ts, sets)
        if not seeds:
            raise MissingLabelSeedsError("no scribble claimed any track")
        a = config.affinity
        labeled = propagate_labels(ts, seeds, seq,
                                   k_neighbors=a.k_neighbors,
                                   sigma_motion=a.sigma_motion,
                                   sigma_color=a.sigma_color)
    labeled.save(out_path)
    config.save(out_path + ".config.json")
    return labeled


def save_layer_map(layer_map: np.ndarray, directory: str) -> None:
    _ensure_dir(directory)
    for t in range(layer_map.shape[0]):
        img = Image.fromarray((layer_map[t] * 255).astype(np.uint8), mode="L")
        img.save(os.path.join(directory, f"frame_{t:04d}.png"))


def load_layer_map(directory: str) -> np.ndarray:
    paths = sorted(p for p in os.listdir(directory) if p.endswith(".png"))
    planes = [np.asarray(Image.open(os.path.join(directory, p)))
              for p in paths]
    return (np.stack(planes) > 127).astype(np.uint8)


def separate_sequence(seq, ts, config: PipelineConfig | None = None,
                      progress=None):
    """Warp estimation, min-filter initialization, and energy refinement.

    Returns (decomposition, trace, warps). ``progress``, if given, is called
    as progress(stage, done, total) with stage one of "warps", "init",
    "optimize".
    """
    config = config or PipelineConfig()

    def staged(name):
        if progress is None:
            return None
        return lambda done, total: progress(name, done, total)

    warps = build_warpsets(ts, config.window, config.irls,
                           progress=staged("warps"))
    init = initialize_layers(seq, warps, config.layer_init,
                             progress=staged("init"))
    edges = edge_maps(seq, config.edges.low, config.edges.high,
                      config.edges.sigma)
    dec, trace = optimize(init, warps, edges, config.energy, config.optimizer,
                          progress=staged("optimize"))
    return dec, trace, warps


def stage_separate(frames_dir: str, tracks_path: str, out_dir: str,
                   config: PipelineConfig | None = None) -> LayerDecomposition:
    config = config or PipelineConfig()
    seq = load_sequence(frames_dir)
    ts = TrackSet.load(tracks_path)
    dec, trace, warps = separate_sequence(seq, ts, config)

    _ensure_dir(out_dir)
    save_sequence(dec.background, os.path.join(out_dir, "background"))
    save_sequence(dec.reflection, os.path.join(out_dir, "reflection"))
    save_layer_map(dec.layer_map, os.path.join(out_dir, "layer_map"))
    write_trace_csv(trace, os.path.join(out_dir, "energy_trace.csv"))
    warps.save(os.path.join(out_dir, "warps.json"))
    _echo_config(config, out_dir)
    return dec


def stage_synth(out_dir: str, config: PipelineConfig | None = None,
                seed: int = 0) -> None:
    """Write a ground-truth bundle plus auto-generated seed scribbles."""
    config = config or PipelineConfig()
    bundle = default_bundle(config.synth, seed=seed)
    save_bundle(bundle, out_dir)

    s = config.seeds
    n = bundle.mixed.frame_count
    frames = sorted({int(f * n) for f in s.frame_fractions})
    sets = []
    for frame in frames:
        try:
            sets.append(auto_scribbles(
                bundle, frame,
                reflection_radius=s.reflection_radius,
                background_radius=s.background_radius,
                background_margin=s.background_margin,
                background_stride=s.background_stride))
        except InvalidArgumentError:
            continue            # frame has nothing to seed from; skip it
    if not sets:
        raise InvalidArgumentError(
            "no seed frame produced scribbles; adjust seeds.frame_fractions")
    with open(os.path.join(out_dir, "scribbles.json"), "w") as fh:
        json.dump([s.to_json() for s in sets], fh)
    _echo_config(config, out_dir)


def stage_eval(result_dir: str, gt_dir: str, out_csv: str,
               config: PipelineConfig | None = None):
    config = config or PipelineConfig()
    bundle = load_bundle(gt_dir)
    background = load_sequence(os.path.join(result_dir, "background"))
    reflection = load_sequence(os.path.join(result_dir, "reflection"))
    map_dir = os.path.join(result_dir, "layer_map")
    if os.path.isdir(map_dir):
        layer_map = load_layer_map(map_dir)
    else:
        layer_map = np.zeros(background.data.shape[:3], np.uint8)
    dec = LayerDecomposition(background=background, reflection=reflection,
                             layer_map=layer_map)
    result = evaluate(dec, bundle)
    result.write_csv(out_csv)
    config.save(out_csv + ".config.json")
    return result


def run_synthetic(workdir: str, config: PipelineConfig | None = None,
                  seed: int = 0, use_kmeans: bool = False):
    """The whole loop on generated input: synth, track, label, separate, eval.

    Returns the EvaluationResult; all intermediate artifacts live under
    workdir exactly as the individual commands would produce them.
    """
    config = config or PipelineConfig()
    gt_dir = os.path.join(workdir, "gt")
    stage_synth(gt_dir, config, seed=seed)
    frames_dir = os.path.join(gt_dir, "mixed")
    tracks = os.path.join(workdir, "tracks.json")
    labeled = os.path.join(workdir, "labeled_tracks.json")
    result_dir = os.path.join(workdir, "result")
    stage_track(frames_dir, tracks, config)
    stage_label(tracks, labeled, config,
                scribble_paths=None if use_kmeans
                else [os.path.join(gt_dir, "scribbles.json")],
                frames_dir=frames_dir, use_kmeans=use_kmeans)
    stage_separate(frames_dir, labeled, result_dir, config)
    return stage_eval(result_dir, gt_dir,
                      os.path.join(workdir, "ssim.csv"), config)
