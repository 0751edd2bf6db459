"""reflectkit: user-assisted separation of reflections from video."""

__version__ = "0.1.0"

from .config import PipelineConfig
from .energy import (EnergyWeights, OptimizerConfig, edge_maps,
                     energy_gradient, optimize, total_energy)
from .frames import Frame, FrameSequence, load_sequence, save_sequence, to_luma
from .hints import (ScribbleSet, Stroke, apply_scribbles, kmeans_fallback,
                    propagate_labels)
from .layers import LayerDecomposition, initialize_layers, min_filter_background
from .motion import (Homography, WarpSet, WindowConfig, build_warpsets,
                     estimate_homography_irls)
from .pipeline import run_synthetic, separate_sequence
from .synth import (BlendConfig, GroundTruthBundle, blend, default_bundle,
                    evaluate, make_bundle, ssim)
from .tracking import LayerLabel, Track, TrackerConfig, TrackSet, track_sequence

__all__ = [
    "BlendConfig",
    "EnergyWeights",
    "Frame",
    "FrameSequence",
    "GroundTruthBundle",
    "Homography",
    "LayerDecomposition",
    "LayerLabel",
    "OptimizerConfig",
    "PipelineConfig",
    "ScribbleSet",
    "Stroke",
    "Track",
    "TrackSet",
    "TrackerConfig",
    "WarpSet",
    "WindowConfig",
    "apply_scribbles",
    "blend",
    "build_warpsets",
    "default_bundle",
    "edge_maps",
    "energy_gradient",
    "estimate_homography_irls",
    "evaluate",
    "initialize_layers",
    "kmeans_fallback",
    "load_sequence",
    "make_bundle",
    "min_filter_background",
    "optimize",
    "propagate_labels",
    "run_synthetic",
    "save_sequence",
    "separate_sequence",
    "ssim",
    "to_luma",
    "total_energy",
    "track_sequence",
    "__version__",
]
