"""One JSON document that configures every stage of the pipeline.

Each section mirrors a module's own config dataclass, so loading a file
validates every parameter against the same preconditions the modules
enforce. Unknown sections or keys are rejected rather than ignored; a silent
typo in an experiment config is worse than an error.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .energy import EnergyWeights, OptimizerConfig
from .errors import InvalidArgumentError
from .layers import LayerInitConfig
from .motion import IrlsConfig, WindowConfig
from .synth import BlendConfig
from .tracking import TrackerConfig


@dataclass
class AffinityConfig:
    k_neighbors: int = 8
    sigma_motion: float = 1.0
    sigma_color: float = 0.1

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise InvalidArgumentError("k_neighbors must be >= 1")
        if self.sigma_motion <= 0 or self.sigma_color <= 0:
            raise InvalidArgumentError("affinity sigmas must be > 0")


@dataclass
class EdgeConfig:
    low: float = 0.1
    high: float = 0.2
    sigma: float = 1.4

    def __post_init__(self):
        if not 0 < self.low < self.high:
            raise InvalidArgumentError(
                "edge thresholds need 0 < low < high")
        if self.sigma <= 0:
            raise InvalidArgumentError("edge sigma must be > 0")


@dataclass
class SeedConfig:
    """Where auto-generated seed scribbles are placed on synthetic input.

    One seed frame by default, mirroring the interactive flow of hinting a
    single frame. Multiple fractions work only while the per-frame scribbles
    claim every track consistently; the layers move relative to each other,
    so ground-truth strokes from different frames can contradict.
    """

    frame_fractions: tuple = (0.0,)
    reflection_radius: float = 1.5
    background_radius: float = 5.0
    background_margin: float = 16.0
    background_stride: int = 24

    def __post_init__(self):
        self.frame_fractions = tuple(float(f) for f in self.frame_fractions)
        if not self.frame_fractions:
            raise InvalidArgumentError("frame_fractions must not be empty")
        if any(not 0.0 <= f < 1.0 for f in self.frame_fractions):
            raise InvalidArgumentError("frame fractions must lie in [0, 1)")
        if min(self.reflection_radius, self.background_radius) <= 0:
            raise InvalidArgumentError("seed radii must be > 0")
        if self.background_margin <= 0 or self.background_stride < 1:
            raise InvalidArgumentError("bad background seed spacing")


_SECTIONS = {
    "window": WindowConfig,
    "tracker": TrackerConfig,
    "irls": IrlsConfig,
    "affinity": AffinityConfig,
    "layer_init": LayerInitConfig,
    "energy": EnergyWeights,
    "optimizer": OptimizerConfig,
    "edges": EdgeConfig,
    "seeds": SeedConfig,
    "synth": BlendConfig,
}


@dataclass
class PipelineConfig:
    window: WindowConfig = field(default_factory=WindowConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    irls: IrlsConfig = field(default_factory=IrlsConfig)
    affinity: AffinityConfig = field(default_factory=AffinityConfig)
    layer_init: LayerInitConfig = field(default_factory=LayerInitConfig)
    energy: EnergyWeights = field(default_factory=EnergyWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    edges: EdgeConfig = field(default_factory=EdgeConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    synth: BlendConfig = field(default_factory=BlendConfig)

    def to_json(self) -> dict:
        out = {}
        for name in _SECTIONS:
            section = asdict(getattr(self, name))
            for key, value in section.items():
                if isinstance(value, tuple):
                    section[key] = list(value)
            out[name] = section
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "PipelineConfig":
        if not isinstance(payload, dict):
            raise InvalidArgumentError("pipeline config must be an object")
        unknown = set(payload) - set(_SECTIONS)
        if unknown:
            raise InvalidArgumentError(
                f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            if name not in payload:
                continue
            section = payload[name]
            if not isinstance(section, dict):
                raise InvalidArgumentError(f"section {name!r} must be an object")
            allowed = {f.name for f in fields(section_cls)}
            bad = set(section) - allowed
            if bad:
                raise InvalidArgumentError(
                    f"unknown keys in {name!r}: {sorted(bad)}")
            coerced = {k: tuple(v) if isinstance(v, list) else v
                       for k, v in section.items()}
            kwargs[name] = section_cls(**coerced)
        return cls(**kwargs)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "PipelineConfig":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(
                f"cannot read pipeline config: {exc}") from exc
        return cls.from_json(payload)
