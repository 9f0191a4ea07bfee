"""Run configuration loaded from JSON.

Every section maps onto one of the library's config dataclasses. Unknown keys
are rejected and validation errors are prefixed with the section name.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .anchors import AnchorConfig
from .errors import ConfigError
from .loss import LossWeights
from .metrics import EvalConfig
from .motion import TimeBasis
from .simulator import NoiseConfig, Occluder, OracleConfig, SceneConfig
from .tracker import TrackerConfig

CONFIG_ENV = "TUBETRACK_CONFIG"


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    beta: float = 1.0
    neg_pos_ratio: float = 3.0
    kind: str = "smooth_l1"

    def __post_init__(self):
        if self.kind not in ("smooth_l1", "l1"):
            raise ConfigError(f"kind must be 'smooth_l1' or 'l1', got {self.kind!r}")
        if not self.neg_pos_ratio >= 0:
            raise ConfigError(f"neg_pos_ratio must be >= 0, got {self.neg_pos_ratio}")
        LossWeights(self.alpha, self.beta)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta)


@dataclass(frozen=True)
class BasisConfig:
    origin: float = 0.0
    scale: float | None = None  # None spreads the window over [0, 1]


@dataclass(frozen=True)
class PathsConfig:
    ground_truth: str | None = None
    tubes: str | None = None
    tracks: str | None = None
    eval: str | None = None
    manifest: str | None = None


@dataclass(frozen=True)
class RunConfig:
    anchor: AnchorConfig = field(default_factory=AnchorConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n = self.anchor.n_frames
        for name, value in (
            ("tracker.n_frames", self.tracker.n_frames),
            ("oracle.n_frames", self.oracle.n_frames),
            ("scene.window", self.scene.window),
        ):
            if value != n:
                raise ConfigError(f"{name} ({value}) must equal anchor.n_frames ({n})")
        if self.oracle.stride != self.tracker.window_stride:
            raise ConfigError(
                f"oracle.stride ({self.oracle.stride}) must equal tracker.window_stride ({self.tracker.window_stride})"
            )
        try:
            self.scene.validate()
            self.noise.validate()
        except ConfigError as exc:
            raise ConfigError(f"scene/noise: {exc}") from None
        self.time_basis

    @property
    def time_basis(self) -> TimeBasis:
        try:
            return TimeBasis(self.anchor.n_frames, self.basis.origin, self.basis.scale)
        except ConfigError as exc:
            raise ConfigError(f"basis: {exc}") from None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["scene"].pop("objects")
        return out

    def replace(self, **sections) -> RunConfig:
        return dataclasses.replace(self, **sections)


_SECTIONS = {
    "anchor": AnchorConfig,
    "tracker": TrackerConfig,
    "loss": LossConfig,
    "basis": BasisConfig,
    "scene": SceneConfig,
    "noise": NoiseConfig,
    "oracle": OracleConfig,
    "eval": EvalConfig,
    "paths": PathsConfig,
}


def _tuples(v: Any) -> Any:
    if isinstance(v, list):
        return tuple(_tuples(x) for x in v)
    return v


def _section(name: str, cls, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    if name == "scene":
        known.discard("objects")
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key {name}.{unknown[0]}")
    kwargs = {}
    for key, value in data.items():
        if name == "scene" and key == "occluders":
            try:
                value = tuple(Occluder(**o) for o in value)
            except TypeError as exc:
                raise ConfigError(f"scene.occluders: {exc}") from None
        elif name == "scene" and key == "tags":
            pass
        else:
            value = _tuples(value)
        kwargs[key] = value
    try:
        obj = cls(**kwargs)
        if hasattr(obj, "validate"):
            obj.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return obj


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}")
    sections = {name: _section(name, cls, data[name]) for name, cls in _SECTIONS.items() if name in data}
    return RunConfig(**sections)


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    """Load ``path``, else the file named by ``TUBETRACK_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
