"""Anchor-tube multi-object tracking: box encoding, quadratic tube motion,
training losses, tube NMS with window-to-window association, a box-level
scene simulator and CLEAR MOT / identity metrics."""

from .anchors import AnchorConfig, AnchorSet, generate_anchor_tubes, match
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    ContractError,
    FormatError,
    NumericRangeError,
    SequenceError,
    TubeTrackError,
    UnderdeterminedError,
)
from .geometry import BBox, BoxSeq, iou, tracklet_iou
from .loss import LossReport, LossWeights, PredictionWindow
from .metrics import EvalConfig, EvalResult, evaluate
from .motion import TimeBasis, fit
from .pipeline import EndToEnd, end_to_end
from .records import TrackRecord
from .simulator import NoiseConfig, OracleConfig, SceneConfig, oracle_predict, simulate
from .tracker import Tracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "AnchorConfig", "AnchorSet", "BBox", "BoxSeq", "ConfigError", "ContractError", "EndToEnd", "EvalConfig",
    "EvalResult", "FormatError", "LossReport", "LossWeights", "NoiseConfig", "NumericRangeError",
    "OracleConfig", "PredictionWindow", "RunConfig", "SceneConfig", "SequenceError", "TimeBasis",
    "TrackRecord", "Tracker", "TrackerConfig", "TubeTrackError", "UnderdeterminedError", "end_to_end", "evaluate",
    "fit", "generate_anchor_tubes", "iou", "load_config", "match", "oracle_predict", "simulate",
    "tracklet_iou",
]
