"""Event-based space object detection, tracking and evaluation toolkit."""

from ._kernels import BACKEND
from .detector import DetectorConfig, detect, run_detector
from .events import (
    DEFAULT_GEOMETRY,
    Event,
    EventStream,
    SensorGeometry,
    read_events,
    write_events,
)
from .metrics import EvalConfig, LabelSet, LabeledObject, VolumeStats, evaluate, load_labels
from .surface import Roi, TimeSurface, extract_roi, surface_activation_test
from .synth import SynthConfig, SynthRecording, generate
from .templates import TemplateBank, angular_activation, build_templates, dynamic_threshold, unimodality_test
from .tracker import Tracker, TrackerConfig, run_tracker, track

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DEFAULT_GEOMETRY",
    "DetectorConfig",
    "EvalConfig",
    "Event",
    "EventStream",
    "LabelSet",
    "LabeledObject",
    "Roi",
    "SensorGeometry",
    "SynthConfig",
    "SynthRecording",
    "TemplateBank",
    "TimeSurface",
    "Tracker",
    "TrackerConfig",
    "VolumeStats",
    "angular_activation",
    "build_templates",
    "detect",
    "dynamic_threshold",
    "evaluate",
    "extract_roi",
    "generate",
    "load_labels",
    "read_events",
    "run_detector",
    "run_tracker",
    "surface_activation_test",
    "track",
    "unimodality_test",
    "write_events",
    "__version__",
]
