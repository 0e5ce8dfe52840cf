"""Sliding-window temporal action detection with a boundary-matching proposal network."""

from .bmn import BmnConfig, BmnModel, ModelParams, init_params, load_checkpoint, save_checkpoint
from .config import PipelineConfig, load_config
from .core import ClipFeatureSequence, GroundTruth, GTEntry, Segment, TimeBase
from .evaluation import EvalReport, evaluate
from .fusion import Detection, make_detections
from .postproc import NmsConfig, Proposal, soft_nms
from .synth import SynthConfig, generate_videos
from .windowing import Window, WindowConfig, plan_windows

__all__ = [
    "BmnConfig", "BmnModel", "ModelParams", "init_params", "load_checkpoint", "save_checkpoint",
    "PipelineConfig", "load_config",
    "ClipFeatureSequence", "GroundTruth", "GTEntry", "Segment", "TimeBase",
    "EvalReport", "evaluate",
    "Detection", "make_detections",
    "NmsConfig", "Proposal", "soft_nms",
    "SynthConfig", "generate_videos",
    "Window", "WindowConfig", "plan_windows",
]
