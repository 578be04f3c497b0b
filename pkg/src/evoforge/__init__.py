"""Rollout, reward and batch engine for temporal-centric video self-play."""

from .config import PipelineConfig, load_config, validate_config
from .core import (
    CuratedExample,
    FrameRef,
    FrameWindow,
    QuestionRecord,
    QuestionType,
    RewardBreakdown,
    Role,
    Segment,
    SolverResponse,
    VideoRef,
    synthetic_video,
)

__version__ = "0.1.0"

__all__ = [
    "CuratedExample",
    "FrameRef",
    "FrameWindow",
    "PipelineConfig",
    "QuestionRecord",
    "QuestionType",
    "RewardBreakdown",
    "Role",
    "Segment",
    "SolverResponse",
    "VideoRef",
    "load_config",
    "synthetic_video",
    "validate_config",
]
