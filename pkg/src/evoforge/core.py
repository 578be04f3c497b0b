"""Domain types shared across the engine.

Every type here is immutable after construction and serializes to a plain
JSON-compatible dict via ``to_dict``/``from_dict``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

import numpy as np


class QuestionType(str, Enum):
    MULTIPLE_CHOICE = "multiple_choice"
    NUMERICAL = "numerical"
    REGRESSION = "regression"

    @property
    def label(self) -> str:
        """The spelling used in prompts and ``<type>`` tags."""
        return self.value.replace("_", " ")


class Role(str, Enum):
    QUESTIONER = "questioner"
    SOLVER = "solver"


def dumps(obj: Any) -> str:
    """Canonical single-line JSON used for every persisted record."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def stable_hash64(*parts: Any) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def fork_rng(seed: int, *keys: Any) -> np.random.Generator:
    """Child generator keyed on ``(seed, *keys)``.

    Keys are hashed rather than drawn sequentially so the stream a worker gets
    does not depend on scheduling order.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [stable_hash64(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class FrameRef:
    uri: str
    timestamp_s: float
    index: int

    def to_dict(self) -> dict:
        return {"uri": self.uri, "timestamp_s": self.timestamp_s, "index": self.index}

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRef":
        return cls(uri=d["uri"], timestamp_s=float(d["timestamp_s"]), index=int(d["index"]))


@dataclass(frozen=True)
class VideoRef:
    """An ordered frame sequence.

    ``frames`` is the order the model will see. A canonical video has frames
    sorted by ``index``; permuted copies keep each frame's original index and
    timestamp so provenance survives reordering.
    """

    video_id: str
    frames: tuple[FrameRef, ...]
    duration_s: float

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ValueError(f"video {self.video_id!r} has no frames")
        if not (self.duration_s >= 0 and math.isfinite(self.duration_s)):
            raise ValueError(f"video {self.video_id!r}: bad duration {self.duration_s}")
        ordered = sorted(self.frames, key=lambda f: f.index)
        if len({f.index for f in ordered}) != len(ordered):
            raise ValueError(f"video {self.video_id!r}: duplicate frame indices")
        prev = None
        for f in ordered:
            if not 0 <= f.timestamp_s <= self.duration_s:
                raise ValueError(
                    f"video {self.video_id!r}: timestamp {f.timestamp_s} outside [0, {self.duration_s}]"
                )
            if prev is not None and not f.timestamp_s > prev:
                raise ValueError(f"video {self.video_id!r}: timestamps not strictly increasing")
            prev = f.timestamp_s

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def is_canonical(self) -> bool:
        return all(a.index < b.index for a, b in zip(self.frames, self.frames[1:]))

    def clip(self, window: "FrameWindow") -> "VideoRef":
        """The windowed sub-clip; frames keep their original indices."""
        by_index = {f.index: f for f in self.frames}
        frames = [by_index[i] for i in range(window.start_index, window.end_index + 1)]
        return VideoRef(self.video_id, tuple(frames), self.duration_s)

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "duration_s": self.duration_s,
            "frames": [f.to_dict() for f in self.frames],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VideoRef":
        return cls(
            video_id=str(d["video_id"]),
            frames=tuple(FrameRef.from_dict(f) for f in d["frames"]),
            duration_s=float(d["duration_s"]),
        )


def synthetic_video(video_id: str, n_frames: int = 16, fps: float = 1.0, offset_s: float = 0.0) -> VideoRef:
    """Evenly spaced frames with ``mock://`` locators the mock endpoint understands."""
    frames = []
    for i in range(n_frames):
        t = offset_s + i / fps
        frames.append(FrameRef(uri=f"mock://{video_id}/frame/{i}?t={t!r}", timestamp_s=t, index=i))
    return VideoRef(video_id, tuple(frames), duration_s=offset_s + n_frames / fps)


@dataclass(frozen=True)
class FrameWindow:
    start_index: int
    end_index: int
    t_s: float
    t_e: float

    def __post_init__(self):
        if not 0 <= self.start_index <= self.end_index:
            raise ValueError(f"bad window indices [{self.start_index}, {self.end_index}]")
        if not self.t_s <= self.t_e:
            raise ValueError(f"bad window times [{self.t_s}, {self.t_e}]")

    @property
    def length(self) -> int:
        return self.end_index - self.start_index + 1

    @property
    def segment(self) -> "Segment":
        return Segment(self.t_s, self.t_e)

    def to_dict(self) -> dict:
        return {
            "start_index": self.start_index,
            "end_index": self.end_index,
            "t_s": self.t_s,
            "t_e": self.t_e,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameWindow":
        return cls(int(d["start_index"]), int(d["end_index"]), float(d["t_s"]), float(d["t_e"]))


@dataclass(frozen=True)
class Segment:
    t_s: float
    t_e: float

    def __post_init__(self):
        if not (math.isfinite(self.t_s) and math.isfinite(self.t_e)):
            raise ValueError("segment bounds must be finite")
        if not 0 <= self.t_s <= self.t_e:
            raise ValueError(f"invalid segment [{self.t_s}, {self.t_e}]")

    @property
    def length(self) -> float:
        return self.t_e - self.t_s

    def to_dict(self) -> dict:
        return {"t_s": self.t_s, "t_e": self.t_e}

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(float(d["t_s"]), float(d["t_e"]))


@dataclass(frozen=True)
class QuestionRecord:
    question_type: QuestionType
    question_text: str
    reference_answer: str
    source_window: FrameWindow | None = None
    raw_output: str = ""

    def to_dict(self) -> dict:
        return {
            "question_type": self.question_type.value,
            "question_text": self.question_text,
            "reference_answer": self.reference_answer,
            "source_window": self.source_window.to_dict() if self.source_window else None,
            "raw_output": self.raw_output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionRecord":
        sw = d.get("source_window")
        return cls(
            question_type=QuestionType(d["question_type"]),
            question_text=d["question_text"],
            reference_answer=d["reference_answer"],
            source_window=FrameWindow.from_dict(sw) if sw else None,
            raw_output=d.get("raw_output", ""),
        )


@dataclass(frozen=True)
class SolverResponse:
    raw_output: str
    answer: str | None = None
    segment: Segment | None = None

    @property
    def format_valid_answer(self) -> bool:
        return self.answer is not None

    @property
    def format_valid_segment(self) -> bool:
        return self.segment is not None

    def to_dict(self) -> dict:
        return {
            "raw_output": self.raw_output,
            "answer": self.answer,
            "segment": self.segment.to_dict() if self.segment else None,
            "format_valid_answer": self.format_valid_answer,
            "format_valid_segment": self.format_valid_segment,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverResponse":
        seg = d.get("segment")
        return cls(d["raw_output"], d.get("answer"), Segment.from_dict(seg) if seg else None)


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-rollout decomposition of every reward term.

    ``confidence``, ``shuffled_confidence`` and ``cluster_size`` are audit
    fields: they are the inputs the reward terms were derived from.
    """

    role: Role
    total: float
    format_gate: int = 0
    difficulty: float = 0.0
    diversity_penalty: float = 0.0
    temporal_aware: float = 0.0
    accuracy: int = 0
    format_term: int = 0
    iou: float = 0.0
    confidence: float = 0.0
    shuffled_confidence: float = 0.0
    cluster_size: int = 0

    def recompute_total(self, lambda_q: float, lambda_s: float, w: float) -> float:
        if self.role is Role.QUESTIONER:
            return self.format_gate * (
                max(0.0, self.difficulty - self.diversity_penalty) + lambda_q * self.temporal_aware
            )
        return (1 - w) * self.accuracy + w * self.format_term + lambda_s * self.iou * self.accuracy

    def to_dict(self) -> dict:
        return {
            "role": self.role.value,
            "total": self.total,
            "format_gate": self.format_gate,
            "difficulty": self.difficulty,
            "diversity_penalty": self.diversity_penalty,
            "temporal_aware": self.temporal_aware,
            "accuracy": self.accuracy,
            "format_term": self.format_term,
            "iou": self.iou,
            "confidence": self.confidence,
            "shuffled_confidence": self.shuffled_confidence,
            "cluster_size": self.cluster_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RewardBreakdown":
        d = dict(d)
        d["role"] = Role(d["role"])
        return cls(**d)


@dataclass(frozen=True)
class CuratedExample:
    """A Phase-2 survivor. Unknown keys read from disk are kept in ``extra``."""

    example_id: str
    video_id: str
    window: FrameWindow
    question: QuestionRecord
    pseudo_answer: str
    confidence: float
    iteration: int
    extra: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if self.iteration < 1:
            raise ValueError("iteration must be >= 1")
        if not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def to_dict(self) -> dict:
        d = {
            "example_id": self.example_id,
            "video_id": self.video_id,
            "window": self.window.to_dict(),
            "question": self.question.to_dict(),
            "pseudo_answer": self.pseudo_answer,
            "confidence": self.confidence,
            "iteration": self.iteration,
        }
        for k, v in self.extra.items():
            d.setdefault(k, v)
        return d

    _KNOWN = ("example_id", "video_id", "window", "question", "pseudo_answer", "confidence", "iteration")

    @classmethod
    def from_dict(cls, d: dict) -> "CuratedExample":
        return cls(
            example_id=str(d["example_id"]),
            video_id=str(d["video_id"]),
            window=FrameWindow.from_dict(d["window"]),
            question=QuestionRecord.from_dict(d["question"]),
            pseudo_answer=str(d["pseudo_answer"]),
            confidence=float(d["confidence"]),
            iteration=int(d["iteration"]),
            extra={k: v for k, v in d.items() if k not in cls._KNOWN},
        )


def read_videos(path) -> list[VideoRef]:
    """Load a line-delimited video manifest (one ``VideoRef`` dict per line)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(VideoRef.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_videos(path, videos: Iterable[VideoRef]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in videos:
            fh.write(dumps(v.to_dict()) + "\n")
