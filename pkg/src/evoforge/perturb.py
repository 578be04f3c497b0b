"""Temporal window sampling and frame-order perturbations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FrameWindow, VideoRef


class VideoTooShort(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Strategy:
    kind: str  # "random" | "reverse" | "block"
    block_size: int = 0

    def __str__(self) -> str:
        return f"block:{self.block_size}" if self.kind == "block" else self.kind


def parse_strategy(spec: "str | Strategy") -> Strategy:
    """``random``, ``reverse`` or ``block:<size>``."""
    if isinstance(spec, Strategy):
        return spec
    s = spec.strip().lower()
    if s in ("random", "reverse"):
        return Strategy(s)
    if s.startswith("block:"):
        try:
            b = int(s.split(":", 1)[1])
        except ValueError:
            b = 0
        if b >= 1:
            return Strategy("block", b)
        raise ValueError(f"block size must be a positive integer: {spec!r}")
    raise ValueError(f"unknown shuffle strategy {spec!r}; expected random, reverse or block:<size>")


@dataclass(frozen=True)
class Permutation:
    """``mapping[i]`` is the output position of the frame at canonical position ``i``."""

    mapping: tuple[int, ...]
    strategy: Strategy
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mapping", tuple(int(x) for x in self.mapping))
        if sorted(self.mapping) != list(range(len(self.mapping))):
            raise ValueError("mapping is not a bijection")

    def __len__(self) -> int:
        return len(self.mapping)

    @property
    def is_identity(self) -> bool:
        return all(i == m for i, m in enumerate(self.mapping))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for i, m in enumerate(self.mapping):
            inv[m] = i
        return Permutation(tuple(inv), self.strategy, self.seed)


def sample_window(video: VideoRef, K: int, rng: np.random.Generator) -> FrameWindow:
    n = len(video)
    if K < 1 or n < K:
        raise VideoTooShort(f"video {video.video_id!r} has {n} frames, window needs {K}")
    frames = sorted(video.frames, key=lambda f: f.index)
    start = int(rng.integers(0, n - K + 1))
    first, last = frames[start], frames[start + K - 1]
    return FrameWindow(first.index, last.index, first.timestamp_s, last.timestamp_s)


def _block_mapping(n: int, b: int, rng: np.random.Generator) -> list[int]:
    blocks = [list(range(s, min(s + b, n))) for s in range(0, n, b)]
    order = rng.permutation(len(blocks))
    mapping = [0] * n
    pos = 0
    for k in order:
        for i in blocks[k]:
            mapping[i] = pos
            pos += 1
    return mapping


def make_permutation(n: int, strategy, rng: np.random.Generator) -> Permutation:
    """Draw a frame-order perturbation.

    Random and block shuffles are redrawn if they come out as the identity,
    since an unperturbed "shuffle" carries no contrastive signal. Block sizes
    >= n have a single block and are necessarily the identity.
    """
    strategy = parse_strategy(strategy)
    if n < 2:
        raise ValueError("need at least two frames to permute")
    seed = int(rng.integers(0, 2**63))
    if strategy.kind == "reverse":
        return Permutation(tuple(range(n - 1, -1, -1)), strategy, seed)
    draw_rng = np.random.default_rng(seed)
    if strategy.kind == "random":
        draw = lambda: [int(x) for x in draw_rng.permutation(n)]  # noqa: E731
        can_move = True
    else:
        draw = lambda: _block_mapping(n, strategy.block_size, draw_rng)  # noqa: E731
        can_move = strategy.block_size < n
    mapping = draw()
    while can_move and mapping == list(range(n)):
        mapping = draw()
    return Permutation(tuple(mapping), strategy, seed)


def apply_permutation(video: VideoRef, perm: Permutation) -> VideoRef:
    if len(perm) != len(video):
        raise LengthMismatch(f"permutation of length {len(perm)} for {len(video)} frames")
    out = [None] * len(video)
    for i, frame in enumerate(video.frames):
        out[perm.mapping[i]] = frame
    return VideoRef(video.video_id, tuple(out), video.duration_s)
