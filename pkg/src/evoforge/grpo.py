"""Group-relative advantages and training-batch emission.

The engine never computes a policy loss. It writes one line per rollout so an
external trainer can apply the GRPO update (and its KL term).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

from .core import RewardBreakdown, Role, dumps

DEFAULT_EPSILON = 1e-8

BATCH_FIELDS = (
    "group_id",
    "role",
    "iteration",
    "phase_step",
    "prompt_ref",
    "completion",
    "reward_total",
    "reward_components",
    "advantage",
    "kl_coeff",
)


def group_advantages(rewards: Sequence[float], epsilon: float = DEFAULT_EPSILON) -> list[float]:
    """``(r - mean) / (std + epsilon)`` with population std; all zeros if std is 0."""
    n = len(rewards)
    if n < 2:
        raise ValueError(f"a group needs at least 2 rewards, got {n}")
    mean = math.fsum(rewards) / n
    centered = [r - mean for r in rewards]
    std = math.sqrt(math.fsum(c * c for c in centered) / n)
    if std == 0 or all(r == rewards[0] for r in rewards):
        return [0.0] * n
    return [c / (std + epsilon) for c in centered]


@dataclass(frozen=True)
class Rollout:
    raw_output: str
    reward: RewardBreakdown
    advantage: float | None = None


@dataclass(frozen=True)
class RolloutGroup:
    group_id: str
    role: Role
    prompt_ref: str
    rollouts: tuple[Rollout, ...]
    iteration: int = 1
    phase_step: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def has_advantages(self) -> bool:
        return all(r.advantage is not None for r in self.rollouts)

    def with_advantages(self, epsilon: float = DEFAULT_EPSILON) -> "RolloutGroup":
        adv = group_advantages([r.reward.total for r in self.rollouts], epsilon)
        return replace(self, rollouts=tuple(replace(r, advantage=a) for r, a in zip(self.rollouts, adv)))


def batch_records(groups: Sequence[RolloutGroup], kl_coeff: float) -> list[dict]:
    out = []
    for g in groups:
        if not g.has_advantages:
            raise ValueError(f"group {g.group_id!r} has no advantages yet")
        for r in g.rollouts:
            out.append(
                {
                    "group_id": g.group_id,
                    "role": g.role.value,
                    "iteration": g.iteration,
                    "phase_step": g.phase_step,
                    "prompt_ref": g.prompt_ref,
                    "completion": r.raw_output,
                    "reward_total": r.reward.total,
                    "reward_components": r.reward.to_dict(),
                    "advantage": r.advantage,
                    "kl_coeff": kl_coeff,
                }
            )
    return out


def emit_training_batch(groups: Sequence[RolloutGroup], sink: IO[str], kl_coeff: float = 1e-2) -> int:
    """Write one JSON line per rollout to ``sink``; returns the record count."""
    records = batch_records(groups, kl_coeff)
    buf = io.StringIO()
    for rec in records:
        buf.write(dumps(rec) + "\n")
    sink.write(buf.getvalue())
    return len(records)
