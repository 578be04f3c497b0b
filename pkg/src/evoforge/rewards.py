"""Scalar reward terms for both roles."""

from __future__ import annotations

from typing import Sequence

from .core import Segment
from .parse import AnswerKey, answers_equivalent


def _check_unit(name: str, x: float) -> None:
    if not 0 <= x <= 1:
        raise ValueError(f"{name}={x!r} outside [0, 1]")


def majority_vote(answers: Sequence[AnswerKey | None]) -> tuple[AnswerKey | None, int]:
    """Largest equivalence class and its size.

    ``None`` entries are format-invalid samples: they never join a class.
    Each answer joins the first class whose representative it matches; the
    first-seen member represents the class and ties go to the earliest class.
    Returns ``(None, 0)`` if every sample is invalid.
    """
    reps: list[AnswerKey] = []
    counts: list[int] = []
    for a in answers:
        if a is None:
            continue
        for k, rep in enumerate(reps):
            if answers_equivalent(a, rep):
                counts[k] += 1
                break
        else:
            reps.append(a)
            counts.append(1)
    if not reps:
        return None, 0
    best = max(range(len(reps)), key=lambda k: (counts[k], -k))
    return reps[best], counts[best]


def confidence(answers: Sequence[AnswerKey | None], pseudo: AnswerKey | None) -> float:
    if not answers:
        raise ValueError("confidence needs at least one sample")
    if pseudo is None:
        return 0.0
    hits = sum(1 for a in answers if a is not None and answers_equivalent(a, pseudo))
    return hits / len(answers)


def difficulty_reward(s: float) -> float:
    _check_unit("s", s)
    return min(s, 1 - s)


def temporal_aware_reward(s_orig: float, s_shuf: float) -> float:
    _check_unit("s_orig", s_orig)
    _check_unit("s_shuf", s_shuf)
    return max(0.0, s_orig - s_shuf)


def questioner_total(fmt_gate: int, diff: float, div: float, temp: float, lambda_q: float) -> float:
    if not fmt_gate:
        return 0.0
    return max(0.0, diff - div) + lambda_q * temp


def interval_iou(pred: Segment, target: Segment) -> float:
    inter = max(0.0, min(pred.t_e, target.t_e) - max(pred.t_s, target.t_s))
    union = max(pred.t_e, target.t_e) - min(pred.t_s, target.t_s)
    if union <= 0:
        return 1.0  # both are the same point
    return inter / union


def solver_total(acc: int, fmt: int, iou: float, w: float, lambda_s: float) -> float:
    _check_unit("iou", iou)
    return (1 - w) * acc + w * fmt + lambda_s * iou * acc
