"""Output grammars for both roles and answer canonicalization.

The questioner must emit exactly one ``<type>``/``<question>``/``<answer>``
triple and nothing else; the solver's answer is the last balanced
``\\boxed{...}`` and its grounding the last ``<segment>`` tag.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum

from .core import QuestionRecord, QuestionType, Segment, SolverResponse


class FormatFailure(str, Enum):
    MISSING_TAG = "MissingTag"
    DUPLICATE_TAG = "DuplicateTag"
    EXTRA_TEXT = "ExtraText"
    INVALID_TYPE = "InvalidType"
    EMPTY_FIELD = "EmptyField"


@dataclass(frozen=True)
class QuestionerParseError:
    """Why a questioner output failed the format gate."""

    code: FormatFailure
    detail: str = ""

    def __bool__(self) -> bool:
        return False


_TAGS = ("type", "question", "answer")
_TAG_RE = re.compile(r"<(/?)(type|question|answer)\s*>", re.IGNORECASE)

_TYPE_ALIASES = {
    "multiple choice": QuestionType.MULTIPLE_CHOICE,
    "numerical": QuestionType.NUMERICAL,
    "regression": QuestionType.REGRESSION,
}


def parse_question_type(text: str) -> QuestionType | None:
    key = re.sub(r"[\s_\-]+", " ", text.strip().casefold())
    return _TYPE_ALIASES.get(key)


def parse_questioner_output(raw: str) -> QuestionRecord | QuestionerParseError:
    """Parse a questioner rollout, or report the first unmet format condition.

    Tags are case-insensitive and the three blocks may come in any order.
    Only whitespace is allowed between and around them.
    """
    tags = [(m.group(1) == "/", m.group(2).lower(), m.start(), m.end()) for m in _TAG_RE.finditer(raw)]
    for name in _TAGS:
        opens = sum(1 for closing, n, *_ in tags if n == name and not closing)
        closes = sum(1 for closing, n, *_ in tags if n == name and closing)
        if opens == 0 or closes == 0:
            return QuestionerParseError(FormatFailure.MISSING_TAG, name)
    for name in _TAGS:
        if sum(1 for _, n, *_ in tags if n == name) > 2:
            return QuestionerParseError(FormatFailure.DUPLICATE_TAG, name)

    # Exactly six tags remain; they must pair up as open/close of the same name.
    bodies: dict[str, str] = {}
    outside = []
    cursor = 0
    for k in range(0, 6, 2):
        (c1, n1, s1, e1), (c2, n2, s2, e2) = tags[k], tags[k + 1]
        if c1 or not c2 or n1 != n2:
            return QuestionerParseError(FormatFailure.MISSING_TAG, f"unbalanced <{n1}>")
        outside.append(raw[cursor:s1])
        bodies[n1] = raw[e1:s2]
        cursor = e2
    outside.append(raw[cursor:])
    if any(chunk.strip() for chunk in outside):
        return QuestionerParseError(FormatFailure.EXTRA_TEXT, "text outside the three blocks")

    qtype = parse_question_type(bodies["type"])
    if qtype is None:
        return QuestionerParseError(FormatFailure.INVALID_TYPE, bodies["type"].strip())
    question = bodies["question"].strip()
    answer = bodies["answer"].strip()
    if not question:
        return QuestionerParseError(FormatFailure.EMPTY_FIELD, "question")
    if not answer:
        return QuestionerParseError(FormatFailure.EMPTY_FIELD, "answer")
    return QuestionRecord(qtype, question, answer, raw_output=raw)


def serialize_question(record: QuestionRecord) -> str:
    return (
        f"<type>{record.question_type.label}</type>\n"
        f"<question>{record.question_text}</question>\n"
        f"<answer>{record.reference_answer}</answer>"
    )


def extract_last_boxed(text: str) -> str | None:
    """Contents of the last brace-balanced ``\\boxed{...}``, or None."""
    marker = "\\boxed{"
    pos = text.rfind(marker)
    while pos != -1:
        start = pos + len(marker)
        depth = 1
        i = start
        while i < len(text):
            ch = text[i]
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start:i]
            i += 1
        pos = text.rfind(marker, 0, pos)
    return None


_NUM = r"(?:\d+(?:\.\d*)?|\.\d+)"
_SEGMENT_RE = re.compile(
    rf"^\s*({_NUM})\s*s?\s*(?:--|-|\u2013|\u2014)\s*({_NUM})\s*s?\s*$"
)
_SEGMENT_TAG_RE = re.compile(r"<segment>(.*?)</segment>", re.IGNORECASE | re.DOTALL)


def parse_segment(text: str) -> Segment | None:
    m = _SEGMENT_RE.match(text)
    if not m:
        return None
    t_s, t_e = float(m.group(1)), float(m.group(2))
    if not (math.isfinite(t_s) and math.isfinite(t_e)) or not 0 <= t_s <= t_e:
        return None
    return Segment(t_s, t_e)


def parse_solver_output(raw: str) -> SolverResponse:
    """Never raises; missing or malformed parts come back as None."""
    boxed = extract_last_boxed(raw)
    answer = None
    if boxed is not None:
        answer = " ".join(boxed.split()) or None
    tags = _SEGMENT_TAG_RE.findall(raw)
    segment = parse_segment(tags[-1]) if tags else None
    return SolverResponse(raw_output=raw, answer=answer, segment=segment)


def format_seconds(x: float) -> str:
    """Plain decimal (never exponent notation) that round-trips through float()."""
    s = format(Decimal(repr(float(x))), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s or "0"


def serialize_solver(response: SolverResponse) -> str:
    parts = []
    if response.answer is not None:
        parts.append(f"\\boxed{{{response.answer}}}")
    if response.segment is not None:
        seg = response.segment
        parts.append(f"<segment>{format_seconds(seg.t_s)}s--{format_seconds(seg.t_e)}s</segment>")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# answer canonicalization


class AnswerKind(str, Enum):
    MULTIPLE_CHOICE = "multiple_choice"
    NUMERICAL = "numerical"
    REGRESSION = "regression"
    FREE_TEXT = "free_text"


@dataclass(frozen=True)
class AnswerKey:
    kind: AnswerKind
    canonical: str
    numeric_value: float | None = None


_LATEX_TEXT_RE = re.compile(r"\\(?:text|textbf|mathrm|mathbf)\{([^{}]*)\}")
_OPTION_RE = re.compile(r"^\(?\s*([A-Da-d])\s*(?:[).:,\]]|\s|$)")
_YESNO_RE = re.compile(r"^(yes|no)\b", re.IGNORECASE)
_OPTION_PREFIX_RE = re.compile(r"^(?:the\s+)?(?:correct\s+)?(?:option|answer|choice)\s*(?:is\s*)?[:\-]?\s*", re.IGNORECASE)
_NUMBER_RE = re.compile(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d*)?(?:[eE][-+]?\d+)?|[-+]?\.\d+(?:[eE][-+]?\d+)?")
_PUNCT_RE = re.compile(r"[^\w\s]", re.UNICODE)


def _strip_latex(text: str) -> str:
    prev = None
    while prev != text:
        prev, text = text, _LATEX_TEXT_RE.sub(r"\1", text)
    return text.replace("$", "").strip()


def _collapse(text: str) -> str:
    return " ".join(text.casefold().split())


def _free_text(text: str) -> AnswerKey:
    return AnswerKey(AnswerKind.FREE_TEXT, " ".join(_PUNCT_RE.sub(" ", text.casefold()).split()))


def canonical_number(x: float) -> str:
    if x == 0:
        return "0"
    s = repr(float(x))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def normalize_answer(text: str, qtype: QuestionType | AnswerKind | str | None) -> AnswerKey:
    """Canonical form used for vote equality.

    Normalizing an already-canonical string with the same type is a no-op,
    so stored pseudo-answers can be re-keyed later.
    """
    kind = AnswerKind(qtype.value if isinstance(qtype, Enum) else (qtype or "free_text"))
    body = _strip_latex(text)
    if kind is AnswerKind.MULTIPLE_CHOICE:
        m = _YESNO_RE.match(body)
        if m:
            return AnswerKey(kind, m.group(1).upper())
        m = _OPTION_RE.match(body) or _OPTION_RE.match(_OPTION_PREFIX_RE.sub("", body, count=1))
        if m:
            return AnswerKey(kind, m.group(1).upper())
        return AnswerKey(kind, _collapse(body))
    if kind in (AnswerKind.NUMERICAL, AnswerKind.REGRESSION):
        m = _NUMBER_RE.search(body)
        if m:
            try:
                value = float(m.group(0).replace(",", ""))
            except ValueError:
                value = math.nan
            if math.isfinite(value):
                return AnswerKey(kind, canonical_number(value), value)
        return _free_text(body)
    return _free_text(body)


ABS_TOL = 1e-9
REL_TOL = {AnswerKind.NUMERICAL: 1e-6, AnswerKind.REGRESSION: 0.05}


def answers_equivalent(a: AnswerKey, b: AnswerKey) -> bool:
    if a.numeric_value is not None and b.numeric_value is not None:
        rel = max(REL_TOL.get(a.kind, 1e-6), REL_TOL.get(b.kind, 1e-6))
        x, y = a.numeric_value, b.numeric_value
        return abs(x - y) <= max(ABS_TOL, rel * max(abs(x), abs(y)))
    return a.canonical == b.canonical
