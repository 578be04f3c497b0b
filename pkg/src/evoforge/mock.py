"""Deterministic scripted chat-completions endpoint for offline runs and tests.

The mock reads everything it needs from the request itself:

* role: the questioner prompt starts with a fixed sentence, everything else
  is a solver request;
* frame order: ``mock://<video>/frame/<index>?t=<seconds>`` attachment URIs
  carry the canonical index, so out-of-order indices mean a shuffled clip;
* profile and grounding window: questions the mock writes end with
  ``[[profile:<name>]] [[span:<t_s>-<t_e>]]`` markers, which it reads back
  when the same question reaches it as a solver request.

Responses depend only on ``(seed, request body)``, never on arrival order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import httpx
import numpy as np

from .config import tomllib
from .core import QuestionType, dumps
from .modelclient import QUESTIONER_PROMPT, SOLVER_SUFFIX
from .parse import format_seconds, parse_question_type

log = logging.getLogger(__name__)

SEGMENT_BEHAVIORS = ("echo_window", "fixed", "none")


@dataclass(frozen=True)
class MockProfile:
    question_type: QuestionType = QuestionType.NUMERICAL
    correct_answer: str = "3"
    # weighted wrong answers; empty means a fresh never-matching answer per sample
    distractors: tuple[tuple[str, float], ...] = ()
    p_correct_orig: float = 0.8
    p_correct_shuffled: float = 0.8
    segment_behavior: str = "echo_window"
    fixed_segment: tuple[float, float] | None = None
    questioner_templates: tuple[str, ...] = ("How many objects appear in video {video_id}?",)
    p_questioner_malformed: float = 0.0
    p_solver_malformed: float = 0.0

    def problems(self, name: str) -> list[str]:
        out = []
        for attr in ("p_correct_orig", "p_correct_shuffled", "p_questioner_malformed", "p_solver_malformed"):
            v = getattr(self, attr)
            if not 0 <= v <= 1:
                out.append(f"profiles.{name}.{attr}: {v} outside [0, 1]")
        if self.segment_behavior not in SEGMENT_BEHAVIORS:
            out.append(f"profiles.{name}.segment_behavior: {self.segment_behavior!r} not in {SEGMENT_BEHAVIORS}")
        if self.segment_behavior == "fixed":
            fs = self.fixed_segment
            if fs is None or len(fs) != 2 or not 0 <= fs[0] <= fs[1]:
                out.append(f"profiles.{name}.fixed_segment: need [t_s, t_e] with 0 <= t_s <= t_e")
        if not self.questioner_templates:
            out.append(f"profiles.{name}.questioner_templates: empty")
        if any(w < 0 for _, w in self.distractors) or (self.distractors and not sum(w for _, w in self.distractors) > 0):
            out.append(f"profiles.{name}.distractors: weights must be >= 0 with a positive sum")
        return out


@dataclass(frozen=True)
class MockScript:
    profiles: dict[str, MockProfile]
    # questioner's profile choice when a video has no fixed assignment
    profile_weights: dict[str, float] = field(default_factory=dict)
    video_profiles: dict[str, str] = field(default_factory=dict)

    def problems(self) -> list[str]:
        out = []
        if not self.profiles:
            out.append("profiles: at least one profile is required")
        for name, p in self.profiles.items():
            out.extend(p.problems(name))
        for name in list(self.profile_weights) + list(self.video_profiles.values()):
            if name not in self.profiles:
                out.append(f"unknown profile {name!r}")
        return out

    @classmethod
    def single(cls, name: str = "default", **profile_kw) -> "MockScript":
        return cls({name: MockProfile(**profile_kw)})

    @classmethod
    def from_dict(cls, d: dict) -> "MockScript":
        known = {"profiles", "profile_weights", "video_profiles"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown mock script keys: {sorted(unknown)}")
        profiles = {}
        for name, raw in d.get("profiles", {}).items():
            raw = dict(raw)
            if "question_type" in raw:
                qt = parse_question_type(raw["question_type"]) or QuestionType(raw["question_type"])
                raw["question_type"] = qt
            if "distractors" in raw:
                raw["distractors"] = tuple((str(a), float(w)) for a, w in raw["distractors"])
            if "questioner_templates" in raw:
                raw["questioner_templates"] = tuple(raw["questioner_templates"])
            if raw.get("fixed_segment") is not None:
                raw["fixed_segment"] = tuple(float(x) for x in raw["fixed_segment"])
            profiles[name] = MockProfile(**raw)
        script = cls(
            profiles,
            {k: float(v) for k, v in d.get("profile_weights", {}).items()},
            {str(k): str(v) for k, v in d.get("video_profiles", {}).items()},
        )
        problems = script.problems()
        if problems:
            raise ValueError("invalid mock script:\n  " + "\n  ".join(problems))
        return script


def load_mock_script(path: str | Path) -> MockScript:
    with open(path, "rb") as fh:
        return MockScript.from_dict(tomllib.load(fh))


_FRAME_RE = re.compile(r"^mock://(?P<vid>[^/]+)/frame/(?P<idx>\d+)(?:\?t=(?P<t>[0-9.eE+\-]+))?")
_PROFILE_RE = re.compile(r"\[\[profile:([^\]]+)\]\]")
_SPAN_RE = re.compile(r"\[\[span:([0-9.]+)-([0-9.]+)\]\]")


@dataclass(frozen=True)
class _Frame:
    video_id: str
    index: int
    t: float


def _parse_frames(urls: list[str]) -> list[_Frame]:
    out = []
    for u in urls:
        m = _FRAME_RE.match(u)
        if not m:
            continue
        out.append(_Frame(m.group("vid"), int(m.group("idx")), float(m.group("t") or 0.0)))
    return out


class BadRequest(ValueError):
    pass


class MockEndpoint:
    """Pure request-to-response core of the mock; wrap with a transport or server."""

    def __init__(self, script: MockScript, seed: int = 0):
        problems = script.problems()
        if problems:
            raise ValueError("invalid mock script:\n  " + "\n  ".join(problems))
        self.script = script
        self.seed = int(seed)
        self.log: list[dict] = []
        self._lock = threading.Lock()

    # -- request classification -------------------------------------------------

    @staticmethod
    def _split(body: dict) -> tuple[list[str], str]:
        try:
            msgs = body["messages"]
            urls, texts = [], []
            for msg in msgs:
                content = msg["content"]
                if isinstance(content, str):
                    texts.append(content)
                    continue
                for part in content:
                    if part.get("type") == "image_url":
                        urls.append(part["image_url"]["url"])
                    elif part.get("type") == "text":
                        texts.append(part["text"])
        except (KeyError, TypeError, AttributeError) as exc:
            raise BadRequest(f"malformed messages: {exc}") from exc
        if not texts:
            raise BadRequest("request has no text part")
        return urls, "\n".join(texts)

    def _rng(self, body: dict, choice: int) -> np.random.Generator:
        digest = hashlib.sha256(f"{self.seed}|{choice}|".encode() + dumps(body).encode()).digest()
        return np.random.default_rng(int.from_bytes(digest[:16], "big"))

    def _profile_for_video(self, video_id: str, rng) -> str:
        if video_id in self.script.video_profiles:
            return self.script.video_profiles[video_id]
        weights = self.script.profile_weights
        if not weights:
            return next(iter(self.script.profiles))
        names = list(weights)
        p = np.array([weights[n] for n in names], dtype=float)
        return names[int(rng.choice(len(names), p=p / p.sum()))]

    # -- generation -------------------------------------------------------------

    def _questioner(self, frames: list[_Frame], rng) -> str:
        video_id = frames[0].video_id if frames else "unknown"
        name = self._profile_for_video(video_id, rng)
        prof = self.script.profiles[name]
        ts = min((f.t for f in frames), default=0.0)
        te = max((f.t for f in frames), default=0.0)
        template = prof.questioner_templates[int(rng.integers(len(prof.questioner_templates)))]
        text = template.format(video_id=video_id, t_s=ts, t_e=te)
        question = f"{text} [[profile:{name}]] [[span:{format_seconds(ts)}-{format_seconds(te)}]]"
        if rng.random() < prof.p_questioner_malformed:
            return f"Here is a question about the video: {question}"
        return (
            f"<type>{prof.question_type.label}</type>\n"
            f"<question>{question}</question>\n"
            f"<answer>{prof.correct_answer}</answer>"
        )

    def _distractor(self, prof: MockProfile, rng) -> str:
        if prof.distractors:
            w = np.array([x for _, x in prof.distractors], dtype=float)
            return prof.distractors[int(rng.choice(len(w), p=w / w.sum()))][0]
        k = int(rng.integers(0, 1000))
        if prof.question_type is QuestionType.MULTIPLE_CHOICE:
            return f"option {k} is none of the above"
        # geometric spacing stays outside even the 5% regression band
        return format_seconds(round(1e6 * 1.125**k, 3))

    def _solver(self, frames: list[_Frame], prompt: str, rng) -> str:
        question = prompt[: -len(SOLVER_SUFFIX)] if prompt.endswith(SOLVER_SUFFIX) else prompt
        m = _PROFILE_RE.search(question)
        if m and m.group(1) in self.script.profiles:
            name = m.group(1)
        else:
            name = self._profile_for_video(frames[0].video_id if frames else "", rng)
        prof = self.script.profiles[name]
        shuffled = any(a.index > b.index for a, b in zip(frames, frames[1:]))
        p = prof.p_correct_shuffled if shuffled else prof.p_correct_orig
        correct = rng.random() < p
        answer = prof.correct_answer if correct else self._distractor(prof, rng)
        malformed = rng.random() < prof.p_solver_malformed
        text = "Let me look at the frames in order and reason about the events."
        if malformed:
            return text + f" I think the answer is {answer}."
        text += f" The final answer is \\boxed{{{answer}}}."
        seg = None
        if prof.segment_behavior == "echo_window":
            span = _SPAN_RE.search(question)
            if span:
                seg = (float(span.group(1)), float(span.group(2)))
            elif frames:
                seg = (min(f.t for f in frames), max(f.t for f in frames))
        elif prof.segment_behavior == "fixed":
            seg = prof.fixed_segment
        if seg is not None:
            text += f" <segment>{format_seconds(seg[0])}s--{format_seconds(seg[1])}s</segment>"
        return text

    def complete(self, body: dict) -> dict:
        """Build a chat-completions response dict for a request body."""
        if not isinstance(body, dict) or "messages" not in body:
            raise BadRequest("request body must be an object with 'messages'")
        n = body.get("n", 1)
        if not isinstance(n, int) or n < 1:
            raise BadRequest("n must be a positive integer")
        urls, prompt = self._split(body)
        frames = _parse_frames(urls)
        kind = "questioner" if prompt.startswith(QUESTIONER_PROMPT[:40]) else "solver"
        choices = []
        for i in range(n):
            rng = self._rng(body, i)
            if kind == "questioner":
                content = self._questioner(frames, rng)
            else:
                content = self._solver(frames, prompt, rng)
            choices.append({"index": i, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"})
        shuffled = any(a.index > b.index for a, b in zip(frames, frames[1:]))
        with self._lock:
            self.log.append({"kind": kind, "n_attachments": len(urls), "shuffled": shuffled})
        rid = hashlib.sha256(dumps(body).encode()).hexdigest()[:24]
        return {
            "id": f"chatcmpl-mock-{rid}",
            "object": "chat.completion",
            "created": 0,
            "model": body.get("model", "mock"),
            "choices": choices,
            "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0},
        }

    def handle_bytes(self, raw: bytes) -> tuple[int, dict]:
        try:
            body = json.loads(raw)
            return 200, self.complete(body)
        except (ValueError, BadRequest) as exc:
            return 400, {"error": {"message": str(exc), "type": "invalid_request_error"}}

    # -- adapters ---------------------------------------------------------------

    def transport(self) -> httpx.MockTransport:
        """In-process httpx transport speaking the same wire format as the server."""

        def handler(request: httpx.Request) -> httpx.Response:
            if request.method != "POST" or not request.url.path.endswith("/chat/completions"):
                return httpx.Response(404, json={"error": {"message": "not found"}})
            status, payload = self.handle_bytes(request.content)
            return httpx.Response(status, content=dumps(payload).encode(), headers={"content-type": "application/json"})

        return httpx.MockTransport(handler)


def serve_mock(script: MockScript, seed: int = 0, host: str = "127.0.0.1", port: int = 0):
    """Start the mock on a background thread; returns ``(server, endpoint)``.

    ``server.server_address`` holds the bound port; call ``server.shutdown()``
    to stop it.
    """
    endpoint = MockEndpoint(script, seed)

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _send(self, status: int, payload: dict) -> None:
            data = dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length)
            if not self.path.rstrip("/").endswith("/chat/completions"):
                self._send(404, {"error": {"message": f"no route {self.path}"}})
                return
            self._send(*endpoint.handle_bytes(raw))

        def do_GET(self):
            if self.path.rstrip("/").endswith("/models"):
                self._send(200, {"object": "list", "data": [{"id": "mock", "object": "model"}]})
            else:
                self._send(404, {"error": {"message": f"no route {self.path}"}})

        def log_message(self, fmt, *args):
            log.debug("mock: " + fmt, *args)

    server = ThreadingHTTPServer((host, port), Handler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, endpoint
