"""Requests to OpenAI-compatible chat-completions endpoints.

Frames are sent as ``image_url`` parts in the order the ``VideoRef`` holds
them; nothing here reorders frames, since order is the experimental variable.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field
from typing import Callable

import httpx

from .core import VideoRef, dumps, stable_hash64

log = logging.getLogger(__name__)

QUESTIONER_PROMPT = """You are an intelligent Question Generator. Your task is to create a question based on the given video.
Requirements (must follow exactly):
1. Watch the video carefully and understand all details across the frames.
2. Generate exactly one question that is directly related to the video content.
3. Choose the question type from only one of: multiple choice (Yes/No or four options A/B/C/D, one correct), numerical (a specific numeric answer), or regression (a continuous value such as a measurement, quantity, or coordinate).
4. The question must require analysis or reasoning, not just description.
5. Provide the correct answer. Include units if applicable.
6. Output strictly in the three-block format below, with nothing else.
Output format:
<type>X</type>
<question>Y</question>
<answer>Z</answer>
where X ∈ {multiple choice, numerical, regression}."""

SOLVER_SUFFIX = (
    " Please reason step by step based on the question and video, and put your final answer "
    "within \\boxed{}. Additionally, predict the video time segment (in seconds) that is most "
    "relevant to answering this question and output it as <segment>Xs--Ys</segment> "
    "(e.g. <segment>2.5s--5.0s</segment>)."
)


class EndpointUnreachable(RuntimeError):
    """The endpoint could not be contacted at all; the run cannot continue."""


class EndpointError(RuntimeError):
    """The endpoint rejected a request as malformed (4xx other than 429)."""


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key: str | None = None
    timeout_s: float = 120.0
    max_in_flight: int = 32
    max_retries: int = 2
    temperature: float = 1.0
    top_p: float = 1.0
    retry_backoff_s: float = 0.5

    @classmethod
    def for_eval(cls, base_url: str, model_name: str, **kw) -> "EndpointConfig":
        kw.setdefault("temperature", 0.01)
        kw.setdefault("top_p", 0.001)
        return cls(base_url, model_name, **kw)


@dataclass(frozen=True)
class ChatRequest:
    kind: str  # "questioner" | "solver"
    messages: tuple
    n_attachments: int

    def body(self, ep: EndpointConfig, seed: int | None = None, n: int = 1) -> dict:
        b = {
            "model": ep.model_name,
            "messages": list(self.messages),
            "temperature": ep.temperature,
            "top_p": ep.top_p,
            "n": n,
        }
        if seed is not None:
            b["seed"] = seed
        return b


def _frame_parts(video: VideoRef) -> list[dict]:
    return [{"type": "image_url", "image_url": {"url": f.uri}} for f in video.frames]


def build_questioner_request(video: VideoRef) -> ChatRequest:
    content = _frame_parts(video) + [{"type": "text", "text": QUESTIONER_PROMPT}]
    return ChatRequest("questioner", ({"role": "user", "content": content},), len(video))


def solver_prompt(question: str) -> str:
    return question + SOLVER_SUFFIX


def build_solver_request(video: VideoRef, question: str) -> ChatRequest:
    if not question.strip():
        raise ValueError("solver request needs a non-empty question")
    content = _frame_parts(video) + [{"type": "text", "text": solver_prompt(question)}]
    return ChatRequest("solver", ({"role": "user", "content": content},), len(video))


def sample_seed(seed: int, index: int) -> int:
    return stable_hash64("sample", seed, index) & 0x7FFFFFFFFFFFFFFF


_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass
class ChatClient:
    """Bounded concurrent sampler for one endpoint.

    ``max_in_flight`` caps simultaneous HTTP requests across every caller
    sharing this client. ``on_request`` sees ``(tag, request)`` once per
    sampled completion, which is how request audits are collected.
    """

    endpoint: EndpointConfig
    transport: httpx.AsyncBaseTransport | None = None
    on_request: Callable[[str, ChatRequest], None] | None = None
    _client: httpx.AsyncClient | None = field(default=None, init=False, repr=False)
    _sem: asyncio.Semaphore | None = field(default=None, init=False, repr=False)

    def _http(self) -> httpx.AsyncClient:
        if self._client is None:
            headers = {"Content-Type": "application/json"}
            if self.endpoint.api_key:
                headers["Authorization"] = f"Bearer {self.endpoint.api_key}"
            limits = httpx.Limits(max_connections=self.endpoint.max_in_flight)
            self._client = httpx.AsyncClient(
                base_url=self.endpoint.base_url.rstrip("/") + "/",
                headers=headers,
                timeout=self.endpoint.timeout_s,
                transport=self.transport,
                limits=limits,
            )
            self._sem = asyncio.Semaphore(self.endpoint.max_in_flight)
        return self._client

    async def aclose(self) -> None:
        if self._client is not None:
            await self._client.aclose()
            self._client = None

    async def __aenter__(self):
        return self

    async def __aexit__(self, *exc):
        await self.aclose()

    async def _one(self, req: ChatRequest, seed: int) -> str:
        client = self._http()
        payload = dumps(req.body(self.endpoint, seed=seed)).encode("utf-8")
        ep = self.endpoint
        connect_failures = 0
        for attempt in range(ep.max_retries + 1):
            if attempt and ep.retry_backoff_s:
                await asyncio.sleep(ep.retry_backoff_s * 2 ** (attempt - 1))
            try:
                async with self._sem:
                    resp = await client.post("chat/completions", content=payload)
            except httpx.ConnectError as exc:
                connect_failures += 1
                log.debug("connect failure on %s: %s", ep.base_url, exc)
                continue
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                log.debug("transient failure on %s: %s", ep.base_url, exc)
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                continue
            if resp.status_code >= 400:
                raise EndpointError(f"{ep.base_url}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError):
                continue
        if connect_failures == ep.max_retries + 1:
            raise EndpointUnreachable(f"cannot reach {ep.base_url}")
        log.warning("sample failed after %d attempts on %s", ep.max_retries + 1, ep.base_url)
        return ""

    async def sample_completions(self, req: ChatRequest, n: int, seed: int, tag: str = "") -> list[str]:
        """Exactly ``n`` completions in sample-index order.

        A sample that still fails after retries becomes ``""`` (format-invalid)
        so the caller's denominator stays ``n``.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.on_request is not None:
            for _ in range(n):
                self.on_request(tag, req)
        self._http()
        return list(await asyncio.gather(*(self._one(req, sample_seed(seed, i)) for i in range(n))))


@dataclass
class Clients:
    questioner: ChatClient
    solver: ChatClient

    async def aclose(self) -> None:
        await self.questioner.aclose()
        if self.solver is not self.questioner:
            await self.solver.aclose()
