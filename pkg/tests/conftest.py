from __future__ import annotations

import asyncio

import pytest

from evoforge import PipelineConfig, synthetic_video
from evoforge.mock import MockEndpoint, MockScript
from evoforge.pipeline import make_clients_factory


def run(coro):
    return asyncio.run(coro)


class MockRig:
    """A mock endpoint plus a request audit log, wired into client factories."""

    def __init__(self, script: MockScript, seed: int = 0):
        self.endpoint = MockEndpoint(script, seed)
        self.requests: list[tuple[str, int]] = []

    def record(self, tag, req):
        self.requests.append((tag, req.n_attachments))

    def factory(self, cfg: PipelineConfig):
        return make_clients_factory(cfg, on_request=self.record, mock_endpoint=self.endpoint)

    def call(self, cfg, fn, *args, **kw):
        """Run an async pipeline function with fresh clients."""

        async def go():
            clients = self.factory(cfg)()
            try:
                return await fn(*args, clients=clients, **kw)
            finally:
                await clients.aclose()

        return run(go())


@pytest.fixture
def videos16():
    return [synthetic_video(f"v{i:03d}", 16) for i in range(20)]


@pytest.fixture
def fast_cfg():
    return PipelineConfig(max_retries=0, max_workers=64, max_in_flight=64)


# ---------------------------------------------------------------------------
# acceptance verdicts: one line per criterion in the terminal summary

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict(request):
    number = int(request.node.name.split("_")[2])

    def record(detail: str) -> None:
        _VERDICTS[number] = detail

    return record


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in name or rep.when not in ("call", "setup"):
                continue
            n = int(name.split("::")[1].split("_")[2])
            if outcomes.get(n) != "FAIL":
                outcomes[n] = "PASS" if key == "passed" else "FAIL"
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcomes):
        terminalreporter.write_line(f"{outcomes[n]} criterion {n}: {_VERDICTS.get(n, 'no measurement recorded')}")
