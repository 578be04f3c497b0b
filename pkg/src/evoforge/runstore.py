"""Run-directory files: atomic writes, curated datasets, trainer hooks."""

from __future__ import annotations

import json
import os
import tempfile
import time
from pathlib import Path
from typing import Iterable

import httpx

from .core import CuratedExample, dumps


class DatasetFormatError(ValueError):
    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.lineno = lineno


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: Path, records: Iterable[dict]) -> int:
    lines = [dumps(r) + "\n" for r in records]
    atomic_write_text(path, "".join(lines))
    return len(lines)


def read_jsonl(path: Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            if not line.endswith("\n"):
                raise DatasetFormatError(path, lineno, "truncated final line")
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(path, lineno, f"invalid JSON ({exc.msg})") from exc
    return out


def write_dataset(path, examples: Iterable[CuratedExample]) -> int:
    return write_jsonl(Path(path), (e.to_dict() for e in examples))


def read_dataset(path) -> list[CuratedExample]:
    out = []
    for lineno, rec in enumerate(read_jsonl(Path(path)), 1):
        try:
            out.append(CuratedExample.from_dict(rec))
        except (KeyError, ValueError, TypeError) as exc:
            raise DatasetFormatError(path, lineno, f"bad record: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# trainer acknowledgement


class TrainerTimeout(RuntimeError):
    pass


class NoHook:
    def wait(self, batch_path: Path, token: str, info: dict) -> None:
        return None


class FileAckHook:
    """Drops ``<token>.request`` (holding the batch path) into a directory and
    blocks until the trainer creates ``<token>.ack`` next to it."""

    def __init__(self, directory, timeout_s: float, poll_s: float = 0.2):
        self.directory = Path(directory)
        self.timeout_s = timeout_s
        self.poll_s = poll_s

    def wait(self, batch_path: Path, token: str, info: dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        ack = self.directory / f"{token}.ack"
        atomic_write_text(self.directory / f"{token}.request", dumps({"batch": str(batch_path), **info}) + "\n")
        deadline = time.monotonic() + self.timeout_s
        while not ack.exists():
            if time.monotonic() > deadline:
                raise TrainerTimeout(f"no acknowledgement at {ack} within {self.timeout_s}s")
            time.sleep(self.poll_s)


class HttpAckHook:
    """POSTs the batch location to a trainer URL; a 2xx reply is the acknowledgement."""

    def __init__(self, url: str, timeout_s: float):
        self.url = url
        self.timeout_s = timeout_s

    def wait(self, batch_path: Path, token: str, info: dict) -> None:
        try:
            resp = httpx.post(self.url, json={"batch": str(batch_path), "token": token, **info}, timeout=self.timeout_s)
        except httpx.TimeoutException as exc:
            raise TrainerTimeout(f"trainer at {self.url} did not answer within {self.timeout_s}s") from exc
        except httpx.TransportError as exc:
            raise TrainerTimeout(f"trainer at {self.url} unreachable: {exc}") from exc
        if not resp.is_success:
            raise TrainerTimeout(f"trainer at {self.url} refused batch {token}: HTTP {resp.status_code}")


def make_hook(kind: str, target: str, timeout_s: float):
    if kind == "file":
        return FileAckHook(target, timeout_s)
    if kind == "http":
        return HttpAckHook(target, timeout_s)
    return NoHook()
