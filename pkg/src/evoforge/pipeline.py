"""The co-evolution loop: questioner rollouts, curation, solver rollouts.

A run is a flat sequence of units (one per emitted batch, curated dataset or
metrics file). ``state.json`` names the last completed unit, and every unit's
RNG is keyed on its position, so a resumed run rewrites exactly the files an
uninterrupted run would have written.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .config import PipelineConfig
from .core import (
    CuratedExample,
    QuestionRecord,
    QuestionType,
    RewardBreakdown,
    Role,
    VideoRef,
    dumps,
    fork_rng,
)
from .grpo import Rollout, RolloutGroup, batch_records
from .modelclient import Clients, build_questioner_request, build_solver_request
from .parse import (
    AnswerKey,
    answers_equivalent,
    normalize_answer,
    parse_questioner_output,
    parse_solver_output,
)
from .perturb import VideoTooShort, apply_permutation, make_permutation, sample_window
from .rewards import (
    confidence,
    difficulty_reward,
    interval_iou,
    majority_vote,
    questioner_total,
    solver_total,
    temporal_aware_reward,
)
from .runstore import NoHook, atomic_write_text, read_dataset, read_jsonl, write_dataset, write_jsonl
from .textsim import average_linkage_cluster, similarity_matrix

log = logging.getLogger(__name__)

_SEED_MAX = 2**63


def _seed(rng) -> int:
    return int(rng.integers(0, _SEED_MAX))


async def _bounded(limit: int, coros):
    sem = asyncio.Semaphore(limit)

    async def run(c):
        async with sem:
            return await c

    return await asyncio.gather(*(run(c) for c in coros))


# ---------------------------------------------------------------------------
# reward scoring (pure; shared by the loop and the offline ``score`` command)


def answer_keys(completions: Sequence[str], qtype: QuestionType) -> list[AnswerKey | None]:
    keys = []
    for c in completions:
        ans = parse_solver_output(c).answer
        keys.append(normalize_answer(ans, qtype) if ans is not None else None)
    return keys


def vote(completions: Sequence[str], qtype: QuestionType) -> tuple[AnswerKey | None, float, list]:
    """Pseudo-label and confidence; invalid samples count against agreement."""
    keys = answer_keys(completions, qtype)
    pseudo, _ = majority_vote(keys)
    return pseudo, confidence(keys, pseudo), keys


def score_solver_completion(completion: str, example: CuratedExample, cfg: PipelineConfig) -> RewardBreakdown:
    resp = parse_solver_output(completion)
    qtype = example.question.question_type
    fmt = int(resp.format_valid_answer)
    acc = 0
    if resp.answer is not None:
        acc = int(answers_equivalent(normalize_answer(resp.answer, qtype), normalize_answer(example.pseudo_answer, qtype)))
    iou = interval_iou(resp.segment, example.window.segment) if resp.segment is not None else 0.0
    total = solver_total(acc, fmt, iou, cfg.format_weight, cfg.lambda_s)
    return RewardBreakdown(Role.SOLVER, total, accuracy=acc, format_term=fmt, iou=iou)


# ---------------------------------------------------------------------------
# phase 1


async def _questioner_group(
    video: VideoRef, cfg: PipelineConfig, clients: Clients, iteration: int, step: int
) -> RolloutGroup:
    key = (iteration, "questioner", step, video.video_id)
    rng = fork_rng(cfg.rng_seed, *key)
    outputs = await clients.questioner.sample_completions(
        build_questioner_request(video), cfg.group_size, _seed(rng), tag="phase1/questioner"
    )
    parsed = [parse_questioner_output(o) for o in outputs]
    valid = [i for i, p in enumerate(parsed) if isinstance(p, QuestionRecord)]

    async def judge(i: int):
        rec: QuestionRecord = parsed[i]
        qrng = fork_rng(cfg.rng_seed, *key, i)
        orig_seed, shuf_seed = _seed(qrng), _seed(qrng)
        perm = make_permutation(len(video), cfg.shuffle_strategy, qrng)
        shuffled = apply_permutation(video, perm)
        orig, shuf = await asyncio.gather(
            clients.solver.sample_completions(
                build_solver_request(video, rec.question_text), cfg.solver_samples, orig_seed, tag="phase1/solver"
            ),
            clients.solver.sample_completions(
                build_solver_request(shuffled, rec.question_text),
                cfg.solver_samples,
                shuf_seed,
                tag="phase1/solver-shuffled",
            ),
        )
        pseudo, s_orig, _ = vote(orig, rec.question_type)
        # the shuffled pass is scored against the unshuffled pseudo-label
        s_shuf = confidence(answer_keys(shuf, rec.question_type), pseudo)
        return s_orig, s_shuf

    judged = dict(zip(valid, await asyncio.gather(*(judge(i) for i in valid))))

    clustering = None
    if valid:
        sim = similarity_matrix([parsed[i].question_text for i in valid])
        clustering = average_linkage_cluster(sim, cfg.tau_bleu)

    rollouts = []
    for i, out in enumerate(outputs):
        if i not in judged:
            rollouts.append(Rollout(out, RewardBreakdown(Role.QUESTIONER, 0.0)))
            continue
        s_orig, s_shuf = judged[i]
        size = clustering.size_of(valid.index(i))
        diff = difficulty_reward(s_orig)
        div = cfg.lambda_d * size / cfg.group_size
        temp = temporal_aware_reward(s_orig, s_shuf)
        rb = RewardBreakdown(
            Role.QUESTIONER,
            questioner_total(1, diff, div, temp, cfg.lambda_q),
            format_gate=1,
            difficulty=diff,
            diversity_penalty=div,
            temporal_aware=temp,
            confidence=s_orig,
            shuffled_confidence=s_shuf,
            cluster_size=size,
        )
        rollouts.append(Rollout(out, rb))
    group = RolloutGroup(
        group_id=f"iter{iteration}/questioner/step{step}/{video.video_id}",
        role=Role.QUESTIONER,
        prompt_ref=f"video:{video.video_id}",
        rollouts=tuple(rollouts),
        iteration=iteration,
        phase_step=step,
    )
    return group.with_advantages(cfg.advantage_epsilon)


def select_step_videos(videos: Sequence[VideoRef], cfg: PipelineConfig, iteration: int, step: int) -> list[VideoRef]:
    pool = [v for v in videos if len(v) >= 2]
    if not pool:
        return []
    rng = fork_rng(cfg.rng_seed, iteration, "questioner-select", step)
    k = min(cfg.videos_per_step, len(pool))
    return [pool[int(i)] for i in rng.choice(len(pool), size=k, replace=False)]


async def phase1_questioner_step(
    videos: Sequence[VideoRef], cfg: PipelineConfig, clients: Clients, iteration: int = 1, step: int = 1
) -> list[RolloutGroup]:
    """One questioner step over the given batch of videos (all of them)."""
    return list(
        await _bounded(cfg.max_workers, [_questioner_group(v, cfg, clients, iteration, step) for v in videos])
    )


# ---------------------------------------------------------------------------
# phase 2


@dataclass
class CurationResult:
    examples: list[CuratedExample]
    candidates: list[dict]
    skipped_short: int = 0

    @property
    def attempted(self) -> int:
        return len(self.candidates)

    @property
    def kept(self) -> int:
        return len(self.examples)

    @property
    def yield_rate(self) -> float:
        scored = [c for c in self.candidates if c["status"] != "skipped_short"]
        return self.kept / len(scored) if scored else 0.0


async def _curate_one(video: VideoRef, cfg: PipelineConfig, clients: Clients, iteration: int, pass_index: int):
    example_id = f"iter{iteration}/{video.video_id}/pass{pass_index}"
    cand = {"example_id": example_id, "video_id": video.video_id}
    rng = fork_rng(cfg.rng_seed, iteration, "curate", pass_index, video.video_id)
    try:
        window = sample_window(video, cfg.window_length, rng)
    except VideoTooShort:
        return None, {**cand, "status": "skipped_short", "confidence": None}
    clip = video.clip(window)
    (q_out,) = await clients.questioner.sample_completions(
        build_questioner_request(clip), 1, _seed(rng), tag="phase2/questioner"
    )
    rec = parse_questioner_output(q_out)
    if not isinstance(rec, QuestionRecord):
        return None, {**cand, "status": "invalid_question", "confidence": None, "reason": rec.code.value}
    answers = await clients.solver.sample_completions(
        build_solver_request(video, rec.question_text), cfg.solver_samples, _seed(rng), tag="phase2/solver"
    )
    pseudo, s, _ = vote(answers, rec.question_type)
    kept = pseudo is not None and cfg.s_min <= s <= cfg.s_max
    cand = {**cand, "status": "kept" if kept else "out_of_band", "confidence": s}
    if not kept:
        return None, cand
    example = CuratedExample(
        example_id=example_id,
        video_id=video.video_id,
        window=window,
        question=QuestionRecord(rec.question_type, rec.question_text, rec.reference_answer, window, rec.raw_output),
        pseudo_answer=pseudo.canonical,
        confidence=s,
        iteration=iteration,
    )
    return example, cand


async def phase2_construct_dataset(
    videos: Sequence[VideoRef], cfg: PipelineConfig, clients: Clients, iteration: int = 1
) -> CurationResult:
    """One windowed question per video (per pass); keep those inside the score band."""
    jobs = [
        _curate_one(v, cfg, clients, iteration, p) for p in range(1, cfg.curation_passes + 1) for v in videos
    ]
    results = await _bounded(cfg.max_workers, jobs)
    examples = [ex for ex, _ in results if ex is not None]
    candidates = [c for _, c in results]
    skipped = sum(1 for c in candidates if c["status"] == "skipped_short")
    if skipped:
        log.info("iteration %d: skipped %d videos shorter than K=%d", iteration, skipped, cfg.window_length)
    return CurationResult(examples, candidates, skipped)


# ---------------------------------------------------------------------------
# phase 3


async def _solver_group(
    example: CuratedExample, video: VideoRef, cfg: PipelineConfig, clients: Clients, iteration: int, step: int
) -> RolloutGroup:
    rng = fork_rng(cfg.rng_seed, iteration, "solver", step, example.example_id)
    outputs = await clients.solver.sample_completions(
        build_solver_request(video, example.question.question_text), cfg.group_size, _seed(rng), tag="phase3/solver"
    )
    rollouts = tuple(Rollout(o, score_solver_completion(o, example, cfg)) for o in outputs)
    group = RolloutGroup(
        group_id=f"iter{iteration}/solver/step{step}/{example.example_id}",
        role=Role.SOLVER,
        prompt_ref=f"example:{example.example_id}",
        rollouts=rollouts,
        iteration=iteration,
        phase_step=step,
    )
    return group.with_advantages(cfg.advantage_epsilon)


def select_step_examples(
    dataset: Sequence[CuratedExample], cfg: PipelineConfig, iteration: int, step: int
) -> list[CuratedExample]:
    """Minibatch ``step`` of a seeded pass over the dataset, wrapping around."""
    if not dataset:
        return []
    order = fork_rng(cfg.rng_seed, iteration, "solver-order").permutation(len(dataset))
    k = min(cfg.examples_per_step, len(dataset))
    start = (step - 1) * k
    return [dataset[int(order[(start + j) % len(dataset)])] for j in range(k)]


async def phase3_solver_step(
    dataset: Sequence[CuratedExample],
    videos_by_id: dict[str, VideoRef],
    cfg: PipelineConfig,
    clients: Clients,
    iteration: int = 1,
    step: int = 1,
) -> list[RolloutGroup]:
    """G solver rollouts on the full video for every example in ``dataset``."""
    jobs = [_solver_group(ex, videos_by_id[ex.video_id], cfg, clients, iteration, step) for ex in dataset]
    return list(await _bounded(cfg.max_workers, jobs))


# ---------------------------------------------------------------------------
# run directory and state machine


@dataclass(frozen=True)
class Unit:
    iteration: int
    phase: str  # questioner | curate | solver | metrics
    step: int

    @property
    def token(self) -> str:
        return f"iter{self.iteration}-{self.phase}-{self.step:03d}"


def plan_units(cfg: PipelineConfig) -> list[Unit]:
    units = []
    for it in range(1, cfg.iterations + 1):
        units += [Unit(it, "questioner", s) for s in range(1, cfg.steps_per_phase + 1)]
        units.append(Unit(it, "curate", 1))
        units += [Unit(it, "solver", s) for s in range(1, cfg.steps_per_phase + 1)]
        units.append(Unit(it, "metrics", 1))
    return units


_UNTRACKED = ("run_root", "run_id", "videos", "mock_script", "trainer_hook", "trainer_hook_target", "trainer_timeout_s")


def config_digest(cfg: PipelineConfig) -> str:
    d = {k: v for k, v in cfg.to_dict().items() if k not in _UNTRACKED}
    return hashlib.sha256(dumps(d).encode()).hexdigest()


class RunLayout:
    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def state(self) -> Path:
        return self.root / "state.json"

    @property
    def config(self) -> Path:
        return self.root / "config.json"

    def iter_dir(self, it: int) -> Path:
        return self.root / f"iter{it}"

    def questioner_batch(self, it: int, step: int) -> Path:
        return self.iter_dir(it) / "questioner" / f"batch{step:03d}.jsonl"

    def solver_batch(self, it: int, step: int) -> Path:
        return self.iter_dir(it) / "solver" / f"batch{step:03d}.jsonl"

    def curated_dir(self, it: int) -> Path:
        return self.iter_dir(it) / "curated"

    def curated_dataset(self, it: int) -> Path:
        return self.curated_dir(it) / "dataset.jsonl"

    def metrics(self, it: int) -> Path:
        return self.iter_dir(it) / "metrics.json"


class ResumeError(RuntimeError):
    pass


@dataclass
class RunState:
    run_id: str
    completed: int = 0  # number of units done
    iteration: int = 1
    phase: str = "questioner"
    step: int = 0
    config_digest: str = ""
    files: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "completed_units": self.completed,
            "iteration": self.iteration,
            "phase": self.phase,
            "step": self.step,
            "config_digest": self.config_digest,
            "files": self.files,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunState":
        return cls(
            run_id=d["run_id"],
            completed=int(d["completed_units"]),
            iteration=int(d["iteration"]),
            phase=d["phase"],
            step=int(d["step"]),
            config_digest=d["config_digest"],
            files=list(d["files"]),
        )


def _pretty(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


class Runner:
    """Drives a run directory through every unit of work.

    ``fault`` is called with ``(event, unit)`` for ``"written"`` (outputs on
    disk, state not yet advanced) and ``"committed"``; raising from it
    simulates a crash at that boundary.
    """

    def __init__(
        self,
        cfg: PipelineConfig,
        videos: Sequence[VideoRef],
        clients_factory: Callable[[], Clients],
        hook=None,
        fault: Callable[[str, Unit], None] | None = None,
    ):
        self.cfg = cfg
        self.videos = list(videos)[: cfg.max_videos] if cfg.max_videos else list(videos)
        self.videos_by_id = {v.video_id: v for v in self.videos}
        if len(self.videos_by_id) != len(self.videos):
            raise ValueError("duplicate video ids in the manifest")
        self.clients_factory = clients_factory
        self.hook = hook or NoHook()
        self.fault = fault
        self.layout = RunLayout(Path(cfg.run_root) / cfg.run_id)
        self.units = plan_units(cfg)

    # -- state ------------------------------------------------------------------

    def load_state(self, resume: bool) -> RunState:
        digest = config_digest(self.cfg)
        if self.layout.state.exists():
            if not resume:
                raise ResumeError(f"{self.layout.root} already has a run; continue it with --resume {self.cfg.run_id}")
            state = RunState.from_dict(json.loads(self.layout.state.read_text(encoding="utf-8")))
            if state.config_digest != digest:
                raise ResumeError("config changed since the run started; refusing to resume")
            return state
        if resume:
            raise ResumeError(f"nothing to resume at {self.layout.root}")
        state = RunState(self.cfg.run_id, config_digest=digest)
        snapshot = {k: v for k, v in self.cfg.to_dict().items() if k not in _UNTRACKED}
        atomic_write_text(self.layout.config, _pretty(snapshot))
        atomic_write_text(self.layout.state, _pretty(state.to_dict()))
        return state

    def _commit(self, state: RunState, unit: Unit, files: list[Path]) -> None:
        state.completed += 1
        state.iteration, state.phase, state.step = unit.iteration, unit.phase, unit.step
        for f in files:
            rel = str(f.relative_to(self.layout.root))
            if rel not in state.files:
                state.files.append(rel)
        atomic_write_text(self.layout.state, _pretty(state.to_dict()))

    # -- units ------------------------------------------------------------------

    def _emit(self, path: Path, groups: list[RolloutGroup]) -> int:
        return write_jsonl(path, batch_records(groups, self.cfg.kl_coeff))

    async def _do(self, unit: Unit, clients: Clients) -> list[Path]:
        cfg, L, it = self.cfg, self.layout, unit.iteration
        if unit.phase == "questioner":
            videos = select_step_videos(self.videos, cfg, it, unit.step)
            groups = await phase1_questioner_step(videos, cfg, clients, it, unit.step)
            path = L.questioner_batch(it, unit.step)
            self._emit(path, groups)
            return [path]
        if unit.phase == "curate":
            result = await phase2_construct_dataset(self.videos, cfg, clients, it)
            d = L.curated_dir(it)
            write_dataset(d / "dataset.jsonl", result.examples)
            write_jsonl(d / "candidates.jsonl", result.candidates)
            manifest = {
                "iteration": it,
                "questioner_model": cfg.questioner_model,
                "solver_model": cfg.solver_model,
                "attempted": result.attempted,
                "kept": result.kept,
                "skipped_short": result.skipped_short,
                "invalid_question": sum(1 for c in result.candidates if c["status"] == "invalid_question"),
                "score_band": list(cfg.score_band),
            }
            atomic_write_text(d / "manifest.json", _pretty(manifest))
            return [d / "dataset.jsonl", d / "candidates.jsonl", d / "manifest.json"]
        if unit.phase == "solver":
            dataset = read_dataset(L.curated_dataset(it))
            batch = select_step_examples(dataset, cfg, it, unit.step)
            if not batch:
                log.warning("iteration %d: curated dataset is empty; solver step %d emits nothing", it, unit.step)
            groups = await phase3_solver_step(batch, self.videos_by_id, cfg, clients, it, unit.step)
            path = L.solver_batch(it, unit.step)
            self._emit(path, groups)
            return [path]
        if unit.phase == "metrics":
            path = L.metrics(it)
            atomic_write_text(path, _pretty(compute_iteration_metrics(L, it, cfg)))
            return [path]
        raise ValueError(f"unknown phase {unit.phase!r}")

    async def run_async(self, resume: bool = False, max_units: int | None = None) -> RunState:
        state = self.load_state(resume)
        todo = self.units[state.completed :]
        if max_units is not None:
            todo = todo[:max_units]
        clients = self.clients_factory()
        try:
            for unit in todo:
                files = await self._do(unit, clients)
                if self.fault:
                    self.fault("written", unit)
                if unit.phase in ("questioner", "solver"):
                    self.hook.wait(
                        files[0],
                        unit.token,
                        {"iteration": unit.iteration, "phase": unit.phase, "step": unit.step},
                    )
                self._commit(state, unit, files)
                log.info("completed %s", unit.token)
                if self.fault:
                    self.fault("committed", unit)
        finally:
            await clients.aclose()
        return state

    def run(self, resume: bool = False, max_units: int | None = None) -> RunState:
        return asyncio.run(self.run_async(resume, max_units))

    @property
    def done(self) -> bool:
        if not self.layout.state.exists():
            return False
        return json.loads(self.layout.state.read_text())["completed_units"] == len(self.units)


async def run_iteration(runner: Runner, state: RunState, clients: Clients) -> RunState:
    """Run every remaining unit of ``state``'s current iteration."""
    it = state.iteration if state.phase != "metrics" else state.iteration + 1
    for unit in runner.units[state.completed :]:
        if unit.iteration != it:
            break
        files = await runner._do(unit, clients)
        if unit.phase in ("questioner", "solver"):
            runner.hook.wait(files[0], unit.token, {"iteration": unit.iteration, "phase": unit.phase, "step": unit.step})
        runner._commit(state, unit, files)
    return state


# ---------------------------------------------------------------------------
# metrics (a cache: always recomputed from the files on disk)


def _mean(xs) -> float | None:
    xs = list(xs)
    return math.fsum(xs) / len(xs) if xs else None


def _hist(values, edges: Sequence[float]) -> list[int]:
    counts = [0] * (len(edges) - 1)
    for v in values:
        for k in range(len(edges) - 1):
            last = k == len(edges) - 2
            if edges[k] <= v < edges[k + 1] or (last and v == edges[-1]):
                counts[k] += 1
                break
    return counts


QUESTIONER_COMPONENTS = ("total", "format_gate", "difficulty", "diversity_penalty", "temporal_aware", "confidence", "shuffled_confidence")
SOLVER_COMPONENTS = ("total", "accuracy", "format_term", "iou")


def compute_iteration_metrics(layout: RunLayout, it: int, cfg: PipelineConfig) -> dict:
    steps = {"questioner": [], "solver": []}
    cluster_sizes: Counter = Counter()
    ious = []
    for role, comps, pathfn in (
        ("questioner", QUESTIONER_COMPONENTS, layout.questioner_batch),
        ("solver", SOLVER_COMPONENTS, layout.solver_batch),
    ):
        for s in range(1, cfg.steps_per_phase + 1):
            p = pathfn(it, s)
            if not p.exists():
                continue
            recs = read_jsonl(p)
            row = {"step": s, "records": len(recs)}
            for c in comps:
                row[c] = _mean(r["reward_components"][c] for r in recs)
            steps[role].append(row)
            for r in recs:
                rc = r["reward_components"]
                if role == "questioner" and rc["format_gate"]:
                    cluster_sizes[rc["cluster_size"]] += 1
                if role == "solver":
                    ious.append(rc["iou"])
    cand_path = layout.curated_dir(it) / "candidates.jsonl"
    candidates = read_jsonl(cand_path) if cand_path.exists() else []
    scored = [c for c in candidates if c["status"] != "skipped_short"]
    kept = [c for c in candidates if c["status"] == "kept"]
    conf_edges = [k / 10 for k in range(11)]
    iou_edges = [k / 10 for k in range(11)]
    return {
        "iteration": it,
        "questioner_steps": steps["questioner"],
        "solver_steps": steps["solver"],
        "curation": {
            "attempted": len(candidates),
            "scored": len(scored),
            "kept": len(kept),
            "skipped_short": len(candidates) - len(scored),
            "yield": len(kept) / len(scored) if scored else 0.0,
            "confidence_edges": conf_edges,
            "confidence_histogram": _hist([c["confidence"] for c in scored if c["confidence"] is not None], conf_edges),
        },
        "cluster_size_histogram": {str(k): cluster_sizes[k] for k in sorted(cluster_sizes)},
        "iou_edges": iou_edges,
        "iou_histogram": _hist(ious, iou_edges),
    }


API_KEY_ENV = "EVOFORGE_API_KEY"


def make_clients_factory(cfg: PipelineConfig, on_request=None, mock_endpoint=None) -> Callable[[], Clients]:
    """Client factory for a run.

    With ``mock_endpoint`` (or ``cfg.mock_script``) both roles are served
    in-process over an httpx mock transport; otherwise requests go to the
    configured base URLs, authenticated with ``$EVOFORGE_API_KEY`` if set.
    """
    from .modelclient import ChatClient, EndpointConfig

    if mock_endpoint is None and cfg.mock_script:
        from .mock import MockEndpoint, load_mock_script

        mock_endpoint = MockEndpoint(load_mock_script(cfg.mock_script), cfg.mock_seed)
    api_key = os.environ.get(API_KEY_ENV)

    def endpoint(base_url: str, model: str) -> EndpointConfig:
        return EndpointConfig(
            base_url=base_url if mock_endpoint is None else "http://mock/v1",
            model_name=model,
            api_key=api_key,
            timeout_s=cfg.timeout_s,
            max_in_flight=cfg.max_in_flight,
            max_retries=cfg.max_retries,
            temperature=cfg.temperature,
            top_p=cfg.top_p,
        )

    def factory() -> Clients:
        transport = mock_endpoint.transport() if mock_endpoint is not None else None
        q = ChatClient(endpoint(cfg.questioner_base_url, cfg.questioner_model), transport, on_request)
        s = ChatClient(endpoint(cfg.solver_base_url, cfg.solver_model), transport, on_request)
        return Clients(q, s)

    return factory
