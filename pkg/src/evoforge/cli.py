"""Command-line entry point: ``evoforge <command> ...``."""

from __future__ import annotations

import argparse
import asyncio
import csv
import json
import logging
import sys
import time
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config
from .core import dumps, read_videos, synthetic_video, write_videos
from .pipeline import (
    ResumeError,
    RunLayout,
    Runner,
    compute_iteration_metrics,
    make_clients_factory,
    phase2_construct_dataset,
    score_solver_completion,
)
from .runstore import TrainerTimeout, make_hook, read_dataset, read_jsonl, write_dataset, write_jsonl

log = logging.getLogger("evoforge")


def _videos(cfg: PipelineConfig):
    if not cfg.videos:
        raise ConfigError("config key 'videos' (path to a video manifest) is required")
    videos = read_videos(cfg.videos)
    return videos[: cfg.max_videos] if cfg.max_videos else videos


def cmd_run(args) -> int:
    cfg = load_config(args.config, run_id=args.resume or None, max_videos=args.max_videos)
    runner = Runner(
        cfg,
        _videos(cfg),
        make_clients_factory(cfg),
        hook=make_hook(cfg.trainer_hook, cfg.trainer_hook_target, cfg.trainer_timeout_s),
    )
    try:
        state = runner.run(resume=bool(args.resume))
    except TrainerTimeout as exc:
        log.error("%s; resume later with --resume %s", exc, cfg.run_id)
        return 3
    print(f"run {cfg.run_id}: {state.completed}/{len(runner.units)} units complete at {runner.layout.root}")
    return 0


def cmd_curate(args) -> int:
    cfg = load_config(args.config, max_videos=args.max_videos)
    videos = _videos(cfg)
    factory = make_clients_factory(cfg)

    async def go():
        clients = factory()
        try:
            return await phase2_construct_dataset(videos, cfg, clients, args.iteration)
        finally:
            await clients.aclose()

    result = asyncio.run(go())
    out = Path(args.output) if args.output else RunLayout(Path(cfg.run_root) / cfg.run_id).curated_dataset(args.iteration)
    write_dataset(out, result.examples)
    write_jsonl(out.with_name(out.stem + ".candidates.jsonl"), result.candidates)
    print(
        f"kept {result.kept} of {result.attempted} videos "
        f"(skipped {result.skipped_short} shorter than K={cfg.window_length}) -> {out}"
    )
    return 0


def cmd_score(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    examples = {e.example_id: e for e in read_dataset(args.dataset)}
    by_video = {}
    for e in examples.values():
        by_video.setdefault(e.video_id, []).append(e)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    n = 0
    try:
        for lineno, rec in enumerate(read_jsonl(Path(args.input)), 1):
            if "example_id" in rec:
                ex = examples.get(rec["example_id"])
            else:
                matches = by_video.get(rec.get("video_id"), [])
                ex = matches[0] if len(matches) == 1 else None
            if ex is None:
                raise SystemExit(f"{args.input}:{lineno}: no unique curated example for this record")
            rb = score_solver_completion(rec["completion"], ex, cfg)
            out.write(dumps({"example_id": ex.example_id, "reward": rb.to_dict()}) + "\n")
            n += 1
    finally:
        if out is not sys.stdout:
            out.close()
    log.info("scored %d completions", n)
    return 0


def cmd_mock_serve(args) -> int:
    from .mock import load_mock_script, serve_mock

    server, _ = serve_mock(load_mock_script(args.script), seed=args.seed, host=args.host, port=args.port)
    host, port = server.server_address[:2]
    print(f"mock chat-completions endpoint at http://{host}:{port}/v1", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fields = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def cmd_report(args) -> int:
    root = Path(args.run_root) / args.run
    layout = RunLayout(root)
    cfg_path = layout.config
    if not cfg_path.exists():
        raise SystemExit(f"{root} is not a run directory")
    cfg = PipelineConfig(**{**json.loads(cfg_path.read_text()), "run_root": args.run_root, "run_id": args.run})
    steps, curation, hist = [], [], []
    for it in range(1, cfg.iterations + 1):
        if not layout.iter_dir(it).exists():
            break
        m = compute_iteration_metrics(layout, it, cfg)
        for role in ("questioner", "solver"):
            for row in m[f"{role}_steps"]:
                steps.append({"iteration": it, "role": role, **row})
        c = m["curation"]
        curation.append({k: c[k] for k in ("attempted", "scored", "kept", "skipped_short", "yield")} | {"iteration": it})
        for k, cnt in enumerate(c["confidence_histogram"]):
            hist.append({"iteration": it, "kind": "confidence", "lo": c["confidence_edges"][k], "hi": c["confidence_edges"][k + 1], "count": cnt})
        for k, cnt in enumerate(m["iou_histogram"]):
            hist.append({"iteration": it, "kind": "iou", "lo": m["iou_edges"][k], "hi": m["iou_edges"][k + 1], "count": cnt})
        for size, cnt in m["cluster_size_histogram"].items():
            hist.append({"iteration": it, "kind": "cluster_size", "lo": int(size), "hi": int(size), "count": cnt})
    out = Path(args.out) if args.out else root / "report"
    _write_csv(out / "steps.csv", steps)
    _write_csv(out / "curation.csv", curation)
    _write_csv(out / "histograms.csv", hist)

    print(f"{'iter':>4} {'role':<10} {'step':>4} {'n':>5} {'total':>8} {'extra':>40}")
    for r in steps:
        if r["role"] == "questioner":
            extra = f"diff={_f(r['difficulty'])} div={_f(r['diversity_penalty'])} temp={_f(r['temporal_aware'])}"
        else:
            extra = f"acc={_f(r['accuracy'])} fmt={_f(r['format_term'])} iou={_f(r['iou'])}"
        print(f"{r['iteration']:>4} {r['role']:<10} {r['step']:>4} {r['records']:>5} {_f(r['total']):>8} {extra:>40}")
    for c in curation:
        print(f"iteration {c['iteration']}: curated {c['kept']}/{c['scored']} (yield {c['yield']:.3f}, skipped {c['skipped_short']})")
    print(f"CSV written to {out}")
    return 0


def _f(x) -> str:
    return "-" if x is None else f"{x:.4f}"


def cmd_synth_videos(args) -> int:
    videos = [synthetic_video(f"{args.prefix}{i:05d}", args.frames, args.fps) for i in range(args.count)]
    write_videos(args.out, videos)
    print(f"wrote {len(videos)} videos to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evoforge", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run (or resume) the full self-play loop")
    r.add_argument("--config", required=True)
    r.add_argument("--resume", metavar="RUN_ID", help="continue an existing run directory")
    r.add_argument("--max-videos", type=int)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("curate", help="phase 2 only: build a curated solver dataset")
    c.add_argument("--config", required=True)
    c.add_argument("--iteration", type=int, default=1)
    c.add_argument("--output", help="dataset path (default: the run directory's curated dataset)")
    c.add_argument("--max-videos", type=int)
    c.set_defaults(func=cmd_curate)

    s = sub.add_parser("score", help="recompute solver rewards offline")
    s.add_argument("--input", required=True, help="JSONL of {example_id|video_id, completion}")
    s.add_argument("--dataset", required=True, help="curated dataset JSONL")
    s.add_argument("--config", help="config for reward weights (defaults otherwise)")
    s.add_argument("--output")
    s.set_defaults(func=cmd_score)

    m = sub.add_parser("mock-serve", help="serve the scripted mock endpoint over HTTP")
    m.add_argument("--script", required=True)
    m.add_argument("--port", type=int, default=8000)
    m.add_argument("--host", default="127.0.0.1")
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_mock_serve)

    rep = sub.add_parser("report", help="metrics tables and CSV plot data for a run")
    rep.add_argument("--run", required=True, help="run id")
    rep.add_argument("--run-root", default="run")
    rep.add_argument("--out", help="CSV directory (default: <run>/report)")
    rep.set_defaults(func=cmd_report)

    v = sub.add_parser("synth-videos", help="write a manifest of synthetic mock:// videos")
    v.add_argument("--count", type=int, default=20)
    v.add_argument("--frames", type=int, default=16)
    v.add_argument("--fps", type=float, default=1.0)
    v.add_argument("--prefix", default="vid")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_synth_videos)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        logging.getLogger("httpx").setLevel(logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, ResumeError, ValueError) as exc:
        print(f"evoforge: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
