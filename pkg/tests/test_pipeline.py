import json
import threading
import time

import numpy as np
import pytest

from conftest import MockRig
from evoforge import PipelineConfig, synthetic_video
from evoforge.core import CuratedExample, FrameWindow, QuestionRecord, QuestionType
from evoforge.mock import MockProfile, MockScript
from evoforge.pipeline import (
    ResumeError,
    Runner,
    phase1_questioner_step,
    phase2_construct_dataset,
    phase3_solver_step,
    plan_units,
    score_solver_completion,
    select_step_examples,
)
from evoforge.runstore import DatasetFormatError, FileAckHook, TrainerTimeout, read_dataset, write_dataset


def comps(group):
    return [r.reward for r in group.rollouts]


def test_duplicate_questions_only_earn_temporal_term(fast_cfg, videos16):
    rig = MockRig(MockScript.single(p_correct_orig=0.8, p_correct_shuffled=0.2))
    groups = rig.call(fast_cfg, phase1_questioner_step, videos16[:4], fast_cfg)
    for g in groups:
        for rb in comps(g):
            assert rb.cluster_size == 8
            assert rb.diversity_penalty == pytest.approx(fast_cfg.lambda_d, abs=1e-12)
            assert rb.total == pytest.approx(fast_cfg.lambda_q * rb.temporal_aware, abs=1e-12)
        assert abs(np.mean([r.advantage for r in g.rollouts])) <= 1e-9


def test_temporal_profile_mean(fast_cfg, videos16):
    rig = MockRig(MockScript.single(p_correct_orig=0.8, p_correct_shuffled=0.2))
    cfg = fast_cfg.replace(group_size=2)
    vids = [synthetic_video(f"t{i}", 16) for i in range(25)]
    groups = rig.call(cfg, phase1_questioner_step, vids, cfg)
    temps = [rb.temporal_aware for g in groups for rb in comps(g)]
    assert len(temps) == 50
    assert abs(np.mean(temps) - 0.6) <= 0.1


def test_format_gate_excludes_from_clustering(fast_cfg, videos16):
    rig = MockRig(MockScript.single(p_questioner_malformed=0.5))
    groups = rig.call(fast_cfg, phase1_questioner_step, videos16[:6], fast_cfg)
    n_invalid = 0
    for g in groups:
        rbs = comps(g)
        valid = [rb for rb in rbs if rb.format_gate]
        for rb in rbs:
            if not rb.format_gate:
                n_invalid += 1
                assert rb.total == 0.0 and rb.cluster_size == 0
        # the mock's template is fixed, so every valid question lands in one cluster
        assert all(rb.cluster_size == len(valid) for rb in valid)
    assert n_invalid > 0


def test_phase1_request_shapes(fast_cfg, videos16):
    rig = MockRig(MockScript.single())
    rig.call(fast_cfg, phase1_questioner_step, videos16[:2], fast_cfg)
    tags = {t for t, _ in rig.requests}
    assert tags == {"phase1/questioner", "phase1/solver", "phase1/solver-shuffled"}
    assert all(n == 16 for _, n in rig.requests)
    assert sum(t == "phase1/questioner" for t, _ in rig.requests) == 2 * 8
    assert sum(t == "phase1/solver-shuffled" for t, _ in rig.requests) == 2 * 8 * 10


def test_curation_band_and_short_videos(fast_cfg):
    rig = MockRig(MockScript.single(p_correct_orig=0.6))
    vids = [synthetic_video(f"v{i}", 16) for i in range(60)] + [synthetic_video("short", 5)]
    res = rig.call(fast_cfg, phase2_construct_dataset, vids, fast_cfg)
    assert res.skipped_short == 1 and res.attempted == 61
    assert res.kept > 0
    for ex in res.examples:
        assert 0.3 <= ex.confidence <= 0.8
        assert ex.window.length == 8 and ex.pseudo_answer == "3"
    statuses = {c["status"] for c in res.candidates}
    assert statuses <= {"kept", "out_of_band", "skipped_short", "invalid_question"}
    assert all(n == 8 for t, n in rig.requests if t == "phase2/questioner")


def test_phase3_without_segments_pays_w_or_one(fast_cfg):
    rig = MockRig(MockScript.single(p_correct_orig=0.6, segment_behavior="none"))
    vids = [synthetic_video(f"v{i}", 16) for i in range(30)]
    res = rig.call(fast_cfg, phase2_construct_dataset, vids, fast_cfg)
    by_id = {v.video_id: v for v in vids}
    groups = rig.call(fast_cfg, phase3_solver_step, res.examples, by_id, fast_cfg)
    totals = {round(rb.total, 12) for g in groups for rb in comps(g)}
    assert totals <= {0.1, 1.0} and totals
    assert all(n == 16 for t, n in rig.requests if t == "phase3/solver")


def test_phase3_echo_grounding(fast_cfg):
    rig = MockRig(MockScript.single(p_correct_orig=0.6))
    vids = [synthetic_video(f"v{i}", 16) for i in range(30)]
    res = rig.call(fast_cfg, phase2_construct_dataset, vids, fast_cfg)
    groups = rig.call(fast_cfg, phase3_solver_step, res.examples, {v.video_id: v for v in vids}, fast_cfg)
    for g in groups:
        for rb in comps(g):
            assert rb.iou == 1.0
            assert rb.total == pytest.approx(1.3 if rb.accuracy else 0.1, abs=1e-12)


def _example():
    w = FrameWindow(2, 9, 2.0, 9.0)
    q = QuestionRecord(QuestionType.NUMERICAL, "How many?", "4", w, "")
    return CuratedExample("iter1/v/pass1", "v", w, q, "4", 0.5, 1)


def test_score_solver_completion():
    cfg = PipelineConfig()
    ex = _example()
    rb = score_solver_completion("\\boxed{4} <segment>2s--9s</segment>", ex, cfg)
    assert (rb.accuracy, rb.format_term, rb.iou) == (1, 1, 1.0)
    assert rb.total == pytest.approx(1.3, abs=1e-12)
    rb = score_solver_completion("\\boxed{4} <segment>5.5s--12.5s</segment>", ex, cfg)
    assert rb.iou == pytest.approx(3.5 / 10.5, abs=1e-12)
    assert score_solver_completion("no box", ex, cfg).total == 0.0


def test_select_step_examples_wraps():
    cfg = PipelineConfig(examples_per_step=4)
    data = [_example()] * 3
    assert select_step_examples([], cfg, 1, 1) == []
    assert len(select_step_examples(data, cfg, 1, 2)) == 3


def test_dataset_roundtrip_and_truncation(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(path, [_example(), _example()])
    assert read_dataset(path) == [_example(), _example()]
    text = path.read_text()
    path.write_text(text[:-20])
    with pytest.raises(DatasetFormatError) as err:
        read_dataset(path)
    assert ":2:" in str(err.value)


def small_cfg(tmp_path, **kw):
    base = dict(
        iterations=2,
        steps_per_phase=2,
        videos_per_step=3,
        examples_per_step=3,
        run_root=str(tmp_path),
        run_id="r",
        max_retries=0,
        max_workers=64,
        max_in_flight=64,
    )
    base.update(kw)
    return PipelineConfig(**base)


def script():
    return MockScript.single(p_correct_orig=0.6, p_correct_shuffled=0.3)


def test_plan_units():
    units = plan_units(PipelineConfig(iterations=2, steps_per_phase=3))
    assert len(units) == 2 * (3 + 1 + 3 + 1)
    assert [u.phase for u in units[:8]] == ["questioner"] * 3 + ["curate"] + ["solver"] * 3 + ["metrics"]


def test_run_layout_and_refusals(tmp_path):
    cfg = small_cfg(tmp_path)
    vids = [synthetic_video(f"v{i}", 16) for i in range(8)]
    runner = Runner(cfg, vids, MockRig(script()).factory(cfg))
    runner.run()
    assert runner.done
    root = tmp_path / "r"
    assert (root / "iter2" / "solver" / "batch002.jsonl").exists()
    metrics = json.loads((root / "iter1" / "metrics.json").read_text())
    assert metrics["curation"]["attempted"] == 8
    with pytest.raises(ResumeError):
        Runner(cfg, vids, MockRig(script()).factory(cfg)).run()
    changed = cfg.replace(lambda_q=0.2)
    with pytest.raises(ResumeError):
        Runner(changed, vids, MockRig(script()).factory(changed)).run(resume=True)
    with pytest.raises(ResumeError):
        fresh = cfg.replace(run_id="nothing")
        Runner(fresh, vids, MockRig(script()).factory(fresh)).run(resume=True)


def test_crash_between_write_and_commit_is_redone(tmp_path):
    vids = [synthetic_video(f"v{i}", 16) for i in range(8)]
    ref_cfg = small_cfg(tmp_path / "a")
    Runner(ref_cfg, vids, MockRig(script()).factory(ref_cfg)).run()

    cfg = small_cfg(tmp_path / "b")

    class Crash(Exception):
        pass

    def fault(event, unit):
        if event == "written" and unit.token == "iter1-solver-001":
            raise Crash

    with pytest.raises(Crash):
        Runner(cfg, vids, MockRig(script()).factory(cfg), fault=fault).run()
    Runner(cfg, vids, MockRig(script()).factory(cfg)).run(resume=True)
    a, b = tmp_path / "a" / "r", tmp_path / "b" / "r"
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    assert all((a / f).read_bytes() == (b / f).read_bytes() for f in files_a)


def test_file_hook_blocks_until_ack(tmp_path):
    cfg = small_cfg(tmp_path, iterations=1, steps_per_phase=1)
    vids = [synthetic_video(f"v{i}", 16) for i in range(4)]
    ack_dir = tmp_path / "acks"
    seen = []

    def trainer():
        deadline = time.monotonic() + 20
        while time.monotonic() < deadline and len(seen) < 2:
            for req in sorted(ack_dir.glob("*.request")) if ack_dir.exists() else []:
                if req.stem not in seen:
                    seen.append(req.stem)
                    (ack_dir / f"{req.stem}.ack").touch()
            time.sleep(0.02)

    t = threading.Thread(target=trainer)
    t.start()
    Runner(cfg, vids, MockRig(script()).factory(cfg), hook=FileAckHook(ack_dir, 20, 0.01)).run()
    t.join()
    assert seen == ["iter1-questioner-001", "iter1-solver-001"]


def test_file_hook_timeout_leaves_resumable_state(tmp_path):
    cfg = small_cfg(tmp_path, iterations=1, steps_per_phase=1)
    vids = [synthetic_video(f"v{i}", 16) for i in range(4)]
    runner = Runner(cfg, vids, MockRig(script()).factory(cfg), hook=FileAckHook(tmp_path / "acks", 0.05, 0.01))
    with pytest.raises(TrainerTimeout):
        runner.run()
    state = json.loads((tmp_path / "r" / "state.json").read_text())
    assert state["completed_units"] == 0
    Runner(cfg, vids, MockRig(script()).factory(cfg)).run(resume=True)
    assert json.loads((tmp_path / "r" / "state.json").read_text())["completed_units"] == 4


def test_mixed_profiles_by_video(fast_cfg):
    s = MockScript(
        {"a": MockProfile(correct_answer="1"), "b": MockProfile(correct_answer="2")},
        video_profiles={"v0": "a", "v1": "b"},
    )
    rig = MockRig(s)
    vids = [synthetic_video("v0", 16), synthetic_video("v1", 16)]
    cfg = fast_cfg.replace(score_band=(0.0, 1.0))
    res = rig.call(cfg, phase2_construct_dataset, vids, cfg)
    assert {e.video_id: e.pseudo_answer for e in res.examples} == {"v0": "1", "v1": "2"}
