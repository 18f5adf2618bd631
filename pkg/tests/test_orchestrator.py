import json

import jsonschema
import pytest

from refinery.domain import Aspect, StopReason
from refinery.llm import ScriptedBackend
from refinery.orchestrator import EpisodeError, Pipeline, run_batch, run_episode
from refinery.traces import TraceDirectory, load_traces, trace_from_json, trace_to_json, validate_trace

from helpers import GOAL, episode_script, make_background, make_sample

F, P, C = Aspect.FACTUALITY, Aspect.PERSONALIZATION, Aspect.SENTIMENT_COHERENCE
FEATURES = frozenset({"broth", "noodles", "service"})


def run(codes, **kw):
    backend = ScriptedBackend(episode_script(codes))
    pipeline = Pipeline(features=FEATURES, **kw)
    return run_episode(make_sample(), GOAL, backend, pipeline, make_background()), backend


def test_three_rounds_then_finish():
    result, backend = run([1, 2, 3, 0])
    assert result.trajectory.aspects == (F, P, C)
    assert result.stop_reason is StopReason.PLANNER_FINISH
    assert result.rounds_used == 3
    assert [r.round for r in result.records] == [1, 2, 3]
    assert result.final_explanation == result.records[-1].explanation
    assert [c.tag.split("#")[0] for c in backend.calls][:6] == [
        "planner", "refiner", "strategic", "entail", "content", "planner",
    ]


def test_immediate_finish():
    result, _ = run([0])
    assert result.rounds_used == 0
    assert result.final_explanation == make_sample().initial_explanation


def test_max_rounds():
    result, backend = run([2] * 6)
    assert result.rounds_used == 6 and result.stop_reason is StopReason.MAX_ROUNDS
    assert len(backend.calls_for("planner#7")) == 0


def test_signals_recorded_per_aspect():
    result, _ = run([1, 2, 3, 0])
    names = [r.signal.name for r in result.records]
    assert names == ["entail_flag", "feature_count", "coherence_flag"]
    assert result.records[1].signal.value == 2


def test_summary_uses_prior_reflections_on_same_aspect():
    _, backend = run([1, 2, 1, 0])
    assert [c.tag for c in backend.calls if c.tag.startswith("summarize")] == ["summarize#3"]
    refiner3 = backend.calls_for("refiner#3")[0].user_prompt
    assert "Summarized Content Reflections on the refined aspect: keep facts grounded" in refiner3


def test_planner_sees_latest_feedback():
    _, backend = run([1, 0])
    user = backend.calls_for("planner#2")[0].user_prompt
    assert "strategies: order matches the goal" in user
    assert "content of explanation: cite one more detail" in user


def test_episode_error_keeps_partial():
    script = episode_script([1, 2])
    backend = ScriptedBackend(script)
    with pytest.raises(EpisodeError) as info:
        run_episode(make_sample(), GOAL, backend, Pipeline(features=FEATURES), make_background())
    partial = info.value.partial
    assert partial.stop_reason is StopReason.ERROR and partial.rounds_used == 2
    assert "script exhausted" in partial.error


def samples3():
    return [make_sample(user=f"u{k}") for k in range(3)]


def batch_script(bad=None):
    script = {}
    for s in samples3():
        codes = [1, 0] if s.user_id != bad else []
        script.update(episode_script(codes, scope=s.key, refined=f"refined for {s.user_id}"))
        if s.user_id == bad:
            script.pop(f"{s.key}/refiner#*")
    return script


def test_batch_parallel_matches_serial():
    serial = run_batch(samples3(), GOAL, ScriptedBackend(batch_script()), Pipeline(features=FEATURES))
    parallel = run_batch(samples3(), GOAL, ScriptedBackend(batch_script()), Pipeline(features=FEATURES),
                         parallelism=3)
    assert serial == parallel
    assert [r.final_explanation.text for r in serial] == ["refined for u0", "refined for u1", "refined for u2"]


def test_batch_isolates_failure():
    results = run_batch(samples3(), GOAL, ScriptedBackend(batch_script(bad="u1")), Pipeline(features=FEATURES))
    assert [r.failed for r in results] == [False, True, False]


def test_batch_empty():
    assert run_batch([], GOAL, ScriptedBackend({})) == []


def test_traces_roundtrip_and_schema(tmp_path):
    sink = TraceDirectory(tmp_path)
    results = run_batch(samples3(), GOAL, ScriptedBackend(batch_script()), Pipeline(features=FEATURES),
                        trace_sink=sink)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["00000_u0_i1.json", "00001_u1_i1.json", "00002_u2_i1.json"]
    loaded = load_traces(tmp_path)
    assert [r for r, _ in loaded] == results
    assert all(g == GOAL for _, g in loaded)


def test_trace_schema_rejects_bad_doc():
    result, _ = run([1, 0])
    doc = trace_to_json(result, GOAL)
    validate_trace(doc)
    assert trace_from_json(json.loads(json.dumps(doc)))[0] == result
    broken = dict(doc, rounds=5)
    with pytest.raises(jsonschema.ValidationError):
        validate_trace(broken)
    with pytest.raises(jsonschema.ValidationError):
        validate_trace(dict(doc, stop_reason="tired"))
