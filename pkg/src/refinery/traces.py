"""Episode trace documents: one JSON file per sample."""

from __future__ import annotations

import json
import re
import threading
from pathlib import Path

import jsonschema

from .domain import EpisodeResult, Explanation, Sample, StopReason, Trajectory, UserGoal, parse_goal
from .memory import record_from_json, record_to_json

_SIGNAL = {
    "type": ["object", "null"],
    "required": ["aspect", "name", "value"],
    "properties": {
        "aspect": {"type": "string"},
        "name": {"enum": ["entail_flag", "feature_count", "coherence_flag"]},
        "value": {"type": "number", "minimum": 0},
        "description": {"type": "string"},
    },
}

TRACE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["user_id", "item_id", "goal", "stop_reason", "rounds", "records"],
    "properties": {
        "user_id": {"type": "string"},
        "item_id": {"type": "string"},
        "goal": {
            "type": "object",
            "required": ["notation", "prose"],
            "properties": {"notation": {"type": "string"}, "prose": {"type": "string"}},
        },
        "stop_reason": {"enum": [s.value for s in StopReason]},
        "rounds": {"type": "integer", "minimum": 0},
        "max_rounds": {"type": "integer", "minimum": 1},
        "predicted_rating": {"type": "number", "minimum": 1, "maximum": 5},
        "initial_explanation": {"type": "string", "minLength": 1},
        "final_explanation": {"type": "string", "minLength": 1},
        "item_title": {"type": "string"},
        "item_category": {"type": "string"},
        "error": {"type": ["string", "null"]},
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["round", "aspect", "instruction", "explanation",
                             "strategic_reflection", "content_reflection", "signal"],
                "properties": {
                    "round": {"type": "integer", "minimum": 1},
                    "aspect": {"enum": ["Factuality", "Personalization", "Sentiment Coherence"]},
                    "instruction": {"type": "string"},
                    "explanation": {"type": "string", "minLength": 1},
                    "strategic_reflection": {"type": "string", "minLength": 1},
                    "content_reflection": {"type": "string", "minLength": 1},
                    "signal": _SIGNAL,
                },
            },
        },
    },
}


def validate_trace(doc: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` is not a valid trace."""
    jsonschema.validate(doc, TRACE_SCHEMA)
    if doc["rounds"] != len(doc["records"]):
        raise jsonschema.ValidationError("rounds does not match number of records")


def trace_to_json(result: EpisodeResult, goal: UserGoal) -> dict:
    s = result.sample
    return {
        "user_id": s.user_id,
        "item_id": s.item_id,
        "goal": {"notation": goal.notation, "prose": goal.prose},
        "stop_reason": result.stop_reason.value,
        "rounds": result.rounds_used,
        "max_rounds": result.max_rounds,
        "predicted_rating": s.predicted_rating,
        "initial_explanation": s.initial_explanation.text,
        "final_explanation": result.final_explanation.text,
        "item_title": s.item_title,
        "item_category": s.item_category,
        "error": result.error,
        "records": [record_to_json(r) for r in result.records],
    }


def trace_from_json(doc: dict) -> tuple[EpisodeResult, UserGoal]:
    validate_trace(doc)
    sample = Sample(
        user_id=doc["user_id"],
        item_id=doc["item_id"],
        predicted_rating=doc.get("predicted_rating", 3.0),
        initial_explanation=Explanation(doc["initial_explanation"], 0),
        item_title=doc.get("item_title", ""),
        item_category=doc.get("item_category", ""),
    )
    records = tuple(record_from_json(r) for r in doc["records"])
    final = records[-1].explanation if records else sample.initial_explanation
    result = EpisodeResult(
        sample=sample,
        final_explanation=final,
        trajectory=Trajectory(tuple(r.aspect for r in records)),
        rounds_used=len(records),
        stop_reason=StopReason(doc["stop_reason"]),
        records=records,
        max_rounds=doc.get("max_rounds", 6),
        error=doc.get("error"),
    )
    return result, parse_goal(doc["goal"]["notation"])


def dumps(doc: dict) -> str:
    return json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


class TraceDirectory:
    """Writes ``<index>_<user>_<item>.json`` files; safe to call from threads."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def filename(self, index: int, result: EpisodeResult) -> str:
        user = _UNSAFE.sub("_", result.sample.user_id)[:40]
        item = _UNSAFE.sub("_", result.sample.item_id)[:40]
        return f"{index:05d}_{user}_{item}.json"

    def write(self, index: int, result: EpisodeResult, goal: UserGoal) -> Path:
        target = self.path / self.filename(index, result)
        text = dumps(trace_to_json(result, goal))
        with self._lock:
            target.write_text(text, encoding="utf-8")
        return target


def load_traces(path: str | Path) -> list[tuple[EpisodeResult, UserGoal]]:
    root = Path(path)
    if not root.is_dir():
        return []
    out = []
    for f in sorted(root.glob("*.json")):
        doc = json.loads(f.read_text(encoding="utf-8"))
        out.append(trace_from_json(doc))
    return out
