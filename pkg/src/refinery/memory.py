"""Per-episode refinement memory."""

from __future__ import annotations

from dataclasses import dataclass

from .domain import (
    Aspect,
    Explanation,
    QualitySignal,
    RefinementRecord,
    Reflection,
    ReflectionLevel,
    Trajectory,
)


@dataclass(frozen=True)
class RefinementMemory:
    """Append-only record list; ``append`` returns a new memory."""

    records: tuple[RefinementRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: RefinementRecord) -> RefinementMemory:
        if record.round != len(self.records) + 1:
            raise ValueError(
                f"record round {record.round} does not follow memory of length {len(self.records)}"
            )
        return RefinementMemory(self.records + (record,))

    def trajectory(self) -> Trajectory:
        return Trajectory(tuple(r.aspect for r in self.records))

    def content_reflections_for(self, aspect: Aspect) -> list[Reflection]:
        return [r.content_reflection for r in self.records if r.aspect == aspect]

    @property
    def latest(self) -> RefinementRecord | None:
        return self.records[-1] if self.records else None

    def to_json(self) -> list[dict]:
        return [record_to_json(r) for r in self.records]

    @classmethod
    def from_json(cls, rows: list[dict]) -> RefinementMemory:
        memory = cls()
        for row in rows:
            memory = memory.append(record_from_json(row))
        return memory


def append(memory: RefinementMemory, record: RefinementRecord) -> RefinementMemory:
    return memory.append(record)


def trajectory(memory: RefinementMemory) -> Trajectory:
    return memory.trajectory()


def content_reflections_for(memory: RefinementMemory, aspect: Aspect) -> list[Reflection]:
    return memory.content_reflections_for(aspect)


def signal_to_json(signal: QualitySignal | None) -> dict | None:
    if signal is None:
        return None
    return {"aspect": signal.aspect.label, "name": signal.name, "value": signal.value,
            "description": signal.description}


def signal_from_json(row: dict | None) -> QualitySignal | None:
    if row is None:
        return None
    return QualitySignal(Aspect.from_label(row["aspect"]), row["name"], row["value"],
                         row.get("description", ""))


def record_to_json(r: RefinementRecord) -> dict:
    return {
        "round": r.round,
        "aspect": r.aspect.label,
        "instruction": r.instruction,
        "explanation": r.explanation.text,
        "strategic_reflection": r.strategic_reflection.text,
        "content_reflection": r.content_reflection.text,
        "signal": signal_to_json(r.signal),
    }


def record_from_json(row: dict) -> RefinementRecord:
    t = int(row["round"])
    return RefinementRecord(
        explanation=Explanation(row["explanation"], t),
        aspect=Aspect.from_label(row["aspect"]),
        instruction=row["instruction"],
        strategic_reflection=Reflection(ReflectionLevel.STRATEGIC, t, row["strategic_reflection"]),
        content_reflection=Reflection(ReflectionLevel.CONTENT, t, row["content_reflection"]),
        signal=signal_from_json(row.get("signal")),
    )
