"""Planner, Refiner and the two Reflectors, built as prompts over a backend.

Agents hold no state; every call receives what it needs. Request tags follow
``role#round`` so a scripted backend can drive a full episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .domain import (
    Aspect,
    Explanation,
    PlannerDecision,
    QualitySignal,
    Reflection,
    ReflectionLevel,
    UserGoal,
    enforce_word_limit,
    word_count,
)
from .llm import Backend, ChatRequest, ParseError, call_with_repair
from .memory import RefinementMemory
from .prompts import PromptCatalog

NO_FEEDBACK = "(no feedback yet)"
NO_REFLECTIONS = "(no prior reflections on this aspect)"
NO_TRAJECTORY = "[] (no refinement yet)"


@dataclass(frozen=True)
class AgentSettings:
    catalog: PromptCatalog = field(default_factory=PromptCatalog)
    max_attempts: int = 3
    planner_temperature: float = 0.0
    refiner_temperature: float = 0.0
    reflector_temperature: float = 0.0
    max_output_tokens: int = 512
    scope: str = ""


DEFAULT_SETTINGS = AgentSettings()


def _request(role: str, tag: str, values: dict, settings: AgentSettings, temperature: float) -> ChatRequest:
    system, user = settings.catalog.render(role, values)
    return ChatRequest(
        system_prompt=system,
        user_prompt=user,
        tag=tag,
        temperature=temperature,
        max_output_tokens=settings.max_output_tokens,
        scope=settings.scope,
    )


def render_trajectory(aspects: Sequence[Aspect]) -> str:
    if not aspects:
        return NO_TRAJECTORY
    return "[" + ", ".join(a.label for a in aspects) + "]"


def render_history(memory: RefinementMemory, explanation: Explanation, aspect: Aspect) -> str:
    """One line per round; the current round has no reflections yet."""
    lines = [
        f"Round {r.round} - aspect: {r.aspect.label}; explanation: \"{r.explanation.text}\"; "
        f"strategic reflection: {r.strategic_reflection.text}; "
        f"content reflection: {r.content_reflection.text}"
        for r in memory.records
    ]
    lines.append(
        f"Round {len(memory) + 1} - aspect: {aspect.label}; explanation: \"{explanation.text}\""
    )
    return "\n".join(lines)


def _non_empty_text(value: str) -> str:
    if not value.strip():
        raise ParseError("empty text in model output")
    return value.strip()


def _aspect_code(value: int) -> PlannerDecision:
    if value not in (0, 1, 2, 3):
        raise ParseError(f"aspect code {value} outside 0..3")
    return PlannerDecision.from_code(value)


def planner_request(
    e_prev: Explanation,
    goal: UserGoal,
    trajectory: Sequence[Aspect],
    strategic_prev: Reflection | None,
    content_prev: Reflection | None,
    max_count: int,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> ChatRequest:
    values = {
        "Max_Count": str(max_count),
        "Current_Explanation": e_prev.text,
        "User_Goal": goal.prose,
        "Refinement_Trajectory": render_trajectory(trajectory),
        "Strategic_Reflection": strategic_prev.text if strategic_prev else NO_FEEDBACK,
        "Content_Reflection": content_prev.text if content_prev else NO_FEEDBACK,
    }
    return _request("planner", f"planner#{len(trajectory) + 1}", values, settings,
                    settings.planner_temperature)


def plan(
    backend: Backend,
    e_prev: Explanation,
    goal: UserGoal,
    trajectory: Sequence[Aspect],
    strategic_prev: Reflection | None = None,
    content_prev: Reflection | None = None,
    max_count: int = 6,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> PlannerDecision:
    """Ask the Planner for the next aspect, or for termination."""
    request = planner_request(e_prev, goal, trajectory, strategic_prev, content_prev, max_count, settings)
    return call_with_repair(backend, request, "aspect", settings.max_attempts,
                            expected_type=int, validate=_aspect_code)


def summarize_reflections(
    backend: Backend,
    aspect: Aspect,
    reflections: Sequence[Reflection],
    round_: int,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> str:
    if not reflections:
        return NO_REFLECTIONS
    values = {
        "Refined_Aspect": aspect.label,
        "Reflections": "\n".join(f"Round {r.round}: {r.text}" for r in reflections),
    }
    request = _request("summarizer", f"summarize#{round_}", values, settings,
                       settings.reflector_temperature)
    return call_with_repair(backend, request, "summary", settings.max_attempts,
                            expected_type=str, validate=_non_empty_text)


def refiner_request(
    e_prev: Explanation,
    aspect: Aspect,
    instruction: str,
    summary: str,
    max_length: int,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> ChatRequest:
    values = {
        "Max_Length": str(max_length),
        "Current_Explanation": e_prev.text,
        "Refined_Aspect": aspect.label,
        "Refinement_Instruction": instruction,
        "Summarize_Reflection": summary,
    }
    return _request("refiner", f"refiner#{e_prev.round + 1}", values, settings,
                    settings.refiner_temperature)


def refine(
    backend: Backend,
    e_prev: Explanation,
    aspect: Aspect,
    instruction: str,
    summary: str,
    max_length: int = 20,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> Explanation:
    """Rewrite ``e_prev`` for ``aspect``; the result never exceeds ``max_length`` words.

    An over-long rewrite is sent back once with a length reminder, then
    truncated if still too long.
    """
    request = refiner_request(e_prev, aspect, instruction, summary, max_length, settings)
    text = call_with_repair(backend, request, "explanation", settings.max_attempts,
                            expected_type=str, validate=_non_empty_text)
    if word_count(text) > max_length:
        reminder = request.with_user_note(
            f"Your previous explanation had {word_count(text)} words: \"{text}\"\n"
            f"Rewrite it with no more than {max_length} words."
        )
        text = call_with_repair(backend, reminder, "explanation", settings.max_attempts,
                                expected_type=str, validate=_non_empty_text)
    return Explanation(enforce_word_limit(text, max_length), e_prev.round + 1)


def strategic_request(
    goal: UserGoal,
    memory: RefinementMemory,
    explanation: Explanation,
    aspect: Aspect,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> ChatRequest:
    t = len(memory) + 1
    values = {
        "User_Goal": goal.prose,
        "Refinement_Memory": render_history(memory, explanation, aspect),
        "Time_Step": str(t),
        "Refined_Aspect": aspect.label,
        "Strategy_Criteria": settings.catalog.strategy_criteria,
    }
    return _request("strategic_reflector", f"strategic#{t}", values, settings,
                    settings.reflector_temperature)


def reflect_strategic(
    backend: Backend,
    goal: UserGoal,
    memory: RefinementMemory,
    explanation: Explanation,
    aspect: Aspect,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> Reflection:
    """Critique the aspect trajectory so far, including the round just refined.

    ``memory`` holds the completed rounds; the current round is described by
    ``explanation`` and ``aspect``.
    """
    request = strategic_request(goal, memory, explanation, aspect, settings)
    text = call_with_repair(backend, request, "strategic reflection", settings.max_attempts,
                            expected_type=str, validate=_non_empty_text)
    return Reflection(ReflectionLevel.STRATEGIC, len(memory) + 1, text)


def content_request(
    explanation: Explanation,
    aspect: Aspect,
    instruction: str,
    signal: QualitySignal,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> ChatRequest:
    values = {
        "Current_Explanation": explanation.text,
        "Refined_Aspect": aspect.label,
        "Refinement_Instruction": instruction,
        "Quality_Signal": signal.render(),
        "Content_Criteria": settings.catalog.content_criteria,
    }
    return _request("content_reflector", f"content#{explanation.round}", values, settings,
                    settings.reflector_temperature)


def reflect_content(
    backend: Backend,
    explanation: Explanation,
    aspect: Aspect,
    instruction: str,
    signal: QualitySignal,
    settings: AgentSettings = DEFAULT_SETTINGS,
) -> Reflection:
    request = content_request(explanation, aspect, instruction, signal, settings)
    text = call_with_repair(backend, request, "content reflection", settings.max_attempts,
                            expected_type=str, validate=_non_empty_text)
    return Reflection(ReflectionLevel.CONTENT, explanation.round, text)
