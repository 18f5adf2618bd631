"""Multi-agent refinement of recommendation explanations."""

from .domain import (
    Aspect,
    EpisodeResult,
    Explanation,
    PlannerDecision,
    QualitySignal,
    RefinementRecord,
    Reflection,
    ReflectionLevel,
    Sample,
    StopReason,
    Trajectory,
    UserGoal,
    enforce_word_limit,
    parse_goal,
    render_goal,
)
from .llm import ChatRequest, ChatResponse, OpenAICompatibleBackend, ScriptedBackend
from .orchestrator import Pipeline, run_batch, run_episode

__all__ = [
    "Aspect", "ChatRequest", "ChatResponse", "EpisodeResult", "Explanation",
    "OpenAICompatibleBackend", "Pipeline", "PlannerDecision", "QualitySignal",
    "RefinementRecord", "Reflection", "ReflectionLevel", "Sample", "ScriptedBackend",
    "StopReason", "Trajectory", "UserGoal", "enforce_word_limit", "parse_goal",
    "render_goal", "run_batch", "run_episode",
]
