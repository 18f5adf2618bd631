"""The refinement loop for one sample, and batches of them."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import agents
from .aspects import DEFAULT_MATERIALS, AspectLibrary, BackgroundMemory
from .config import PipelineConfig
from .domain import (
    EpisodeResult,
    Explanation,
    RefinementRecord,
    Sample,
    StopReason,
    UserGoal,
)
from .llm import Backend
from .memory import RefinementMemory
from .prompts import PromptCatalog

log = logging.getLogger(__name__)


class EpisodeError(RuntimeError):
    """An agent or backend failure aborted an episode.

    ``partial`` holds the rounds completed before the failure.
    """

    def __init__(self, message: str, partial: EpisodeResult):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class Pipeline:
    """Everything run_episode needs besides the sample and backend."""

    max_rounds: int = 6
    max_length: int = 20
    library: AspectLibrary = field(default_factory=AspectLibrary)
    settings: agents.AgentSettings = field(default_factory=agents.AgentSettings)
    features: frozenset[str] = frozenset()
    # Backend for quality-signal judges; None means the refinement backend.
    judge: Backend | None = None

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")

    @classmethod
    def from_config(
        cls,
        config: PipelineConfig,
        *,
        features: Iterable[str] = (),
        judge: Backend | None = None,
        catalog: PromptCatalog | None = None,
        aspect_catalog=None,
        summarizer: Backend | None = None,
    ) -> Pipeline:
        library = AspectLibrary(
            catalog=aspect_catalog or dict(DEFAULT_MATERIALS),
            characteristics_budget=config.characteristics_budget,
            personalities_budget=config.personalities_budget,
            pros_cons_limit=config.pros_cons_limit,
            preference_threshold=config.preference_threshold,
            summarizer=summarizer if config.summarize_pros_cons else None,
        )
        settings = agents.AgentSettings(
            catalog=catalog or PromptCatalog(),
            max_attempts=config.max_attempts,
            planner_temperature=config.planner_temperature,
            refiner_temperature=config.refiner_temperature,
            reflector_temperature=config.reflector_temperature,
            max_output_tokens=config.max_output_tokens,
        )
        return cls(
            max_rounds=config.max_rounds,
            max_length=config.max_length,
            library=library,
            settings=settings,
            features=frozenset(features),
            judge=judge,
        )


def _result(sample, memory, stop, pipeline, error=None) -> EpisodeResult:
    final = memory.latest.explanation if memory.latest else sample.initial_explanation
    return EpisodeResult(
        sample=sample,
        final_explanation=final,
        trajectory=memory.trajectory(),
        rounds_used=len(memory),
        stop_reason=stop,
        records=memory.records,
        max_rounds=pipeline.max_rounds,
        error=error,
    )


def run_episode(
    sample: Sample,
    goal: UserGoal,
    backend: Backend,
    pipeline: Pipeline | None = None,
    background: BackgroundMemory | None = None,
) -> EpisodeResult:
    """Plan, refine and reflect for up to ``pipeline.max_rounds`` rounds.

    Per round: plan; stop on finish; otherwise acquire the aspect instruction,
    summarize earlier content reflections on that aspect, refine, reflect
    strategically, compute the quality signal, reflect on content, and record
    the round.
    """
    pipeline = pipeline or Pipeline()
    background = background or BackgroundMemory(sample)
    settings = pipeline.settings
    if settings.scope != sample.key:
        settings = dataclasses.replace(settings, scope=sample.key)
    judge = pipeline.judge or backend
    memory = RefinementMemory()
    current: Explanation = sample.initial_explanation

    try:
        for t in range(1, pipeline.max_rounds + 1):
            last = memory.latest
            decision = agents.plan(
                backend, current, goal, memory.trajectory().aspects,
                last.strategic_reflection if last else None,
                last.content_reflection if last else None,
                pipeline.max_rounds, settings,
            )
            if decision.is_finish:
                return _result(sample, memory, StopReason.PLANNER_FINISH, pipeline)
            aspect = decision.aspect

            instruction = pipeline.library.render_instruction(aspect, background, t)
            summary = agents.summarize_reflections(
                backend, aspect, memory.content_reflections_for(aspect), t, settings
            )
            current = agents.refine(
                backend, current, aspect, instruction, summary, pipeline.max_length, settings
            )

            strategic = agents.reflect_strategic(backend, goal, memory, current, aspect, settings)
            signal = pipeline.library.quality_signal(
                aspect, current.text, background, pipeline.features, judge,
                tag_suffix=str(t), max_attempts=settings.max_attempts,
            )
            content = agents.reflect_content(backend, current, aspect, instruction, signal, settings)

            memory = memory.append(RefinementRecord(
                explanation=current,
                aspect=aspect,
                instruction=instruction,
                strategic_reflection=strategic,
                content_reflection=content,
                signal=signal,
            ))
    except Exception as exc:
        partial = _result(sample, memory, StopReason.ERROR, pipeline, error=f"{type(exc).__name__}: {exc}")
        raise EpisodeError(f"episode {sample.key} aborted: {exc}", partial) from exc
    return _result(sample, memory, StopReason.MAX_ROUNDS, pipeline)


def run_batch(
    samples: Sequence[Sample],
    goal: UserGoal,
    backend: Backend,
    pipeline: Pipeline | None = None,
    backgrounds: Mapping[str, BackgroundMemory] | None = None,
    parallelism: int = 1,
    trace_sink=None,
) -> list[EpisodeResult]:
    """Run independent episodes; results keep input order.

    A failed episode yields a result with ``stop_reason`` ERROR instead of
    aborting the batch. ``trace_sink`` (anything with
    ``write(index, result, goal)``) receives every trace.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    pipeline = pipeline or Pipeline()
    backgrounds = backgrounds or {}

    def one(index: int) -> EpisodeResult:
        sample = samples[index]
        try:
            result = run_episode(sample, goal, backend, pipeline, backgrounds.get(sample.key))
        except EpisodeError as exc:
            log.warning("%s", exc)
            result = exc.partial
        if trace_sink is not None:
            trace_sink.write(index, result, goal)
        return result

    if parallelism == 1:
        return [one(i) for i in range(len(samples))]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, range(len(samples))))
