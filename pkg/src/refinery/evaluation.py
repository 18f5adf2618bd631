"""Corpus-level evaluation of refined explanations against their initial versions."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

from . import metrics
from .aspects import BackgroundMemory
from .domain import Aspect, EpisodeResult, UserGoal
from .llm import Backend

log = logging.getLogger(__name__)

METRIC_ORDER = ("entail", "fcr", "entr", "cor")
# Which corpus metrics stand for which aspect.
ASPECT_METRICS = {
    Aspect.FACTUALITY: ("entail",),
    Aspect.PERSONALIZATION: ("fcr", "entr"),
    Aspect.SENTIMENT_COHERENCE: ("cor",),
}


@dataclass(frozen=True)
class MetricValues:
    entail: float
    fcr: float
    entr: float
    cor: float

    def __post_init__(self) -> None:
        for name in ("entail", "fcr", "cor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.entr < 0:
            raise ValueError("entr must be >= 0")


@dataclass(frozen=True)
class SideScores:
    """Per-sample judgements of one explanation."""

    entail: int
    sentiment: int
    coherent: int
    feature_count: int


@dataclass(frozen=True)
class SampleRow:
    user_id: str
    item_id: str
    predicted_rating: float
    rounds: int
    stop_reason: str
    initial_explanation: str
    final_explanation: str
    initial: SideScores
    final: SideScores


@dataclass(frozen=True)
class EvaluationReport:
    final: MetricValues
    initial: MetricValues
    n_samples: int
    rows: tuple[SampleRow, ...]
    excluded: tuple[dict, ...] = ()
    goal_aspects: tuple[Aspect, ...] = tuple(Aspect)
    feature_source: str = "corpus"
    n_features: int = 0

    def __post_init__(self) -> None:
        if self.n_samples != len(self.rows):
            raise ValueError("n_samples must equal the number of rows")

    @property
    def deltas(self) -> dict[str, float]:
        return {m: getattr(self.final, m) - getattr(self.initial, m) for m in METRIC_ORDER}

    def aspect_deltas(self) -> dict[Aspect, dict[str, float]]:
        d = self.deltas
        return {a: {m: d[m] for m in ASPECT_METRICS[a]} for a in self.goal_aspects}

    def objective_met(self) -> dict[Aspect, bool]:
        """Whether every metric of each goal aspect strictly improved."""
        return {a: all(v > 0 for v in ds.values()) for a, ds in self.aspect_deltas().items()}

    def to_json(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "feature_source": self.feature_source,
            "final": asdict(self.final),
            "initial": asdict(self.initial),
            "deltas": self.deltas,
            "aspect_deltas": {a.label: ds for a, ds in self.aspect_deltas().items()},
            "objective_met": {a.label: ok for a, ok in self.objective_met().items()},
            "excluded": list(self.excluded),
            "rows": [asdict(r) for r in self.rows],
        }

    def to_text(self) -> str:
        return format_table(
            [("Initial", self.initial), ("Refined", self.final)],
            footer=f"n = {self.n_samples}" + (f", excluded = {len(self.excluded)}" if self.excluded else ""),
        )


_FMT = {"entail": "{:.3f}", "fcr": "{:.4f}", "entr": "{:.3f}", "cor": "{:.3f}"}
_HEAD = {"entail": "Entail", "fcr": "FCR", "entr": "ENTR", "cor": "CoR"}


def format_table(rows: Sequence[tuple[str, MetricValues]], footer: str = "") -> str:
    """Aligned text table with columns Entail, FCR, ENTR, CoR."""
    cells = [["Method"] + [_HEAD[m] for m in METRIC_ORDER]]
    for name, values in rows:
        cells.append([name] + [_FMT[m].format(getattr(values, m)) for m in METRIC_ORDER])
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    lines = []
    for j, row in enumerate(cells):
        parts = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(parts))
        if j == 0:
            lines.append("-" * len(lines[0]))
    if footer:
        lines.append(footer)
    return "\n".join(lines) + "\n"


def _score(judge: Backend, text: str, side: str, sample, reviews: list[str], features,
           threshold: float, max_attempts: int, budget: int) -> SideScores:
    entail = metrics.judge_entailment(
        judge, text, reviews, tag=f"eval_entail#{side}", scope=sample.key,
        max_attempts=max_attempts, budget_chars=budget,
    )
    sentiment = metrics.classify_sentiment(
        judge, text, tag=f"eval_sentiment#{side}", scope=sample.key, max_attempts=max_attempts
    )
    coherent = int(sentiment == metrics.preference_label(sample.predicted_rating, threshold))
    return SideScores(entail, sentiment, coherent, metrics.feature_count(text, features))


def _corpus(texts, sides: Sequence[SideScores], ratings, features, threshold) -> MetricValues:
    return MetricValues(
        entail=metrics.entail_ratio([s.entail for s in sides]),
        fcr=metrics.fcr(texts, features),
        entr=metrics.entr(texts),
        cor=metrics.cor(ratings, [s.sentiment for s in sides], threshold),
    )


def evaluate(
    results: Sequence[EpisodeResult],
    judge: Backend,
    features: frozenset[str] | set[str],
    backgrounds: Mapping[str, BackgroundMemory] | None = None,
    *,
    goal: UserGoal | None = None,
    preference_threshold: float = 3.0,
    max_attempts: int = 3,
    review_budget: int = 4000,
    parallelism: int = 1,
    feature_source: str = "corpus",
) -> EvaluationReport:
    """Score final and initial explanations on all four metrics.

    Samples whose episode failed or whose judge calls failed are left out of
    every metric and listed in ``excluded``.
    """
    if not results:
        raise ValueError("nothing to evaluate")
    features = frozenset(features)
    if not features:
        raise ValueError("feature set is empty")
    backgrounds = backgrounds or {}

    def one(result: EpisodeResult):
        s = result.sample
        if result.failed:
            return {"user_id": s.user_id, "item_id": s.item_id, "reason": f"episode failed: {result.error}"}
        mb = backgrounds.get(s.key)
        reviews = [text for _, text in reversed(mb.item_reviews)] if mb else []
        common = dict(sample=s, reviews=reviews, features=features, threshold=preference_threshold,
                      max_attempts=max_attempts, budget=review_budget)
        try:
            initial = _score(judge, s.initial_explanation.text, "initial", **common)
            final = _score(judge, result.final_explanation.text, "final", **common)
        except Exception as exc:
            log.warning("judge failed for %s: %s", s.key, exc)
            return {"user_id": s.user_id, "item_id": s.item_id, "reason": f"judge failed: {exc}"}
        return SampleRow(
            user_id=s.user_id, item_id=s.item_id, predicted_rating=s.predicted_rating,
            rounds=result.rounds_used,
            stop_reason=result.stop_reason.value,
            initial_explanation=s.initial_explanation.text,
            final_explanation=result.final_explanation.text,
            initial=initial, final=final,
        )

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(one, results))
    else:
        outcomes = [one(r) for r in results]

    rows = [o for o in outcomes if isinstance(o, SampleRow)]
    excluded = tuple(o for o in outcomes if isinstance(o, dict))
    if not rows:
        raise ValueError(f"every sample was excluded ({len(excluded)} failures)")
    ratings = [row.predicted_rating for row in rows]
    return EvaluationReport(
        final=_corpus([r.final_explanation for r in rows], [r.final for r in rows],
                      ratings, features, preference_threshold),
        initial=_corpus([r.initial_explanation for r in rows], [r.initial for r in rows],
                        ratings, features, preference_threshold),
        n_samples=len(rows),
        rows=tuple(rows),
        excluded=excluded,
        goal_aspects=goal.aspects if goal else tuple(Aspect),
        feature_source=feature_source,
        n_features=len(features),
    )
