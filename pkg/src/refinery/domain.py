"""Shared value types for explanation refinement.

Everything here is an immutable value with no I/O, safe to share across
threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence


class Aspect(enum.IntEnum):
    """User-centric quality dimension of an explanation."""

    FACTUALITY = 1
    PERSONALIZATION = 2
    SENTIMENT_COHERENCE = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def letter(self) -> str:
        return _LETTERS[self]

    @classmethod
    def from_label(cls, name: str) -> Aspect:
        key = name.strip().lower().replace("_", " ")
        for aspect, label in _LABELS.items():
            if label.lower() == key or _LETTERS[aspect].lower() == key:
                return aspect
        if key == "coherence":
            return cls.SENTIMENT_COHERENCE
        raise ValueError(f"unknown aspect name: {name!r}")

    @classmethod
    def from_code(cls, code: int) -> Aspect:
        try:
            return cls(code)
        except ValueError:
            raise ValueError(f"aspect code must be 1, 2 or 3, got {code!r}") from None


_LABELS = {
    Aspect.FACTUALITY: "Factuality",
    Aspect.PERSONALIZATION: "Personalization",
    Aspect.SENTIMENT_COHERENCE: "Sentiment Coherence",
}
_LETTERS = {
    Aspect.FACTUALITY: "F",
    Aspect.PERSONALIZATION: "P",
    Aspect.SENTIMENT_COHERENCE: "C",
}


@dataclass(frozen=True)
class PlannerDecision:
    """Either finish (``aspect is None``, code 0) or refine one aspect."""

    aspect: Aspect | None = None

    @classmethod
    def finish(cls) -> PlannerDecision:
        return cls(None)

    @classmethod
    def refine(cls, aspect: Aspect) -> PlannerDecision:
        return cls(Aspect(aspect))

    @classmethod
    def from_code(cls, code: int) -> PlannerDecision:
        if code == 0:
            return cls.finish()
        return cls.refine(Aspect.from_code(code))

    @property
    def is_finish(self) -> bool:
        return self.aspect is None

    @property
    def code(self) -> int:
        return 0 if self.aspect is None else int(self.aspect)


# Wording used when the goal is rendered as prose. The tied form spells out
# "sentiment coherence"; ordered chains use the short name.
_TIED_NAMES = {
    Aspect.FACTUALITY: "factuality",
    Aspect.PERSONALIZATION: "personalization",
    Aspect.SENTIMENT_COHERENCE: "sentiment coherence",
}
_CHAIN_NAMES = {
    Aspect.FACTUALITY: "factuality",
    Aspect.PERSONALIZATION: "personalization",
    Aspect.SENTIMENT_COHERENCE: "coherence",
}
_COUNT_WORDS = {2: "two", 3: "three"}


def _join_and(words: Sequence[str]) -> str:
    if len(words) == 1:
        return words[0]
    return ", ".join(words[:-1]) + " and " + words[-1]


@dataclass(frozen=True)
class UserGoal:
    """Ordered multi-aspect demand; tier 1 is the highest priority."""

    entries: tuple[tuple[Aspect, int], ...]
    prose: str

    @property
    def aspects(self) -> tuple[Aspect, ...]:
        return tuple(a for a, _ in self.entries)

    def tiers(self) -> list[list[Aspect]]:
        groups: dict[int, list[Aspect]] = {}
        for aspect, tier in self.entries:
            groups.setdefault(tier, []).append(aspect)
        return [groups[t] for t in sorted(groups)]

    @property
    def notation(self) -> str:
        """Compact form such as ``F=P=C`` or ``P>F>C``."""
        return ">".join("=".join(a.letter for a in group) for group in self.tiers())


def render_goal(entries: Sequence[tuple[Aspect, int]]) -> UserGoal:
    """Build a :class:`UserGoal` and its prose from ``(aspect, tier)`` pairs."""
    if not entries:
        raise ValueError("goal needs at least one aspect")
    normalized = tuple((Aspect(a), int(t)) for a, t in entries)
    seen: set[Aspect] = set()
    for aspect, _ in normalized:
        if aspect in seen:
            raise ValueError(f"duplicate aspect in goal: {aspect.label}")
        seen.add(aspect)
    tiers = sorted({t for _, t in normalized})
    if tiers != list(range(1, len(tiers) + 1)):
        raise ValueError(f"goal tiers must be contiguous from 1, got {tiers}")

    groups: dict[int, list[Aspect]] = {}
    for aspect, tier in normalized:
        groups.setdefault(tier, []).append(aspect)

    if len(groups) == 1 and len(normalized) > 1:
        names = [_TIED_NAMES[a] for a in groups[1]]
        count = _COUNT_WORDS.get(len(names), str(len(names)))
        prose = f"Assign equal importance to {count} aspects: {_join_and(names)}."
    else:
        parts = [_join_and([_CHAIN_NAMES[a] for a in groups[t]]) for t in sorted(groups)]
        prose = f"Assign primary importance to {parts[0]}"
        for i, part in enumerate(parts[1:]):
            prose += f", followed by {part}" if i == 0 else f", and then {part}"
        prose += "."
    return UserGoal(entries=normalized, prose=prose)


def parse_goal(notation: str) -> UserGoal:
    """Parse the ``F=P=C`` / ``F>P>C`` mini-grammar into a goal."""
    text = notation.replace(" ", "")
    if not text:
        raise ValueError("empty goal string")
    entries = []
    for tier, group in enumerate(text.split(">"), start=1):
        if not group:
            raise ValueError(f"malformed goal string: {notation!r}")
        for letter in group.split("="):
            if not letter:
                raise ValueError(f"malformed goal string: {notation!r}")
            entries.append((Aspect.from_label(letter), tier))
    return render_goal(entries)


def word_count(text: str) -> int:
    return len(text.split())


def enforce_word_limit(text: str, max_words: int) -> str:
    """Truncate ``text`` to its first ``max_words`` whitespace tokens.

    Text that already fits is returned unchanged.
    """
    if max_words < 1:
        raise ValueError("max_words must be >= 1")
    if not text or not text.strip():
        raise ValueError("cannot enforce word limit on empty text")
    words = text.split()
    if len(words) <= max_words:
        return text
    return " ".join(words[:max_words])


@dataclass(frozen=True)
class Explanation:
    text: str
    round: int = 0

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("explanation text must be non-empty")
        if self.round < 0:
            raise ValueError("explanation round must be non-negative")

    @property
    def words(self) -> int:
        return word_count(self.text)


def _check_rating(value: float, what: str) -> float:
    value = float(value)
    if math.isnan(value) or not 1.0 <= value <= 5.0:
        raise ValueError(f"{what} must lie in [1, 5], got {value}")
    return value


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    rating: float
    review: str
    timestamp: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "rating", _check_rating(self.rating, "rating"))


@dataclass(frozen=True)
class Sample:
    """One (user, item) pair to refine."""

    user_id: str
    item_id: str
    predicted_rating: float
    initial_explanation: Explanation
    item_title: str = ""
    item_category: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "predicted_rating", _check_rating(self.predicted_rating, "predicted_rating")
        )
        if self.initial_explanation.round != 0:
            raise ValueError("initial explanation must be round 0")

    @property
    def key(self) -> str:
        return f"{self.user_id}|{self.item_id}"


class ReflectionLevel(str, enum.Enum):
    STRATEGIC = "strategic"
    CONTENT = "content"


@dataclass(frozen=True)
class Reflection:
    level: ReflectionLevel
    round: int
    text: str

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("reflection text must be non-empty")
        if self.round < 1:
            raise ValueError("reflection round must be >= 1")


SIGNAL_NAMES = ("entail_flag", "feature_count", "coherence_flag")
_FLAG_SIGNALS = {"entail_flag", "coherence_flag"}


@dataclass(frozen=True)
class QualitySignal:
    """Per-sample quality reading for one aspect."""

    aspect: Aspect
    name: str
    value: float
    description: str = ""

    def __post_init__(self) -> None:
        if self.name not in SIGNAL_NAMES:
            raise ValueError(f"unknown quality signal {self.name!r}")
        if self.value < 0:
            raise ValueError("quality signal value must be >= 0")
        if self.name in _FLAG_SIGNALS and self.value not in (0, 1):
            raise ValueError(f"{self.name} must be 0 or 1, got {self.value}")

    def render(self) -> str:
        value = int(self.value) if float(self.value).is_integer() else self.value
        text = f"{self.name}={value}"
        return f"{text} ({self.description})" if self.description else text


@dataclass(frozen=True)
class RefinementRecord:
    """Everything produced in one refinement round."""

    explanation: Explanation
    aspect: Aspect
    instruction: str
    strategic_reflection: Reflection
    content_reflection: Reflection
    signal: QualitySignal | None = None

    def __post_init__(self) -> None:
        r = self.explanation.round
        if not (r == self.strategic_reflection.round == self.content_reflection.round):
            raise ValueError("explanation and reflections must share a round")
        if self.strategic_reflection.level is not ReflectionLevel.STRATEGIC:
            raise ValueError("strategic_reflection has the wrong level")
        if self.content_reflection.level is not ReflectionLevel.CONTENT:
            raise ValueError("content_reflection has the wrong level")

    @property
    def round(self) -> int:
        return self.explanation.round


@dataclass(frozen=True)
class Trajectory:
    aspects: tuple[Aspect, ...] = ()

    def __len__(self) -> int:
        return len(self.aspects)

    @property
    def notation(self) -> str:
        return "[" + ", ".join(a.letter for a in self.aspects) + "]"


class StopReason(str, enum.Enum):
    PLANNER_FINISH = "planner_finish"
    MAX_ROUNDS = "max_rounds"
    # Episode aborted by an agent/backend error; records hold the partial trace.
    ERROR = "error"


@dataclass(frozen=True)
class EpisodeResult:
    sample: Sample
    final_explanation: Explanation
    trajectory: Trajectory
    rounds_used: int
    stop_reason: StopReason
    records: tuple[RefinementRecord, ...] = ()
    max_rounds: int = 6
    error: str | None = None

    def __post_init__(self) -> None:
        if not self.rounds_used == len(self.records) == len(self.trajectory):
            raise ValueError("rounds_used, records and trajectory lengths disagree")
        if self.stop_reason is StopReason.MAX_ROUNDS and self.rounds_used != self.max_rounds:
            raise ValueError("max-rounds stop requires rounds_used == max_rounds")
        if self.rounds_used > self.max_rounds:
            raise ValueError("rounds_used exceeds max_rounds")

    @property
    def failed(self) -> bool:
        return self.stop_reason is StopReason.ERROR
