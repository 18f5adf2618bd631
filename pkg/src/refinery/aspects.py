"""Aspect library: per-aspect standards, instructions and acquisition functions.

Instruction templates use ``{Placeholder}`` slots. Each slot is filled by an
acquisition function reading the sample's background memory.
"""

from __future__ import annotations

import json
import re
import threading
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from . import metrics
from .domain import Aspect, Interaction, QualitySignal, Sample
from .llm import Backend, ChatRequest

PLACEHOLDER = re.compile(r"\{([A-Za-z][A-Za-z0-9_]*)\}")


class TemplateError(ValueError):
    pass


def fill_placeholders(template: str, values: Mapping[str, str]) -> str:
    """Substitute every ``{Name}`` slot; unknown names are an error."""
    missing = sorted({m for m in PLACEHOLDER.findall(template) if m not in values})
    if missing:
        raise TemplateError(f"no value for placeholder(s): {', '.join(missing)}")
    return PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


@dataclass(frozen=True)
class AspectMaterials:
    aspect: Aspect
    standard: str
    instruction_template: str
    acquisition_functions: tuple[str, ...]
    quality_signal_id: str

    def __post_init__(self) -> None:
        if self.quality_signal_id not in QUALITY_SIGNAL_FOR.values():
            raise TemplateError(f"unknown quality signal {self.quality_signal_id!r}")
        unknown = [f for f in self.acquisition_functions if f not in ACQUISITION_OUTPUTS]
        if unknown:
            raise TemplateError(f"unknown acquisition function(s): {', '.join(unknown)}")
        produced = {ACQUISITION_OUTPUTS[f] for f in self.acquisition_functions}
        orphan = sorted(set(PLACEHOLDER.findall(self.instruction_template)) - produced)
        if orphan:
            raise TemplateError(
                f"{self.aspect.label}: placeholder(s) without producer: {', '.join(orphan)}"
            )


# acquisition function id -> placeholder it fills
ACQUISITION_OUTPUTS = {
    "get_item_characteristics": "Item_Characteristics",
    "get_user_personalities": "User_Personalities",
    "get_item_pros": "Item_Pros",
    "get_item_cons": "Item_Cons",
    "predict_user_preference": "User_Preference",
}

QUALITY_SIGNAL_FOR = {
    Aspect.FACTUALITY: "entail_flag",
    Aspect.PERSONALIZATION: "feature_count",
    Aspect.SENTIMENT_COHERENCE: "coherence_flag",
}

DEFAULT_MATERIALS = {
    Aspect.FACTUALITY: AspectMaterials(
        aspect=Aspect.FACTUALITY,
        standard=(
            "The aspect to refine is Factuality, and its standard is to Ensure the "
            "explanation is factually correct and can be supported by provided information."
        ),
        instruction_template=(
            "Refine the recommendation explanation using the information in "
            "{Item_Characteristics}, ensuring the explanation is factually correct."
        ),
        acquisition_functions=("get_item_characteristics",),
        quality_signal_id="entail_flag",
    ),
    Aspect.PERSONALIZATION: AspectMaterials(
        aspect=Aspect.PERSONALIZATION,
        standard=(
            "The aspect to refine is Personalization, and its standard is to Customize the "
            "explanation to reflect specific item characteristics and user personalities."
        ),
        instruction_template=(
            "Refine the recommendation explanation using the information in "
            "{Item_Characteristics} and {User_Personalities}, making the explanation content "
            "personalized and reflecting user's key concerns."
        ),
        acquisition_functions=("get_item_characteristics", "get_user_personalities"),
        quality_signal_id="feature_count",
    ),
    Aspect.SENTIMENT_COHERENCE: AspectMaterials(
        aspect=Aspect.SENTIMENT_COHERENCE,
        standard=(
            "The aspect to refine is Sentiment Coherence, and its standard is to Ensure the "
            "explanation's sentiment (positive/negative) aligns with the predicted user "
            "preference (like/dislike)."
        ),
        instruction_template=(
            "Refine the recommendation explanation using the information in {Item_Pros} and "
            "{Item_Cons}. To match the explanation's sentiment with {User_Preference}, "
            "emphasize advantages for positive preferences and highlight disadvantages for "
            "negative preferences."
        ),
        acquisition_functions=("get_item_pros", "get_item_cons", "predict_user_preference"),
        quality_signal_id="coherence_flag",
    ),
}


def materials_for(aspect: Aspect, catalog: Mapping[Aspect, AspectMaterials] | None = None) -> AspectMaterials:
    return (catalog or DEFAULT_MATERIALS)[Aspect(aspect)]


def load_catalog(path: str | Path) -> dict[Aspect, AspectMaterials]:
    """Override materials from a JSON file keyed by aspect name.

    Each entry may set ``standard``, ``instruction``, ``functions`` and
    ``quality_signal``; unset fields keep their defaults.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise TemplateError(f"cannot read aspect catalog {path}: {exc}") from exc
    catalog = dict(DEFAULT_MATERIALS)
    allowed = {"standard", "instruction", "functions", "quality_signal"}
    for name, entry in data.items():
        aspect = Aspect.from_label(name)
        extra = set(entry) - allowed
        if extra:
            raise TemplateError(f"{path}: unknown key(s) for {name}: {', '.join(sorted(extra))}")
        base = catalog[aspect]
        catalog[aspect] = replace(
            base,
            standard=entry.get("standard", base.standard),
            instruction_template=entry.get("instruction", base.instruction_template),
            acquisition_functions=tuple(entry.get("functions", base.acquisition_functions)),
            quality_signal_id=entry.get("quality_signal", base.quality_signal_id),
        )
    return catalog


@dataclass(frozen=True)
class BackgroundMemory:
    """Train-only context for one sample."""

    sample: Sample
    # (rating, review), oldest first
    item_reviews: tuple[tuple[float, str], ...] = ()
    # (item title, rating, review), oldest first
    user_history: tuple[tuple[str, float, str], ...] = ()

    @property
    def item_title(self) -> str:
        return self.sample.item_title

    @property
    def item_category(self) -> str:
        return self.sample.item_category


def build_backgrounds(
    samples: Iterable[Sample],
    train: Sequence[Interaction],
    items: Mapping[str, tuple[str, str]],
) -> dict[str, BackgroundMemory]:
    """Background memory for every sample, keyed by ``Sample.key``.

    Only ``train`` rows are consulted, and a row for the target (user, item)
    pair itself is never included.
    """
    by_item: dict[str, list[Interaction]] = defaultdict(list)
    by_user: dict[str, list[Interaction]] = defaultdict(list)
    for it in train:
        by_item[it.item_id].append(it)
        by_user[it.user_id].append(it)
    for rows in (*by_item.values(), *by_user.values()):
        rows.sort(key=lambda r: r.timestamp)
    out = {}
    for s in samples:
        target = (s.user_id, s.item_id)
        item_rows = [r for r in by_item.get(s.item_id, []) if (r.user_id, r.item_id) != target]
        user_rows = [r for r in by_user.get(s.user_id, []) if (r.user_id, r.item_id) != target]
        out[s.key] = BackgroundMemory(
            sample=s,
            item_reviews=tuple((r.rating, r.review) for r in item_rows),
            user_history=tuple(
                (items.get(r.item_id, (r.item_id, ""))[0], r.rating, r.review) for r in user_rows
            ),
        )
    return out


def fmt_rating(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:g}"


def _check_budget(budget_chars: int) -> None:
    if budget_chars < 100:
        raise ValueError("budget_chars must be >= 100")


def _pack(header: str, entries: Sequence[str], budget_chars: int, sep: str = " | ") -> tuple[str, int]:
    """Append whole entries to ``header`` while the total fits the budget."""
    text = header
    used = 0
    for entry in entries:
        candidate = text + (sep if used else "") + entry
        if len(candidate) > budget_chars:
            break
        text = candidate
        used += 1
    return text, used


def get_item_characteristics(mb: BackgroundMemory, budget_chars: int = 1500) -> str:
    _check_budget(budget_chars)
    header = f"Title: {mb.item_title}; Category: {mb.item_category}; Reviews: "
    if not mb.item_reviews:
        return header + "(none)"
    entries = [f"({fmt_rating(r)} stars) {text}" for r, text in reversed(mb.item_reviews)]
    text, used = _pack(header, entries, budget_chars)
    return text if used else header + "(none within budget)"


def get_user_personalities(mb: BackgroundMemory, budget_chars: int = 1000) -> str:
    _check_budget(budget_chars)
    if not mb.user_history:
        return "(no prior reviews)"
    mean = sum(r for _, r, _ in mb.user_history) / len(mb.user_history)
    header = f"mean rating: {mean:.1f}; past reviews: "
    entries = [f"({title}, {fmt_rating(r)}): {text}" for title, r, text in reversed(mb.user_history)]
    text, used = _pack(header, entries, budget_chars)
    return text if used else header + "(none within budget)"


NONE_OBSERVED = "(none observed)"


def _snippets(mb: BackgroundMemory, keep: Callable[[float], bool], limit: int) -> list[str]:
    return [text for r, text in reversed(mb.item_reviews) if keep(r)][:limit]


def get_item_pros(mb: BackgroundMemory, limit: int = 5) -> str:
    found = _snippets(mb, lambda r: r >= 4, limit)
    return " | ".join(found) if found else NONE_OBSERVED


def get_item_cons(mb: BackgroundMemory, limit: int = 5) -> str:
    found = _snippets(mb, lambda r: r <= 2, limit)
    return " | ".join(found) if found else NONE_OBSERVED


def predict_user_preference(sample: Sample, positive_threshold: float = 3.0) -> str:
    """``"positive"`` iff the predicted rating reaches the threshold."""
    if not 1.0 < positive_threshold < 5.0:
        raise ValueError("positive_threshold must lie in (1, 5)")
    return "positive" if sample.predicted_rating >= positive_threshold else "negative"


def render_preference(sample: Sample, positive_threshold: float = 3.0) -> str:
    label = predict_user_preference(sample, positive_threshold)
    word = "like" if label == "positive" else "dislike"
    return f"{word} (predicted rating {fmt_rating(round(sample.predicted_rating, 2))})"


_SIGNAL_DESCRIPTIONS = {
    "entail_flag": "1 if the judge finds every statement supported by the item reviews, else 0",
    "feature_count": "number of distinct dataset features mentioned",
    "coherence_flag": "1 if the explanation sentiment matches the predicted user preference, else 0",
}


@dataclass
class AspectLibrary:
    """Materials plus the settings that govern acquisition and quality signals.

    ``summarizer`` enables one-shot LLM summaries of pros and cons; results are
    cached per sample.
    """

    catalog: Mapping[Aspect, AspectMaterials] = field(default_factory=lambda: dict(DEFAULT_MATERIALS))
    characteristics_budget: int = 1500
    personalities_budget: int = 1000
    pros_cons_limit: int = 5
    preference_threshold: float = 3.0
    summarizer: Backend | None = None
    _cache: dict[tuple[str, str], str] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def materials(self, aspect: Aspect) -> AspectMaterials:
        return materials_for(aspect, self.catalog)

    def _summarized(self, kind: str, mb: BackgroundMemory, raw: str, round_: int) -> str:
        if self.summarizer is None or raw == NONE_OBSERVED:
            return raw
        key = (mb.sample.key, kind)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        word = "advantages" if kind == "pros" else "disadvantages"
        request = ChatRequest(
            system_prompt="You summarize product and venue reviews concisely.",
            user_prompt=(
                f"List the main {word} of {mb.item_title or 'the item'} mentioned in these "
                f"review snippets as a short comma-separated phrase list:\n{raw}"
            ),
            tag=f"{kind}#{round_}",
            scope=mb.sample.key,
            max_output_tokens=128,
        )
        text = self.summarizer.complete(request).text.strip() or raw
        with self._lock:
            self._cache[key] = text
        return text

    def acquire(self, function_id: str, mb: BackgroundMemory, round_: int = 0) -> str:
        if function_id == "get_item_characteristics":
            return get_item_characteristics(mb, self.characteristics_budget)
        if function_id == "get_user_personalities":
            return get_user_personalities(mb, self.personalities_budget)
        if function_id == "get_item_pros":
            return self._summarized("pros", mb, get_item_pros(mb, self.pros_cons_limit), round_)
        if function_id == "get_item_cons":
            return self._summarized("cons", mb, get_item_cons(mb, self.pros_cons_limit), round_)
        if function_id == "predict_user_preference":
            return render_preference(mb.sample, self.preference_threshold)
        raise TemplateError(f"unknown acquisition function {function_id!r}")

    def render_instruction(self, aspect: Aspect, mb: BackgroundMemory, round_: int = 0) -> str:
        """Aspect standard followed by the filled instruction template."""
        m = self.materials(aspect)
        values = {
            ACQUISITION_OUTPUTS[f]: self.acquire(f, mb, round_) for f in m.acquisition_functions
        }
        return f"{m.standard}\n{fill_placeholders(m.instruction_template, values)}"

    def quality_signal(
        self,
        aspect: Aspect,
        explanation: str,
        mb: BackgroundMemory,
        features: Iterable[str],
        judge: Backend | None,
        *,
        tag_suffix: str = "0",
        max_attempts: int = 3,
    ) -> QualitySignal:
        name = self.materials(aspect).quality_signal_id
        sample = mb.sample
        if name == "entail_flag":
            if judge is None:
                raise ValueError("entailment signal needs a judge backend")
            value = metrics.judge_entailment(
                judge, explanation, [text for _, text in reversed(mb.item_reviews)],
                tag=f"entail#{tag_suffix}", scope=sample.key, max_attempts=max_attempts,
            )
        elif name == "feature_count":
            value = metrics.feature_count(explanation, features)
        else:
            if judge is None:
                raise ValueError("coherence signal needs a judge backend")
            sentiment = metrics.classify_sentiment(
                judge, explanation, tag=f"sentiment#{tag_suffix}", scope=sample.key,
                max_attempts=max_attempts,
            )
            wanted = metrics.preference_label(sample.predicted_rating, self.preference_threshold)
            value = int(sentiment == wanted)
        return QualitySignal(aspect, name, value, _SIGNAL_DESCRIPTIONS[name])
