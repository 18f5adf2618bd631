"""Explanation quality metrics: Entail, FCR, ENTR and CoR.

FCR and ENTR are computed locally. Entailment and sentiment need an LLM
judge, reached through any :class:`~refinery.llm.Backend`.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from typing import Iterable, Sequence

from .llm import Backend, ChatRequest, ParseError, call_parsed

log = logging.getLogger(__name__)

ENTAILMENT_PROMPT = (
    "You will be given a {Recommendation_Explanation} and a list of existing {Item_Reviews}.\n"
    "Your task is to evaluate whether all information in the explanation is explicitly "
    "described or implied by the reviews.\n"
    "- Return 1 if all information is entailed or supported by the reviews.\n"
    "- Return 0 if any information is not."
)

SENTIMENT_PROMPT = (
    "You will be given a {Text}, which serves as a recommendation explanation aimed to "
    "inform the user about why an item is recommended or not.\n"
    "Your task is to analyze the sentiment of the explanation and classify it as either "
    "positive or negative:\n"
    "- Positive (1): The explanation suggests recommending the item to the user.\n"
    "- Negative (-1): The explanation suggests not recommending the item to the user."
)

_APOSTROPHES = re.compile(r"['’]")
_PUNCT = re.compile(r"[^\w\s]|_")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop apostrophes, turn other punctuation into spaces, split."""
    text = _APOSTROPHES.sub("", text.lower())
    return _PUNCT.sub(" ", text).split()


def _contains_run(tokens: Sequence[str], run: Sequence[str]) -> bool:
    k = len(run)
    if k == 1:
        return run[0] in tokens
    return any(tuple(tokens[i:i + k]) == tuple(run) for i in range(len(tokens) - k + 1))


def features_in(text: str, feature_set: Iterable[str]) -> set[str]:
    """Features of ``feature_set`` occurring as whole tokens (or token runs) in ``text``."""
    tokens = tokenize(text)
    found = set()
    for feature in feature_set:
        run = tokenize(feature)
        if run and _contains_run(tokens, run):
            found.add(feature)
    return found


def feature_count(text: str, feature_set: Iterable[str]) -> int:
    return len(features_in(text, feature_set))


def fcr(explanations: Iterable[str], feature_set: Iterable[str]) -> float:
    """Feature coverage ratio: distinct features mentioned anywhere / |features|."""
    features = set(feature_set)
    if not features:
        raise ValueError("feature set is empty")
    covered: set[str] = set()
    for text in explanations:
        covered |= features_in(text, features - covered)
    return len(covered) / len(features)


def ngram_entropy(texts: Iterable[str], n: int) -> float:
    """Base-2 entropy of the n-gram distribution pooled over all ``texts``."""
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    counts: Counter[tuple[str, ...]] = Counter()
    for text in texts:
        tokens = tokenize(text)
        counts.update(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    total = sum(counts.values())
    if total == 0:
        log.warning("no text has %d tokens; %d-gram entropy set to 0", n, n)
        return 0.0
    h = -sum((c / total) * math.log2(c / total) for c in counts.values())
    return max(h, 0.0)


def entr(texts: Iterable[str]) -> float:
    """Geometric mean of the unigram, bigram and trigram entropies."""
    texts = list(texts)
    product = 1.0
    for n in (1, 2, 3):
        product *= ngram_entropy(texts, n)
    return product ** (1.0 / 3.0)


def entail_ratio(flags: Sequence[int]) -> float:
    if not flags:
        raise ValueError("no entailment flags")
    if any(f not in (0, 1) for f in flags):
        raise ValueError("entailment flags must be 0 or 1")
    return sum(flags) / len(flags)


def preference_label(predicted_rating: float, threshold: float = 3.0) -> int:
    return 1 if predicted_rating >= threshold else -1


def cor(predicted_ratings: Sequence[float], sentiments: Sequence[int], threshold: float = 3.0) -> float:
    """Fraction of samples whose sentiment matches the preference from the rating.

    ``predicted_ratings`` may also hold :class:`~refinery.domain.Sample` objects.
    """
    if len(predicted_ratings) != len(sentiments):
        raise ValueError("ratings and sentiments differ in length")
    if not sentiments:
        raise ValueError("no samples")
    if any(s not in (1, -1) for s in sentiments):
        raise ValueError("sentiments must be 1 or -1")
    ratings = [getattr(r, "predicted_rating", r) for r in predicted_ratings]
    hits = sum(preference_label(r, threshold) == s for r, s in zip(ratings, sentiments))
    return hits / len(sentiments)


# -- judges -----------------------------------------------------------------

_FIRST_DIGIT = re.compile(r"\d")
_FIRST_INT = re.compile(r"[-+]?\d+")


def _parse_entail(text: str) -> int:
    m = _FIRST_DIGIT.search(text)
    if not m or m.group() not in "01":
        raise ParseError(f"expected 0 or 1, got {text[:80]!r}")
    return int(m.group())


def _parse_sentiment(text: str) -> int:
    m = _FIRST_INT.search(text)
    if not m or int(m.group()) not in (1, -1):
        raise ParseError(f"expected 1 or -1, got {text[:80]!r}")
    return int(m.group())


def render_reviews(reviews: Sequence[str], budget_chars: int = 4000) -> str:
    lines: list[str] = []
    used = 0
    for i, review in enumerate(reviews, start=1):
        line = f"{i}. {review}"
        if used + len(line) + 1 > budget_chars and lines:
            break
        lines.append(line)
        used += len(line) + 1
    return "\n".join(lines)


def judge_entailment(
    backend: Backend,
    explanation: str,
    item_reviews: Sequence[str],
    *,
    tag: str = "entail#0",
    scope: str = "",
    max_attempts: int = 3,
    budget_chars: int = 4000,
    temperature: float = 0.0,
) -> int:
    """1 if the judge finds ``explanation`` supported by the reviews, else 0."""
    if not item_reviews:
        log.warning("no reviews to check entailment against (%s); flag set to 0", scope or tag)
        return 0
    request = ChatRequest(
        system_prompt=ENTAILMENT_PROMPT,
        user_prompt=(
            f"Recommendation_Explanation: {explanation}\n"
            f"Item_Reviews:\n{render_reviews(item_reviews, budget_chars)}"
        ),
        tag=tag,
        scope=scope,
        temperature=temperature,
        max_output_tokens=16,
    )
    return call_parsed(backend, request, _parse_entail, max_attempts, "Return only 0 or 1.")


def classify_sentiment(
    backend: Backend,
    explanation: str,
    *,
    tag: str = "sentiment#0",
    scope: str = "",
    max_attempts: int = 3,
    temperature: float = 0.0,
) -> int:
    """Judge sentiment of an explanation: 1 positive, -1 negative."""
    request = ChatRequest(
        system_prompt=SENTIMENT_PROMPT,
        user_prompt=f"Text: {explanation}",
        tag=tag,
        scope=scope,
        temperature=temperature,
        max_output_tokens=16,
    )
    return call_parsed(backend, request, _parse_sentiment, max_attempts, "Return only 1 or -1.")
