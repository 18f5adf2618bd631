"""Corpus ingestion, leave-one-out splits and sample assembly.

File formats (all UTF-8):

* interactions: JSON lines ``{"user_id", "item_id", "rating", "review", "timestamp"}``
* items: JSON lines ``{"item_id", "title", "category"}``
* features: plain text, one feature per line
* base outputs: JSON lines ``{"user_id", "item_id", "predicted_rating", "explanation"}``
"""

from __future__ import annotations

import json
import logging
import random
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .domain import Explanation, Interaction, Sample

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Input file is unreadable or violates its schema."""


@dataclass(frozen=True)
class Corpus:
    interactions: tuple[Interaction, ...]
    items: dict[str, tuple[str, str]]
    features: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        for it in self.interactions:
            if it.item_id not in self.items:
                raise DataError(f"interaction references unknown item {it.item_id!r}")


@dataclass(frozen=True)
class Split:
    train: tuple[Interaction, ...]
    test: tuple[Interaction, ...]
    # Users with a single interaction; kept in train, absent from test.
    excluded_users: tuple[str, ...] = ()


def _read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _require(obj: dict, keys: Sequence[str], where: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise DataError(f"{where}: missing field(s) {', '.join(missing)}")


def load_interactions(path: str | Path) -> list[Interaction]:
    out = []
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        _require(obj, ("user_id", "item_id", "rating", "review", "timestamp"), where)
        try:
            out.append(Interaction(
                user_id=str(obj["user_id"]),
                item_id=str(obj["item_id"]),
                rating=float(obj["rating"]),
                review=str(obj["review"]),
                timestamp=int(obj["timestamp"]),
            ))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{where}: {exc}") from exc
    return out


def load_items(path: str | Path) -> dict[str, tuple[str, str]]:
    items: dict[str, tuple[str, str]] = {}
    for lineno, obj in _read_jsonl(path):
        _require(obj, ("item_id", "title", "category"), f"{path}:{lineno}")
        items[str(obj["item_id"])] = (str(obj["title"]), str(obj["category"]))
    return items


def load_features(path: str | Path) -> frozenset[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def load_corpus(
    interactions_path: str | Path,
    items_path: str | Path,
    features_path: str | Path | None = None,
) -> Corpus:
    interactions = load_interactions(interactions_path)
    items = load_items(items_path)
    for it in interactions:
        if it.item_id not in items:
            raise DataError(f"{interactions_path}: interaction references unknown item {it.item_id!r}")
    features = frozenset()
    if features_path is not None and Path(features_path).exists():
        features = load_features(features_path)
    elif features_path is not None:
        log.warning("features file %s not found; falling back to extracted features", features_path)
    return Corpus(tuple(interactions), items, features)


def _by_user(interactions: Iterable[Interaction]) -> dict[str, list[Interaction]]:
    groups: dict[str, list[Interaction]] = defaultdict(list)
    for it in interactions:
        groups[it.user_id].append(it)
    for rows in groups.values():
        rows.sort(key=lambda r: r.timestamp)  # stable: ties keep input order
    return groups


def leave_one_out_split(corpus: Corpus) -> Split:
    """Hold out each user's chronologically last interaction."""
    if not corpus.interactions:
        raise DataError("corpus has no interactions")
    train: list[Interaction] = []
    test: list[Interaction] = []
    excluded = []
    for user, rows in _by_user(corpus.interactions).items():
        if len(rows) < 2:
            excluded.append(user)
            train.extend(rows)
            continue
        train.extend(rows[:-1])
        test.append(rows[-1])
    if excluded:
        log.warning("%d user(s) with a single interaction excluded from test", len(excluded))
    return Split(tuple(train), tuple(test), tuple(excluded))


def sample_test_users(split: Split, n: int, seed: int) -> list[Interaction]:
    """Pick ``n`` distinct test users; returns their held-out interactions.

    The result is sorted by user id so it does not depend on RNG draw order.
    """
    if n <= 0:
        raise ValueError("n must be >= 1")
    by_user = {it.user_id: it for it in split.test}
    users = sorted(by_user)
    if n > len(users):
        log.warning("requested %d users but only %d are available; using all", n, len(users))
        n = len(users)
    chosen = random.Random(seed).sample(users, n)
    return [by_user[u] for u in sorted(chosen)]


def load_base_outputs(path: str | Path) -> dict[tuple[str, str], tuple[float, str]]:
    outputs: dict[tuple[str, str], tuple[float, str]] = {}
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        _require(obj, ("user_id", "item_id", "predicted_rating", "explanation"), where)
        key = (str(obj["user_id"]), str(obj["item_id"]))
        if key in outputs:
            raise DataError(f"{where}: duplicate base output for {key}")
        outputs[key] = (float(obj["predicted_rating"]), str(obj["explanation"]))
    return outputs


def attach_base_outputs(
    skeletons: Sequence[Interaction],
    base_outputs_path: str | Path,
    items: dict[str, tuple[str, str]] | None = None,
) -> tuple[list[Sample], list[tuple[str, str]]]:
    """Join test rows with base-model predictions.

    Returns the populated samples and the (user, item) keys that had no base
    output and were dropped.
    """
    outputs = load_base_outputs(base_outputs_path)
    items = items or {}
    samples: list[Sample] = []
    dropped: list[tuple[str, str]] = []
    for row in skeletons:
        key = (row.user_id, row.item_id)
        if key not in outputs:
            dropped.append(key)
            continue
        rating, text = outputs[key]
        title, category = items.get(row.item_id, ("", ""))
        samples.append(Sample(
            user_id=row.user_id,
            item_id=row.item_id,
            predicted_rating=rating,
            initial_explanation=Explanation(text, 0),
            item_title=title,
            item_category=category,
        ))
    if dropped:
        log.warning("dropped %d sample(s) without base output", len(dropped))
    return samples, dropped


STOPWORDS = frozenset("""
a about above after again against all also am an and any are as at be because been
before being below between both but by can could did do does doing down during each
even ever few for from further get got had has have having he her here hers herself
him himself his how i if in into is it its itself just like me more most much my
myself no nor not now of off on once one only or other our ours ourselves out over
own really same she should so some still such than that the their theirs them
themselves then there these they this those through to too under until up us very
was way we well were what when where which while who whom why will with would you
your yours yourself yourselves s t don didn doesn isn wasn ll ve re m d
good great bad nice best better love loved place
""".split())

_ALPHA = re.compile(r"[a-z]+")


def extract_fallback_features(
    reviews: Iterable[str], k: int, stopwords: Iterable[str] = STOPWORDS
) -> frozenset[str]:
    """Top-``k`` frequent lowercase alphabetic tokens outside ``stopwords``.

    Ties are broken lexicographically.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    reviews = list(reviews)
    if not reviews:
        raise DataError("no reviews to extract features from")
    stop = frozenset(stopwords)
    counts = Counter(
        tok for review in reviews for tok in _ALPHA.findall(review.lower()) if tok not in stop
    )
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return frozenset(tok for tok, _ in ranked[:k])


# -- working directory written by `ingest` ------------------------------------

@dataclass
class Workspace:
    """Everything a refinement or evaluation run needs, loaded from disk."""

    samples: list[Sample]
    train: list[Interaction]
    items: dict[str, tuple[str, str]]
    features: frozenset[str] = field(default_factory=frozenset)


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _interaction_row(it: Interaction) -> dict:
    return {"user_id": it.user_id, "item_id": it.item_id, "rating": it.rating,
            "review": it.review, "timestamp": it.timestamp}


def sample_row(s: Sample) -> dict:
    return {"user_id": s.user_id, "item_id": s.item_id, "predicted_rating": s.predicted_rating,
            "explanation": s.initial_explanation.text, "item_title": s.item_title,
            "item_category": s.item_category}


def write_workspace(out_dir: str | Path, ws: Workspace, test: Sequence[Interaction] = ()) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "samples.jsonl", (sample_row(s) for s in ws.samples))
    _write_jsonl(out / "train.jsonl", (_interaction_row(it) for it in ws.train))
    _write_jsonl(out / "test.jsonl", (_interaction_row(it) for it in test))
    _write_jsonl(out / "items.jsonl", (
        {"item_id": k, "title": t, "category": c} for k, (t, c) in sorted(ws.items.items())
    ))
    (out / "features.txt").write_text(
        "".join(f"{feat}\n" for feat in sorted(ws.features)), encoding="utf-8"
    )


def load_workspace(data_dir: str | Path) -> Workspace:
    root = Path(data_dir)
    if not (root / "samples.jsonl").exists():
        raise DataError(f"{root} has no samples.jsonl; run `refinery ingest` first")
    samples = []
    for lineno, obj in _read_jsonl(root / "samples.jsonl"):
        _require(obj, ("user_id", "item_id", "predicted_rating", "explanation"),
                 f"{root / 'samples.jsonl'}:{lineno}")
        samples.append(Sample(
            user_id=str(obj["user_id"]),
            item_id=str(obj["item_id"]),
            predicted_rating=float(obj["predicted_rating"]),
            initial_explanation=Explanation(str(obj["explanation"]), 0),
            item_title=str(obj.get("item_title", "")),
            item_category=str(obj.get("item_category", "")),
        ))
    train = load_interactions(root / "train.jsonl") if (root / "train.jsonl").exists() else []
    items = load_items(root / "items.jsonl") if (root / "items.jsonl").exists() else {}
    features = load_features(root / "features.txt") if (root / "features.txt").exists() else frozenset()
    return Workspace(samples, train, items, features)
