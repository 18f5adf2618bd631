"""Small synthetic review corpus for smoke runs and tests.

Writes the four ingest inputs: interactions, items, features and base-model
outputs. Everything is derived from ``random.Random(seed)``.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

FEATURES = (
    "broth", "noodles", "service", "price", "parking", "spice", "dessert",
    "portion", "ambience", "staff", "coffee", "music",
)
_NAMES = ("Ramen Ya", "Pho House", "Taco Stand", "Green Bowl", "Pasta Bar", "Curry Hut",
          "Sushi Go", "Burger Joint", "Dim Sum Palace", "Bagel Corner")
_CATEGORIES = ("Restaurants", "Cafes", "Fast Food")
_POSITIVE = ("loved the {f}", "the {f} was excellent", "great {f} and friendly vibe")
_NEGATIVE = ("the {f} was disappointing", "awful {f}", "the {f} let us down")
_NEUTRAL = ("the {f} was okay", "average {f}")


def _review(rng: random.Random, rating: int) -> str:
    pool = _POSITIVE if rating >= 4 else _NEGATIVE if rating <= 2 else _NEUTRAL
    a, b = rng.sample(FEATURES, 2)
    return f"{rng.choice(pool).format(f=a)}, {rng.choice(_NEUTRAL + pool).format(f=b)}"


def generate(n_users: int = 30, n_items: int = 10, seed: int = 0) -> dict[str, list]:
    """Return rows for interactions, items, base outputs and the feature list."""
    rng = random.Random(seed)
    items = [
        {"item_id": f"i{j:02d}", "title": _NAMES[j % len(_NAMES)], "category": rng.choice(_CATEGORIES)}
        for j in range(n_items)
    ]
    interactions, base = [], []
    for u in range(n_users):
        user = f"u{u:03d}"
        k = rng.randint(2, 5)
        chosen = rng.sample(range(n_items), min(k, n_items))
        t = rng.randint(1_000, 2_000)
        for j in chosen:
            t += rng.randint(1, 100)
            rating = rng.randint(1, 5)
            interactions.append({"user_id": user, "item_id": items[j]["item_id"], "rating": rating,
                                 "review": _review(rng, rating), "timestamp": t})
        last = interactions[-1]
        predicted = round(rng.uniform(1.0, 5.0), 2)
        f = rng.choice(FEATURES)
        base.append({"user_id": user, "item_id": last["item_id"], "predicted_rating": predicted,
                     "explanation": f"you may enjoy the {f} at {items[int(last['item_id'][1:])]['title']}"})
    return {"interactions": interactions, "items": items, "base_outputs": base,
            "features": list(FEATURES)}


def write(out_dir: str | Path, n_users: int = 30, n_items: int = 10, seed: int = 0) -> dict[str, Path]:
    """Write the corpus files under ``out_dir``; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate(n_users, n_items, seed)
    paths = {}
    for name in ("interactions", "items", "base_outputs"):
        paths[name] = out / f"{name}.jsonl"
        paths[name].write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in data[name]),
                               encoding="utf-8")
    paths["features"] = out / "features.txt"
    paths["features"].write_text("".join(f + "\n" for f in data["features"]), encoding="utf-8")
    return paths
