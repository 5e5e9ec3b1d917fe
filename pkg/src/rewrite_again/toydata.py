"""Synthetic desk-scale corpora.

The private corpus carries a binary "group" attribute whose value skews the
word distribution, so attribute-inference attackers have a real signal to
find on clean text and lose ground on privatized text. The public corpus is
unlabeled and uniform. All texts draw from LEXICON, which also seeds the toy
backend's vocabulary, keeping rewrites in-vocabulary end to end.
"""

from __future__ import annotations

from .corpus import TextRecord
from .dp_core import RandomSource

LEXICON = [
    "the", "food", "was", "great", "service", "friendly", "staff", "clean",
    "room", "nice", "place", "really", "good", "fresh", "tasty", "menu",
    "quick", "lunch", "dinner", "coffee", "warm", "bread", "salad", "soup",
    "happy", "again", "visit", "team", "helpful", "smooth", "order", "fast",
    "terrible", "wait", "cold", "slow", "rude", "noisy", "dirty", "broken",
    "price", "high", "small", "portion", "late", "crowded", "parking", "hard",
    "refund", "never", "back", "waste", "poor", "bland", "stale", "queue",
    "manager", "table", "plate", "glass", "water", "night", "day", "street",
]

_GROUP_BIAS = 0.75  # chance a word comes from the group's own half of LEXICON


def _draw_text(gen, lexicon_slice_first: bool) -> str:
    half = len(LEXICON) // 2
    own = LEXICON[:half] if lexicon_slice_first else LEXICON[half:]
    other = LEXICON[half:] if lexicon_slice_first else LEXICON[:half]
    length = int(gen.integers(6, 15))
    words = []
    for _ in range(length):
        pool = own if gen.random() < _GROUP_BIAS else other
        words.append(pool[int(gen.integers(0, len(pool)))])
    return " ".join(words)


def make_private_corpus(n: int = 200, seed: int = 11) -> list[TextRecord]:
    """Labeled reviews: alternating binary "group" plus a 1..5 "rating"."""
    records = []
    for i in range(n):
        gen = RandomSource(seed=seed, stream=i).generator()
        group = "a" if i % 2 == 0 else "b"
        records.append(
            TextRecord(
                id=f"rec-{i:04d}",
                text=_draw_text(gen, group == "a"),
                attributes={"group": group, "rating": int(gen.integers(1, 6))},
            )
        )
    return records


def make_public_corpus(n: int = 300, seed: int = 7) -> list[TextRecord]:
    """Unlabeled texts drawn uniformly from LEXICON."""
    records = []
    for i in range(n):
        gen = RandomSource(seed=seed, stream=i).generator()
        length = int(gen.integers(6, 15))
        words = [LEXICON[int(gen.integers(0, len(LEXICON)))] for _ in range(length)]
        records.append(TextRecord(id=f"pub-{i:04d}", text=" ".join(words), attributes={}))
    return records
