"""Dataset records and the JSONL formats the pipeline exchanges.

Three line formats flow between stages:

* input records: ``{"id", "text", "attributes"}``
* aligned pairs: ``{"id", "original", "rewritten", "mechanism", "epsilon",
  "granularity", "tokens_generated"}`` (an ``"error"`` key is appended on
  records whose rewrite failed)
* reverse pairs: ``{"id", "source", "target"}``

Loaders validate per line and report failures with their line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dp_core import Granularity, RandomSource
from .errors import DataValidationError, InvalidArgumentError


@dataclass(frozen=True)
class TextRecord:
    """One source document with optional author/label attributes."""

    id: str
    text: str
    attributes: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class AlignedPair:
    """An original text next to its privatized rewrite, with the budget spent."""

    id: str
    original: str
    rewritten: str
    mechanism: str
    epsilon: float
    granularity: str
    tokens_generated: int
    error: str | None = None

    def to_json_dict(self) -> dict:
        out = {
            "id": self.id,
            "original": self.original,
            "rewritten": self.rewritten,
            "mechanism": self.mechanism,
            "epsilon": self.epsilon,
            "granularity": self.granularity,
            "tokens_generated": self.tokens_generated,
        }
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass(frozen=True)
class ReversePair:
    """Fine-tuning example mapping a rewrite back to its original."""

    id: str
    source: str
    target: str


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[TextRecord, ...]
    validation: tuple[TextRecord, ...]
    ratio: float
    seed: int

    @property
    def train_ids(self) -> frozenset[str]:
        return frozenset(r.id for r in self.train)

    @property
    def validation_ids(self) -> frozenset[str]:
        return frozenset(r.id for r in self.validation)


def _fail(path, lineno: int, message: str):
    raise DataValidationError(f"{path}, line {lineno}: {message}")


def _parse_line(path, lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        _fail(path, lineno, f"invalid JSON ({exc.msg})")
    if not isinstance(obj, dict):
        _fail(path, lineno, "expected a JSON object")
    return obj


def _check_id(path, lineno: int, obj: dict, seen: set[str]) -> str:
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        _fail(path, lineno, "missing or empty 'id'")
    if rid in seen:
        _fail(path, lineno, f"duplicate id {rid!r}")
    seen.add(rid)
    return rid


def _check_text(path, lineno: int, obj: dict, key: str, allow_empty: bool = False) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        _fail(path, lineno, f"missing or non-string {key!r}")
    if not allow_empty and not value.strip():
        _fail(path, lineno, f"{key!r} is empty")
    return value


def _iter_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line:
                yield lineno, line


def load_jsonl(path) -> list[TextRecord]:
    """Read input records, rejecting malformed lines and duplicate ids."""
    path = Path(path)
    records: list[TextRecord] = []
    seen: set[str] = set()
    for lineno, line in _iter_lines(path):
        obj = _parse_line(path, lineno, line)
        rid = _check_id(path, lineno, obj, seen)
        text = _check_text(path, lineno, obj, "text")
        attrs = obj.get("attributes", {})
        if not isinstance(attrs, dict):
            _fail(path, lineno, "'attributes' must be an object")
        records.append(TextRecord(id=rid, text=text, attributes=attrs))
    return records


def save_jsonl(records: Iterable[TextRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {"id": rec.id, "text": rec.text, "attributes": dict(rec.attributes)},
                    ensure_ascii=False,
                )
                + "\n"
            )
    return path


def load_aligned(path) -> list[AlignedPair]:
    path = Path(path)
    pairs: list[AlignedPair] = []
    seen: set[str] = set()
    valid_granularities = {g.value for g in Granularity}
    for lineno, line in _iter_lines(path):
        obj = _parse_line(path, lineno, line)
        rid = _check_id(path, lineno, obj, seen)
        original = _check_text(path, lineno, obj, "original")
        rewritten = _check_text(path, lineno, obj, "rewritten", allow_empty=True)
        mechanism = _check_text(path, lineno, obj, "mechanism")
        epsilon = obj.get("epsilon")
        if not isinstance(epsilon, (int, float)) or isinstance(epsilon, bool) or epsilon <= 0:
            _fail(path, lineno, "'epsilon' must be a positive number")
        granularity = obj.get("granularity")
        if granularity not in valid_granularities:
            _fail(path, lineno, f"'granularity' must be one of {sorted(valid_granularities)}")
        tokens = obj.get("tokens_generated")
        if not isinstance(tokens, int) or isinstance(tokens, bool) or tokens < 0:
            _fail(path, lineno, "'tokens_generated' must be a non-negative integer")
        error = obj.get("error")
        if error is not None and not isinstance(error, str):
            _fail(path, lineno, "'error' must be a string when present")
        pairs.append(
            AlignedPair(
                id=rid,
                original=original,
                rewritten=rewritten,
                mechanism=mechanism,
                epsilon=float(epsilon),
                granularity=granularity,
                tokens_generated=tokens,
                error=error,
            )
        )
    return pairs


def save_aligned(pairs: Iterable[AlignedPair], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_json_dict(), ensure_ascii=False) + "\n")
    return path


def load_reverse_pairs(path) -> list[ReversePair]:
    path = Path(path)
    pairs: list[ReversePair] = []
    seen: set[str] = set()
    for lineno, line in _iter_lines(path):
        obj = _parse_line(path, lineno, line)
        rid = _check_id(path, lineno, obj, seen)
        source = _check_text(path, lineno, obj, "source")
        target = _check_text(path, lineno, obj, "target")
        pairs.append(ReversePair(id=rid, source=source, target=target))
    return pairs


def save_reverse_pairs(pairs: Iterable[ReversePair], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {"id": pair.id, "source": pair.source, "target": pair.target},
                    ensure_ascii=False,
                )
                + "\n"
            )
    return path


def sample_public_corpus(records: Sequence[TextRecord], n: int, seed: int) -> list[TextRecord]:
    """Pick ``n`` records uniformly without replacement, keeping file order.

    The draw is keyed by ``seed`` alone, so the same corpus and seed always
    select the same subset.
    """
    if n < 1:
        raise InvalidArgumentError("sample size must be positive")
    if n > len(records):
        raise InvalidArgumentError(
            f"cannot sample {n} records from a corpus of {len(records)}"
        )
    gen = RandomSource(seed=seed).generator()
    picked = gen.choice(len(records), size=n, replace=False)
    return [records[i] for i in sorted(picked)]


def split_dataset(
    records: Sequence[TextRecord], ratio: float = 0.9, seed: int = 42
) -> DatasetSplit:
    """Shuffle once by ``seed`` and cut at ``floor(ratio * len(records))``.

    The cut size is computed in exact rational arithmetic so ratios like 0.7
    of 10 records give 7, not the 6 a float product would floor to.
    """
    if not 0 < ratio < 1:
        raise InvalidArgumentError("split ratio must be strictly between 0 and 1")
    if len(records) < 2:
        raise InvalidArgumentError("need at least two records to split")
    n_train = int(Fraction(str(ratio)) * len(records))
    if n_train == 0 or n_train == len(records):
        raise InvalidArgumentError("split ratio leaves one side empty")
    order = RandomSource(seed=seed).generator().permutation(len(records))
    shuffled = [records[i] for i in order]
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train:]),
        ratio=ratio,
        seed=seed,
    )


def build_reverse_pairs(aligned: Sequence[AlignedPair]) -> tuple[list[ReversePair], int]:
    """Flip aligned pairs into (rewritten -> original) training examples.

    Pairs that failed to rewrite, or whose rewrite came out empty, cannot
    teach the reverse direction and are skipped; the count of skips is
    returned alongside the usable pairs.
    """
    pairs: list[ReversePair] = []
    skipped = 0
    for ap in aligned:
        if ap.error is not None or not ap.rewritten.strip():
            skipped += 1
            continue
        pairs.append(ReversePair(id=ap.id, source=ap.rewritten, target=ap.original))
    return pairs, skipped
