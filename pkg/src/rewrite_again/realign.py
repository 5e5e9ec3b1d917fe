"""Reverse-direction re-alignment: train T and T++, then re-rewrite.

T learns (rewritten -> original) from the aligned public corpus; T++ continues
T on domain-specific pairs built from the attacker-visible train split. Both
run through a trainable backend, so the desk-scale toy backend and a real
seq2seq checkpoint share this code path.

Re-rewriting is post-processing of an already-private text: it copies the
input's epsilon and granularity forward untouched and consumes no budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backends import (
    FineTuneConfig,
    InferenceBackend,
    TrainableBackend,
    TrainedModelHandle,
    greedy_decode,
    load_trained,
    pairs_fingerprint,
)
from .corpus import AlignedPair, ReversePair
from .dp_core import Granularity, RandomSource
from .errors import InvalidArgumentError, ValidationLeakError
from .mechanisms import RewriteResult

__all__ = [
    "FineTuneConfig",
    "Track",
    "ReleaseRecord",
    "train_T",
    "train_Tpp",
    "rerewrite",
    "results_from_pairs",
    "pairs_fingerprint",
    "save_release",
    "load_release",
]

RELEASE_STAGES = ("rewritten", "basic2x", "advanced2x")


class Track(str, Enum):
    BASIC = "basic"
    ADVANCED = "advanced"


@dataclass(frozen=True)
class ReleaseRecord:
    """One line of the published doubly-rewritten corpus."""

    id: str
    text: str
    stage: str
    mechanism: str
    epsilon: float
    granularity: str

    def __post_init__(self):
        if self.stage not in RELEASE_STAGES:
            raise InvalidArgumentError(
                f"stage must be one of {RELEASE_STAGES}, got {self.stage!r}"
            )

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "stage": self.stage,
            "mechanism": self.mechanism,
            "epsilon": self.epsilon,
            "granularity": self.granularity,
        }


def _shuffled_pairs(pairs: Sequence[ReversePair], seed: int) -> list[tuple[str, str]]:
    order = RandomSource(seed=seed).generator().permutation(len(pairs))
    return [(pairs[i].source, pairs[i].target) for i in order]


def train_T(
    pairs: Sequence[ReversePair], cfg: FineTuneConfig, backend: TrainableBackend
) -> TrainedModelHandle:
    """Fine-tune the base model on (rewritten -> original) pairs.

    Training order is shuffled once by cfg.seed and then fixed. The model
    manifest records the data fingerprint and config, so a handle identifies
    exactly one (data, config, base) combination.
    """
    if not pairs:
        raise InvalidArgumentError("train_T requires at least one reverse pair")
    return backend.fit(_shuffled_pairs(pairs, cfg.seed), cfg)


def train_Tpp(
    base: TrainedModelHandle,
    domain_pairs: Sequence[ReversePair],
    cfg: FineTuneConfig,
    backend: TrainableBackend | None = None,
    validation_ids: Iterable[str] | None = None,
    allow_validation_overlap: bool = False,
) -> TrainedModelHandle:
    """Continue training T on domain-specific pairs to obtain T++.

    The domain pairs must come from the attacker-visible train split; pass
    ``validation_ids`` to enforce that, and any overlap raises unless
    ``allow_validation_overlap`` is set for deliberate reproduction runs.
    The returned model's manifest links back to ``base``.
    """
    if not domain_pairs:
        raise InvalidArgumentError("train_Tpp requires at least one domain pair")
    if validation_ids is not None and not allow_validation_overlap:
        leaked = sorted({p.id for p in domain_pairs} & set(validation_ids))
        if leaked:
            raise ValidationLeakError(
                f"domain pairs include validation-split ids: {leaked}"
            )
    if backend is None:
        backend = load_trained(base)
    if not isinstance(backend, TrainableBackend):
        raise InvalidArgumentError("base model's backend is not trainable")
    return backend.fit(_shuffled_pairs(domain_pairs, cfg.seed), cfg)


def _sample_decode(backend, prompt_tokens, temperature: float, gen, max_new_tokens=None):
    cap = backend.max_length if max_new_tokens is None else max_new_tokens
    generated: list[int] = []
    for _ in range(cap):
        logits = np.asarray(
            backend.next_token_logits(prompt_tokens, generated), dtype=np.float64
        )
        scaled = logits / temperature
        scaled -= scaled.max()
        probs = np.exp(scaled)
        probs /= probs.sum()
        nxt = int(gen.choice(len(probs), p=probs))
        if nxt == backend.eos_id:
            break
        generated.append(nxt)
    return generated


def rerewrite(
    results: Sequence[RewriteResult],
    model: TrainedModelHandle,
    backend: InferenceBackend | None = None,
    temperature: float | None = None,
    rng: RandomSource | None = None,
    max_new_tokens: int | None = None,
) -> list[RewriteResult]:
    """Decode each once-rewritten text through a re-alignment model.

    Greedy by default; pass ``temperature`` (and an rng) for plain sampling.
    The second rewrite needs no randomness for privacy, the budget was spent
    by the mechanism, so every output copies epsilon_per_unit, granularity,
    and naive_composed_epsilon from its input unchanged. Items that fail to
    decode come back with an error marker; the job always completes.
    """
    if backend is None:
        backend = load_trained(model)
    if temperature is not None and temperature <= 0:
        raise InvalidArgumentError("sampling temperature must be positive")
    gen = None
    if temperature is not None:
        gen = (rng or RandomSource(seed=0)).generator()
    out: list[RewriteResult] = []
    for item in results:
        def _carry(text: str, tokens: int, error: str | None = None) -> RewriteResult:
            return RewriteResult(
                text=text,
                epsilon_per_unit=item.epsilon_per_unit,
                granularity=item.granularity,
                tokens_generated=tokens,
                naive_composed_epsilon=item.naive_composed_epsilon,
                error=error,
            )

        if item.error is not None:
            out.append(_carry("", 0, error=item.error))
            continue
        if not item.text.strip():
            out.append(_carry("", 0, error="empty rewritten text"))
            continue
        try:
            prompt = backend.tokenize(item.text)
            if temperature is None:
                tokens = greedy_decode(backend, prompt, max_new_tokens=max_new_tokens)
            else:
                tokens = _sample_decode(backend, prompt, temperature, gen, max_new_tokens)
            out.append(_carry(backend.detokenize(tokens), len(tokens)))
        except Exception as exc:
            out.append(_carry("", 0, error=f"{type(exc).__name__}: {exc}"))
    return out


def results_from_pairs(aligned: Sequence[AlignedPair]) -> list[RewriteResult]:
    """View aligned pairs as RewriteResults, e.g. to feed them to rerewrite."""
    results = []
    for ap in aligned:
        gran = Granularity(ap.granularity)
        naive = ap.epsilon * ap.tokens_generated if gran is Granularity.WORD else None
        results.append(
            RewriteResult(
                text=ap.rewritten,
                epsilon_per_unit=ap.epsilon,
                granularity=gran,
                tokens_generated=ap.tokens_generated,
                naive_composed_epsilon=naive,
                error=ap.error,
            )
        )
    return results


def save_release(records: Iterable[ReleaseRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), ensure_ascii=False) + "\n")
    return path


def load_release(path) -> list[ReleaseRecord]:
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                ReleaseRecord(
                    id=obj["id"],
                    text=obj["text"],
                    stage=obj["stage"],
                    mechanism=obj["mechanism"],
                    epsilon=obj["epsilon"],
                    granularity=obj["granularity"],
                )
            )
    return records
