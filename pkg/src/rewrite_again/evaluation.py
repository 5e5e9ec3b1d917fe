"""Empirical privacy harness and semantic similarity metrics.

Privacy here is measured, not proven: attackers try to recover a protected
attribute (author, gender) from privatized text, and the report compares
their F1 against a clean-data baseline and the majority-class floor. The
static attacker trains on original texts and never touches the mechanism;
the adaptive attacker knows the mechanism and its epsilon and trains on
shadow rewrites it generates itself. Adaptive numbers are the mean and
population std over n_runs training-order shuffles.

Utility is CS: cosine similarity between original and rewritten texts,
averaged over a pair of sentence encoders.

F1 arithmetic contract: per-class F1 is computed as the single division
2*tp / (2*tp + fp + fn) and averages accumulate by sequential summation in
ascending class order, so an independent confusion-matrix oracle written the
same way matches bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .corpus import DatasetSplit, TextRecord
from .errors import (
    BackendLoadError,
    DataValidationError,
    InvalidArgumentError,
)
from .mechanisms import Mechanism, rewrite_corpus

AVERAGING_MODES = ("macro", "weighted", "micro")

# Full-scale CS uses these two sentence-encoder checkpoints; desk scale uses
# the deterministic hashed-bag encoders below.
FULLSCALE_ENCODER_SPECS = (
    "sentence-transformer:sentence-transformers/all-mpnet-base-v2",
    "sentence-transformer:sentence-transformers/all-MiniLM-L6-v2",
)


class AttackerKind(str, Enum):
    STATIC = "static"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class ClassifierConfig:
    num_classes: int
    backend_spec: str = "toy"
    epochs: int = 1
    learning_rate: float = 5e-5
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidArgumentError("classifier needs at least 2 classes")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning rate must be positive")

    def with_seed(self, seed: int) -> "ClassifierConfig":
        return ClassifierConfig(
            num_classes=self.num_classes,
            backend_spec=self.backend_spec,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=seed,
        )


@dataclass(frozen=True)
class PrivacyReport:
    stage: str
    mechanism: str
    epsilon: float
    baseline_f1: float
    static_f1: float
    adaptive_f1_mean: float
    adaptive_f1_std: float
    majority_floor_f1: float
    runs: int
    averaging: str
    cs: float | None = None

    def __post_init__(self):
        for name in ("baseline_f1", "static_f1", "adaptive_f1_mean", "majority_floor_f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {value}")
        if self.adaptive_f1_std < 0:
            raise InvalidArgumentError("adaptive_f1_std must be non-negative")
        if self.cs is not None and not -1.0 <= self.cs <= 1.0:
            raise InvalidArgumentError(f"cs must lie in [-1, 1], got {self.cs}")

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage,
            "mechanism": self.mechanism,
            "epsilon": self.epsilon,
            "baseline_f1": self.baseline_f1,
            "static_f1": self.static_f1,
            "adaptive_f1_mean": self.adaptive_f1_mean,
            "adaptive_f1_std": self.adaptive_f1_std,
            "cs": self.cs,
            "majority_floor_f1": self.majority_floor_f1,
            "runs": self.runs,
            "averaging": self.averaging,
        }


# -- F1 ----------------------------------------------------------------------


def _class_counts(preds: Sequence, golds: Sequence):
    classes = sorted(set(golds) | set(preds))
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    for p, g in zip(preds, golds):
        if p == g:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    return classes, tp, fp, fn


def f1_score(preds: Sequence, golds: Sequence, averaging: str = "weighted") -> float:
    """Multi-class F1 with macro, weighted, or micro averaging.

    Classes are the union of gold and predicted labels; a class predicted but
    never gold scores F1 = 0 and, under macro, still counts in the mean.
    """
    if averaging not in AVERAGING_MODES:
        raise InvalidArgumentError(f"averaging must be one of {AVERAGING_MODES}")
    if len(preds) != len(golds):
        raise InvalidArgumentError(
            f"preds ({len(preds)}) and golds ({len(golds)}) differ in length"
        )
    if not golds:
        raise InvalidArgumentError("cannot score an empty label sequence")
    classes, tp, fp, fn = _class_counts(preds, golds)
    if averaging == "micro":
        tps = sum(tp[c] for c in classes)
        fps = sum(fp[c] for c in classes)
        fns = sum(fn[c] for c in classes)
        return 2 * tps / (2 * tps + fps + fns)
    per_class = {}
    for c in classes:
        denom = 2 * tp[c] + fp[c] + fn[c]
        per_class[c] = 2 * tp[c] / denom if denom else 0.0
    if averaging == "macro":
        total = 0.0
        for c in classes:
            total += per_class[c]
        return total / len(classes)
    support = {c: 0 for c in classes}
    for g in golds:
        support[g] += 1
    total = 0.0
    for c in classes:
        total += per_class[c] * support[c]
    return total / len(golds)


def majority_baseline(golds: Sequence, averaging: str = "weighted") -> float:
    """F1 of always guessing the most frequent gold label.

    This is the neutralization floor: an attacker at or below it has learned
    nothing beyond class frequencies. Frequency ties break to the
    lexicographically smallest label.
    """
    if not golds:
        raise InvalidArgumentError("cannot compute a majority baseline of nothing")
    counts: dict = {}
    for g in golds:
        counts[g] = counts.get(g, 0) + 1
    majority = min(counts, key=lambda c: (-counts[c], c))
    return f1_score([majority] * len(golds), golds, averaging)


# -- similarity ----------------------------------------------------------------


def cosine(a, b) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1] against rounding."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.ndim != 1 or vb.ndim != 1 or va.shape != vb.shape:
        raise InvalidArgumentError("cosine requires two 1-D vectors of equal dimension")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise InvalidArgumentError("cosine is undefined for zero vectors")
    value = float(np.dot(va, vb) / (na * nb))
    return max(-1.0, min(1.0, value))


class EncoderBackend:
    """Text embedder for CS; same text must always produce the same vector."""

    name: str = "abstract"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class HashedBagEncoder(EncoderBackend):
    """Deterministic bag-of-tokens embedding by feature hashing.

    Dimension 0 is a constant 1.0 so no text (not even an empty one) maps to
    the zero vector. Distinct salts give distinct hash layouts, standing in
    for the two independent sentence encoders of the full-scale setup.
    """

    def __init__(self, dim: int = 64, salt: str = ""):
        if dim < 2:
            raise InvalidArgumentError("encoder dimension must be at least 2")
        self.dim = dim
        self.salt = salt
        self.name = f"hashed-bag:{dim}:{salt}"

    def _bucket(self, token: str) -> int:
        h = hashlib.blake2b(f"{self.salt}|{token}".encode("utf-8"), digest_size=8)
        return 1 + int.from_bytes(h.digest(), "little") % (self.dim - 1)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        out[:, 0] = 1.0
        for row, text in enumerate(texts):
            for token in text.split():
                out[row, self._bucket(token)] += 1.0
        return out


class SentenceTransformerEncoder(EncoderBackend):
    """Sentence-transformers checkpoint behind the encoder interface."""

    def __init__(self, checkpoint: str):  # pragma: no cover - needs model downloads
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise BackendLoadError(
                "sentence-transformer encoders require the sentence-transformers package"
            ) from exc
        try:
            self._model = SentenceTransformer(checkpoint)
        except Exception as exc:
            raise BackendLoadError(f"cannot load encoder {checkpoint!r}") from exc
        self.name = f"sentence-transformer:{checkpoint}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:  # pragma: no cover
        return np.asarray(self._model.encode(list(texts), show_progress_bar=False))


def load_encoder(spec: str) -> EncoderBackend:
    """Resolve "hashed-bag:<dim>:<salt>" or "sentence-transformer:<checkpoint>"."""
    if spec.startswith("hashed-bag"):
        parts = spec.split(":")
        dim = int(parts[1]) if len(parts) > 1 and parts[1] else 64
        salt = parts[2] if len(parts) > 2 else ""
        return HashedBagEncoder(dim=dim, salt=salt)
    if spec.startswith("sentence-transformer:"):
        return SentenceTransformerEncoder(spec.split(":", 1)[1])
    raise InvalidArgumentError(f"unknown encoder spec {spec!r}")


def cs_score(
    originals: Sequence[str],
    candidates: Sequence[str],
    encoders: Sequence[EncoderBackend],
) -> float:
    """Mean pairwise cosine under each encoder, then the mean over encoders."""
    if len(originals) != len(candidates):
        raise InvalidArgumentError(
            f"originals ({len(originals)}) and candidates ({len(candidates)}) differ in length"
        )
    if not originals:
        raise InvalidArgumentError("cs_score requires at least one pair")
    if len(encoders) != 2:
        raise InvalidArgumentError("cs_score expects exactly two encoders")
    encoder_means = []
    for encoder in encoders:
        ea = encoder.embed(list(originals))
        eb = encoder.embed(list(candidates))
        sims = [cosine(ea[i], eb[i]) for i in range(len(originals))]
        encoder_means.append(sum(sims) / len(sims))
    return sum(encoder_means) / len(encoder_means)


# -- attackers -----------------------------------------------------------------

_FEATURE_DIM = 256


def _features(text: str, dim: int = _FEATURE_DIM) -> np.ndarray:
    vec = np.zeros(dim)
    vec[0] = 1.0  # bias; also keeps empty texts off the zero vector
    for token in text.split():
        h = hashlib.blake2b(token.encode("utf-8"), digest_size=8)
        vec[1 + int.from_bytes(h.digest(), "little") % (dim - 1)] += 1.0
    return vec


class TokenPerceptron:
    """Deterministic multi-class perceptron over hashed bag-of-tokens features.

    Training visits examples in the order given (callers shuffle by seed), so
    identical inputs produce an identical weight matrix; ``to_bytes`` exposes
    that for byte-level equality checks.
    """

    def __init__(self, classes: Sequence, epochs: int = 1):
        if len(classes) < 2:
            raise InvalidArgumentError("classifier needs at least 2 classes")
        self.classes = sorted(classes)
        self.epochs = epochs
        self._weights = np.zeros((len(self.classes), _FEATURE_DIM))
        self._index = {c: i for i, c in enumerate(self.classes)}

    def fit(self, texts: Sequence[str], labels: Sequence) -> "TokenPerceptron":
        feats = [_features(t) for t in texts]
        for _ in range(self.epochs):
            for x, label in zip(feats, labels):
                gold = self._index[label]
                pred = int(np.argmax(self._weights @ x))
                if pred != gold:
                    self._weights[gold] += x
                    self._weights[pred] -= x
        return self

    def predict(self, texts: Sequence[str]) -> list:
        return [self.classes[int(np.argmax(self._weights @ _features(t)))] for t in texts]

    def to_bytes(self) -> bytes:
        head = json.dumps([repr(c) for c in self.classes]).encode("utf-8")
        return head + b"\x00" + self._weights.tobytes()


class TransformerClassifier:  # pragma: no cover - needs GPU-scale checkpoints
    """Sequence-classification checkpoint fine-tune for full-scale attacks."""

    def __init__(self, checkpoint: str, num_classes: int, cfg: "ClassifierConfig"):
        try:
            import torch
            from transformers import AutoModelForSequenceClassification, AutoTokenizer
        except ImportError as exc:
            raise BackendLoadError(
                "transformer classifiers require torch and transformers"
            ) from exc
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self._model = AutoModelForSequenceClassification.from_pretrained(
            checkpoint, num_labels=num_classes
        )
        self._cfg = cfg
        self.classes: list = []

    def fit(self, texts: Sequence[str], labels: Sequence) -> "TransformerClassifier":
        torch = self._torch
        self.classes = sorted(set(labels))
        index = {c: i for i, c in enumerate(self.classes)}
        torch.manual_seed(self._cfg.seed)
        model = self._model.train()
        optim = torch.optim.AdamW(model.parameters(), lr=self._cfg.learning_rate)
        for _ in range(self._cfg.epochs):
            for text, label in zip(texts, labels):
                batch = self._tokenizer(text, truncation=True, return_tensors="pt")
                target = torch.tensor([index[label]])
                loss = model(**batch, labels=target).loss
                loss.backward()
                optim.step()
                optim.zero_grad()
        model.eval()
        return self

    def predict(self, texts: Sequence[str]) -> list:
        torch = self._torch
        preds = []
        with torch.no_grad():
            for text in texts:
                batch = self._tokenizer(text, truncation=True, return_tensors="pt")
                preds.append(self.classes[int(self._model(**batch).logits.argmax())])
        return preds

    def to_bytes(self) -> bytes:
        import io

        buf = io.BytesIO()
        self._torch.save(self._model.state_dict(), buf)
        return buf.getvalue()


def _labels_for(records: Sequence[TextRecord], attribute: str) -> list:
    labels = []
    for rec in records:
        if attribute not in rec.attributes:
            raise DataValidationError(
                f"record {rec.id!r} is missing attribute {attribute!r}"
            )
        labels.append(rec.attributes[attribute])
    return labels


def _fit_classifier(texts: Sequence[str], labels: Sequence, cfg: ClassifierConfig):
    classes = sorted(set(labels))
    if len(classes) > cfg.num_classes:
        raise DataValidationError(
            f"{len(classes)} distinct labels exceed the configured {cfg.num_classes} classes"
        )
    if len(classes) < 2:
        raise DataValidationError("training labels must cover at least 2 classes")
    if cfg.backend_spec == "toy":
        clf = TokenPerceptron(classes, epochs=cfg.epochs)
    elif cfg.backend_spec.startswith("transformer-classifier:"):  # pragma: no cover
        checkpoint = cfg.backend_spec.split(":", 1)[1]
        clf = TransformerClassifier(checkpoint, cfg.num_classes, cfg)
    else:
        raise InvalidArgumentError(f"unknown classifier backend {cfg.backend_spec!r}")
    order = np.random.default_rng(np.random.SeedSequence(cfg.seed)).permutation(len(texts))
    return clf.fit([texts[i] for i in order], [labels[i] for i in order])


def train_attacker(
    split: DatasetSplit,
    kind: AttackerKind,
    attribute: str,
    mech: Mechanism | None = None,
    cfg: ClassifierConfig | None = None,
):
    """Fit an attribute-inference attacker on the train split.

    Static attackers fit on the original texts and never invoke the
    mechanism. Adaptive attackers first rewrite the train split themselves
    (seeded by cfg.seed) to get shadow texts, then fit on those; every train
    record yields exactly one shadow text, failed rewrites included as empty
    strings.
    """
    if cfg is None:
        raise InvalidArgumentError("train_attacker requires a ClassifierConfig")
    kind = AttackerKind(kind)
    records = list(split.train)
    labels = _labels_for(records, attribute)
    if kind is AttackerKind.STATIC:
        texts = [r.text for r in records]
    else:
        if mech is None:
            raise InvalidArgumentError("adaptive attacker requires a mechanism")
        shadow = {p.id: p.rewritten for p in rewrite_corpus(records, mech, cfg.seed)}
        texts = [shadow[r.id] for r in records]
    return _fit_classifier(texts, labels, cfg)


def evaluate_attack(
    clf,
    validation: Sequence[TextRecord],
    attribute: str,
    averaging: str = "weighted",
) -> float:
    """F1 of the classifier on (privatized) validation texts."""
    if not validation:
        raise InvalidArgumentError("cannot evaluate on an empty validation set")
    golds = _labels_for(validation, attribute)
    preds = clf.predict([r.text for r in validation])
    return f1_score(preds, golds, averaging)


# -- the harness ---------------------------------------------------------------

STAGE_ORDER = ("rewritten", "basic2x", "advanced2x")


def _population_std(values: Sequence[float], mean: float) -> float:
    return math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))


def run_empirical_privacy(
    dataset: DatasetSplit,
    stages: Mapping[str, Sequence[TextRecord]],
    mech: Mechanism,
    cfg: ClassifierConfig,
    attribute: str,
    n_runs: int = 3,
    run_seeds: Sequence[int] | None = None,
    encoders: Sequence[EncoderBackend] | None = None,
    averaging: str = "weighted",
) -> list[PrivacyReport]:
    """Full attack battery over privatized validation corpora, one per stage.

    For every stage corpus (same id set as the clean validation split):
    baseline F1 (clean-trained, clean-evaluated), static F1 (clean-trained,
    evaluated on the stage texts), adaptive F1 mean and population std over
    ``n_runs`` shuffles (seeds cfg.seed + k, or ``run_seeds`` verbatim), the
    majority floor, and CS against the originals when encoders are given.

    The static model and the per-run adaptive models are trained once and
    reused across stages; only the evaluation corpus changes.
    """
    if n_runs < 1:
        raise InvalidArgumentError("n_runs must be at least 1")
    if run_seeds is not None and len(run_seeds) != n_runs:
        raise InvalidArgumentError(f"run_seeds must supply exactly {n_runs} seeds")
    unknown = [s for s in stages if s not in STAGE_ORDER]
    if unknown:
        raise InvalidArgumentError(f"unknown stages {unknown}; expected {STAGE_ORDER}")
    if not stages:
        raise InvalidArgumentError("no stage corpora supplied")

    validation = sorted(dataset.validation, key=lambda r: r.id)
    val_ids = {r.id for r in validation}
    by_stage: dict[str, list[TextRecord]] = {}
    for stage, corpus in stages.items():
        ids = {r.id for r in corpus}
        missing = sorted(val_ids - ids)
        extra = sorted(ids - val_ids)
        if missing or extra:
            problem = []
            if missing:
                problem.append(f"missing validation ids {missing[:5]}")
            if extra:
                problem.append(f"unexpected ids {extra[:5]}")
            raise DataValidationError(f"stage {stage!r}: " + "; ".join(problem))
        by_stage[stage] = sorted(corpus, key=lambda r: r.id)

    golds = _labels_for(validation, attribute)
    majority = majority_baseline(golds, averaging)
    static_clf = train_attacker(dataset, AttackerKind.STATIC, attribute, cfg=cfg)
    baseline = evaluate_attack(static_clf, validation, attribute, averaging)
    seeds = list(run_seeds) if run_seeds is not None else [cfg.seed + k for k in range(n_runs)]
    adaptive_clfs = [
        train_attacker(dataset, AttackerKind.ADAPTIVE, attribute, mech, cfg.with_seed(s))
        for s in seeds
    ]

    epsilon = mech.budget().epsilon
    originals = [r.text for r in validation]
    reports = []
    for stage in STAGE_ORDER:
        if stage not in by_stage:
            continue
        corpus = by_stage[stage]
        static_f1 = evaluate_attack(static_clf, corpus, attribute, averaging)
        run_f1s = [evaluate_attack(c, corpus, attribute, averaging) for c in adaptive_clfs]
        mean = sum(run_f1s) / len(run_f1s)
        std = _population_std(run_f1s, mean)
        cs = None
        if encoders is not None:
            cs = cs_score(originals, [r.text for r in corpus], encoders)
        reports.append(
            PrivacyReport(
                stage=stage,
                mechanism=mech.name,
                epsilon=epsilon,
                baseline_f1=baseline,
                static_f1=static_f1,
                adaptive_f1_mean=mean,
                adaptive_f1_std=std,
                majority_floor_f1=majority,
                runs=n_runs,
                averaging=averaging,
                cs=cs,
            )
        )
    return reports
