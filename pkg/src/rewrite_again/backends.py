"""Pluggable inference backends.

Mechanisms and re-alignment training run against this interface so the same
pipeline works desk-scale (deterministic toy backend, no downloads) and
full-scale (real seq2seq checkpoints, optional extra). Backends are resolved
from string specs: ``"toy"`` or ``"seq2seq-checkpoint:<model-id>"``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    BackendLoadError,
    CapabilityError,
    ConfigurationError,
    InvalidArgumentError,
)

MODEL_MANIFEST_NAME = "manifest.json"
_EOS_TOKEN = "<eos>"


@dataclass(frozen=True)
class TrainedModelHandle:
    """Pointer to a persisted fine-tuned model."""

    id: str
    backend_kind: str
    path: Path


@dataclass
class FineTuneConfig:
    """Hyperparameters for reverse-direction fine-tuning."""

    base_spec: str = "toy"
    epochs: int = 1
    learning_rate: float = 5e-5
    seed: int = 0
    max_source_length: int = 128
    max_target_length: int = 128
    output_dir: Path = field(default_factory=lambda: Path("models"))

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning rate must be positive")
        self.output_dir = Path(self.output_dir)

    def identity_dict(self) -> dict:
        """Config fields that define the trained model; storage location excluded."""
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out.pop("output_dir")
        return out


class InferenceBackend:
    """Capability surface required by the rewriting mechanisms.

    ``next_token_logits`` must return exactly ``vocab_size`` finite reals.
    Methods a concrete backend does not support raise :class:`CapabilityError`.
    """

    kind: str = "abstract"
    vocab_size: int
    max_length: int
    eos_id: int

    def tokenize(self, text: str) -> list[int]:
        raise CapabilityError(f"{self.kind} backend does not tokenize")

    def detokenize(self, tokens: Sequence[int]) -> str:
        raise CapabilityError(f"{self.kind} backend does not detokenize")

    def next_token_logits(
        self, prompt_tokens: Sequence[int], generated_tokens: Sequence[int]
    ) -> np.ndarray:
        raise CapabilityError(f"{self.kind} backend does not expose logits")

    def encode(self, text: str) -> np.ndarray:
        raise CapabilityError(f"{self.kind} backend does not encode latents")

    def decode_from_latent(self, latent: np.ndarray, rng=None) -> str:
        raise CapabilityError(f"{self.kind} backend does not decode latents")


class TrainableBackend(InferenceBackend):
    def fit(self, pairs: Sequence[tuple[str, str]], config: FineTuneConfig) -> TrainedModelHandle:
        raise CapabilityError(f"{self.kind} backend is not trainable")


def greedy_decode(
    backend: InferenceBackend,
    prompt_tokens: Sequence[int],
    max_new_tokens: int | None = None,
    on_logits: Callable[[np.ndarray], None] | None = None,
) -> list[int]:
    """Argmax decoding until end-of-sequence or the token cap.

    Ties resolve to the lower index. ``on_logits`` observes each pre-clip
    logit vector, which is how the logit-range estimator instruments a run.
    """
    cap = backend.max_length if max_new_tokens is None else max_new_tokens
    generated: list[int] = []
    for _ in range(cap):
        logits = backend.next_token_logits(prompt_tokens, generated)
        if on_logits is not None:
            on_logits(logits)
        nxt = int(np.argmax(logits))
        if nxt == backend.eos_id:
            break
        generated.append(nxt)
    return generated


def _stable_hash64(*parts: bytes) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(part)
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def pairs_fingerprint(pairs: Sequence[tuple[str, str]]) -> str:
    """Content hash of (source, target) training pairs, order-sensitive."""
    h = hashlib.sha256()
    for src, tgt in pairs:
        h.update(src.encode("utf-8"))
        h.update(b"\x1f")
        h.update(tgt.encode("utf-8"))
        h.update(b"\x1e")
    return h.hexdigest()


# A small default vocabulary keeps toy pipelines meaningful: the synthetic
# corpora in rewrite_again.toydata draw from the same word list.
_DEFAULT_VOCAB_SIZE = 56


def _default_vocab() -> list[str]:
    from .toydata import LEXICON

    return list(LEXICON[:_DEFAULT_VOCAB_SIZE]) + [_EOS_TOKEN]


class ToyBackend(TrainableBackend):
    """Deterministic stand-in for a seq2seq model.

    Logits for a decoding state come from, in priority order: memorized
    training pairs, an explicit context table keyed by the generated-token
    tuple, the table's default row, and finally a seeded hash rule that
    biases toward tokens present in the prompt (so rewrites echo their
    input) with end-of-sequence pressure growing in the output length.

    ``fit`` memorizes (source -> target) pairs rather than running gradient
    descent; the pipeline contract under test is data flow and direction,
    not learning quality. A fitted backend also learns a per-token
    translation table (positional majority vote over the pairs), so it
    degrades gracefully on unseen inputs instead of falling back to noise,
    and further fitting (the T++ path) measurably shifts its behavior.
    """

    kind = "toy"

    def __init__(
        self,
        vocab: Sequence[str] | None = None,
        seed: int = 0,
        latent_dim: int = 16,
        max_length: int = 64,
        table: Mapping[tuple[int, ...], Sequence[float]] | None = None,
        default_row: Sequence[float] | None = None,
        echo_bias: float = 2.0,
    ):
        words = list(vocab) if vocab is not None else _default_vocab()
        if _EOS_TOKEN not in words:
            words.append(_EOS_TOKEN)
        if len(words) < 2:
            raise InvalidArgumentError("toy vocabulary needs at least one non-eos token")
        if latent_dim < 1:
            raise InvalidArgumentError("latent_dim must be positive")
        self.vocab = words
        self.vocab_size = len(words)
        self.eos_id = words.index(_EOS_TOKEN)
        self.seed = int(seed)
        self.latent_dim = int(latent_dim)
        self.max_length = int(max_length)
        self.echo_bias = float(echo_bias)
        self._non_eos = [i for i in range(self.vocab_size) if i != self.eos_id]
        self._index = {w: i for i, w in enumerate(words)}
        self._table = {tuple(k): np.asarray(v, dtype=np.float64) for k, v in (table or {}).items()}
        self._default_row = None if default_row is None else np.asarray(default_row, dtype=np.float64)
        for row in list(self._table.values()) + ([self._default_row] if self._default_row is not None else []):
            if row.shape != (self.vocab_size,):
                raise InvalidArgumentError("logit table rows must have one entry per vocab token")
        self._memo: dict[tuple[int, ...], list[int]] = {}
        self._token_counts: dict[int, dict[int, int]] = {}
        self._memo_pairs: list[tuple[str, str]] = []
        self._loaded_from: str | None = None

    def _absorb_pair(self, src: str, tgt: str) -> None:
        src_ids = self.tokenize(src)
        tgt_ids = self.tokenize(tgt)
        self._memo[tuple(src_ids)] = tgt_ids
        for pos, s in enumerate(src_ids):
            if pos < len(tgt_ids):
                counts = self._token_counts.setdefault(s, {})
                counts[tgt_ids[pos]] = counts.get(tgt_ids[pos], 0) + 1
        self._memo_pairs.append((src, tgt))

    # -- text <-> tokens ----------------------------------------------------

    def tokenize(self, text: str) -> list[int]:
        ids = []
        for word in text.split():
            idx = self._index.get(word)
            if idx is None or idx == self.eos_id:
                h = _stable_hash64(b"tok", word.encode("utf-8"))
                idx = self._non_eos[h % len(self._non_eos)]
            ids.append(idx)
        return ids

    def detokenize(self, tokens: Sequence[int]) -> str:
        return " ".join(self.vocab[t] for t in tokens if t != self.eos_id)

    # -- decoding -----------------------------------------------------------

    def next_token_logits(self, prompt_tokens, generated_tokens) -> np.ndarray:
        prompt = tuple(prompt_tokens)
        generated = tuple(generated_tokens)
        target = self._memo.get(prompt)
        if target is not None:
            row = np.full(self.vocab_size, -10.0)
            want = target[len(generated)] if len(generated) < len(target) else self.eos_id
            row[want] = 10.0
            return row
        if self._token_counts:
            return self._translate_logits(prompt, len(generated))
        if generated in self._table:
            return self._table[generated].copy()
        if self._default_row is not None:
            return self._default_row.copy()
        return self._hash_logits(prompt, generated)

    def _translate_logits(self, prompt: tuple[int, ...], pos: int) -> np.ndarray:
        row = np.full(self.vocab_size, -10.0)
        if pos >= len(prompt):
            row[self.eos_id] = 10.0
            return row
        src = prompt[pos]
        counts = self._token_counts.get(src)
        if counts:
            # majority vote over training alignments; ties to the lower id
            want = min(counts, key=lambda t: (-counts[t], t))
        else:
            want = src
        row[want] = 10.0
        return row

    def _hash_logits(self, prompt: tuple[int, ...], generated: tuple[int, ...]) -> np.ndarray:
        key = hashlib.blake2b(digest_size=16)
        key.update(self.seed.to_bytes(8, "little"))
        key.update(np.asarray(prompt, dtype=np.int64).tobytes())
        key.update(b"|")
        key.update(np.asarray(generated, dtype=np.int64).tobytes())
        gen = np.random.Generator(np.random.Philox(key=int.from_bytes(key.digest(), "little")))
        logits = gen.random(self.vocab_size)
        prompt_ids = sorted({t for t in prompt if t != self.eos_id})
        logits[prompt_ids] += self.echo_bias
        logits[self.eos_id] = -3.0 + 0.75 * len(generated)
        return logits

    # -- latent path --------------------------------------------------------

    def encode(self, text: str) -> np.ndarray:
        key = hashlib.blake2b(digest_size=16)
        key.update(b"latent")
        key.update(self.seed.to_bytes(8, "little"))
        key.update(text.encode("utf-8"))
        gen = np.random.Generator(np.random.Philox(key=int.from_bytes(key.digest(), "little")))
        return gen.random(self.latent_dim) * 2.0 - 1.0

    def decode_from_latent(self, latent: np.ndarray, rng=None) -> str:
        arr = np.asarray(latent, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidArgumentError("latent must be a non-empty 1-D vector")
        unit = (np.tanh(arr) + 1.0) / 2.0  # squash noisy coordinates into [0, 1)
        n = len(self._non_eos)
        idx = np.minimum((unit * n).astype(int), n - 1)
        words = [self.vocab[self._non_eos[i]] for i in idx[: self.max_length]]
        return " ".join(words)

    # -- training -----------------------------------------------------------

    def fit(self, pairs: Sequence[tuple[str, str]], config: FineTuneConfig) -> TrainedModelHandle:
        pairs = [(str(s), str(t)) for s, t in pairs]
        if not pairs:
            raise InvalidArgumentError("fit requires at least one training pair")
        for src, tgt in pairs:
            self._absorb_pair(src, tgt)
        data_fp = pairs_fingerprint(self._memo_pairs)
        ident = json.dumps(
            {
                "kind": self.kind,
                "vocab": self.vocab,
                "seed": self.seed,
                "latent_dim": self.latent_dim,
                "max_length": self.max_length,
                "echo_bias": self.echo_bias,
                "parent": self._loaded_from,
                "data_fingerprint": data_fp,
                "config": config.identity_dict(),
            },
            sort_keys=True,
        )
        model_id = "toy-" + hashlib.sha256(ident.encode("utf-8")).hexdigest()[:12]
        model_dir = config.output_dir / model_id
        model_dir.mkdir(parents=True, exist_ok=True)
        state = {
            "kind": self.kind,
            "vocab": self.vocab,
            "seed": self.seed,
            "latent_dim": self.latent_dim,
            "max_length": self.max_length,
            "echo_bias": self.echo_bias,
            "pairs": [list(p) for p in self._memo_pairs],
        }
        (model_dir / "model.json").write_text(
            json.dumps(state, ensure_ascii=False), encoding="utf-8"
        )
        manifest = {
            "id": model_id,
            "backend_kind": self.kind,
            "base_spec": config.base_spec,
            "parent": self._loaded_from,
            "data_fingerprint": data_fp,
            "examples": len(pairs),
            "config": config.identity_dict(),
        }
        (model_dir / MODEL_MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        handle = TrainedModelHandle(model_id, self.kind, model_dir)
        self._loaded_from = model_id
        return handle


def _load_toy_model(model_dir: Path) -> ToyBackend:
    state = json.loads((model_dir / "model.json").read_text(encoding="utf-8"))
    backend = ToyBackend(
        vocab=state["vocab"],
        seed=state["seed"],
        latent_dim=state["latent_dim"],
        max_length=state["max_length"],
        echo_bias=state["echo_bias"],
    )
    for src, tgt in state["pairs"]:
        backend._absorb_pair(src, tgt)
    manifest = json.loads((model_dir / MODEL_MANIFEST_NAME).read_text(encoding="utf-8"))
    backend._loaded_from = manifest["id"]
    return backend


class Seq2seqCheckpointBackend(TrainableBackend):
    """Real seq2seq checkpoint behind the same interface (optional extra).

    Requires torch and transformers; never exercised by the desk-scale test
    suite. A single instance is not thread safe, and ``decode_from_latent``
    assumes the latent came from this instance's most recent ``encode`` call
    (the flattened encoder state carries no shape of its own).
    """

    kind = "seq2seq-checkpoint"

    def __init__(
        self,
        checkpoint: str,
        device: str = "cpu",
        local_files_only: bool = False,
        max_length: int = 512,
    ):
        try:
            import torch
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise BackendLoadError("seq2seq checkpoints require torch and transformers") from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(
                checkpoint, local_files_only=local_files_only
            )
            self._model = (
                AutoModelForSeq2SeqLM.from_pretrained(checkpoint, local_files_only=local_files_only)
                .to(device)
                .eval()
            )
        except Exception as exc:
            raise BackendLoadError(f"cannot load checkpoint {checkpoint!r}") from exc
        self._torch = torch
        self._device = device
        self.checkpoint = checkpoint
        self.vocab_size = int(self._model.config.vocab_size)
        self.max_length = max_length
        eos = self._tokenizer.eos_token_id
        self.eos_id = int(eos if eos is not None else self._model.config.eos_token_id)
        self._last_latent_shape: tuple[int, ...] | None = None

    def tokenize(self, text: str) -> list[int]:
        return self._tokenizer(text, truncation=True, max_length=self.max_length)["input_ids"]

    def detokenize(self, tokens: Sequence[int]) -> str:
        return self._tokenizer.decode(list(tokens), skip_special_tokens=True)

    def next_token_logits(self, prompt_tokens, generated_tokens) -> np.ndarray:
        torch = self._torch
        start = self._model.config.decoder_start_token_id
        input_ids = torch.tensor([list(prompt_tokens)], device=self._device)
        decoder_ids = torch.tensor([[start] + list(generated_tokens)], device=self._device)
        with torch.no_grad():
            out = self._model(input_ids=input_ids, decoder_input_ids=decoder_ids)
        return out.logits[0, -1].float().cpu().numpy()

    def encode(self, text: str) -> np.ndarray:
        torch = self._torch
        ids = self._tokenizer(
            text, truncation=True, max_length=self.max_length, return_tensors="pt"
        ).to(self._device)
        with torch.no_grad():
            hidden = self._model.get_encoder()(**ids).last_hidden_state
        self._last_latent_shape = tuple(hidden.shape)
        return hidden.float().cpu().numpy().reshape(-1)

    def decode_from_latent(self, latent: np.ndarray, rng=None) -> str:
        from transformers.modeling_outputs import BaseModelOutput

        torch = self._torch
        if self._last_latent_shape is None:
            raise CapabilityError("decode_from_latent requires a preceding encode call")
        hidden = torch.tensor(
            np.asarray(latent, dtype=np.float32).reshape(self._last_latent_shape),
            device=self._device,
        )
        with torch.no_grad():
            out = self._model.generate(
                encoder_outputs=BaseModelOutput(last_hidden_state=hidden),
                max_new_tokens=self.max_length,
                do_sample=False,
            )
        return self._tokenizer.decode(out[0], skip_special_tokens=True)

    def fit(self, pairs, config: FineTuneConfig) -> TrainedModelHandle:
        torch = self._torch
        if not pairs:
            raise InvalidArgumentError("fit requires at least one training pair")
        torch.manual_seed(config.seed)
        model = self._model.train()
        optim = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
        for _ in range(config.epochs):
            for src, tgt in pairs:
                enc = self._tokenizer(
                    src, truncation=True, max_length=config.max_source_length, return_tensors="pt"
                ).to(self._device)
                labels = self._tokenizer(
                    tgt, truncation=True, max_length=config.max_target_length, return_tensors="pt"
                )["input_ids"].to(self._device)
                loss = model(**enc, labels=labels).loss
                loss.backward()
                optim.step()
                optim.zero_grad()
        model.eval()
        data_fp = pairs_fingerprint([(str(s), str(t)) for s, t in pairs])
        ident = json.dumps(
            {"kind": self.kind, "checkpoint": self.checkpoint, "data_fingerprint": data_fp,
             "config": config.identity_dict()},
            sort_keys=True,
        )
        model_id = "seq2seq-" + hashlib.sha256(ident.encode("utf-8")).hexdigest()[:12]
        model_dir = config.output_dir / model_id
        (model_dir / "model").mkdir(parents=True, exist_ok=True)
        model.save_pretrained(model_dir / "model")
        self._tokenizer.save_pretrained(model_dir / "model")
        manifest = {
            "id": model_id,
            "backend_kind": self.kind,
            "base_spec": config.base_spec,
            "parent": getattr(self, "_loaded_from", None),
            "data_fingerprint": data_fp,
            "examples": len(pairs),
            "config": config.identity_dict(),
        }
        (model_dir / MODEL_MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        return TrainedModelHandle(model_id, self.kind, model_dir)


def load_backend(spec: str, options: Mapping | None = None) -> InferenceBackend:
    """Resolve a backend from its string spec.

    ``"toy"`` builds the deterministic desk-scale backend; option keys mirror
    :class:`ToyBackend`'s constructor. ``"seq2seq-checkpoint:<id>"`` wraps a
    pretrained checkpoint and raises :class:`BackendLoadError` when the
    checkpoint (or torch/transformers) is unavailable.
    """
    opts = dict(options or {})
    if spec == "toy":
        return ToyBackend(**opts)
    if spec.startswith("seq2seq-checkpoint:"):
        checkpoint = spec.split(":", 1)[1]
        if not checkpoint:
            raise ConfigurationError("seq2seq-checkpoint spec is missing a model id")
        return Seq2seqCheckpointBackend(checkpoint, **opts)
    raise ConfigurationError(f"unknown backend spec {spec!r}")


def load_trained(ref: TrainedModelHandle | Path | str) -> InferenceBackend:
    """Load a fine-tuned model from its handle or artifact directory."""
    model_dir = Path(ref.path if isinstance(ref, TrainedModelHandle) else ref)
    manifest_path = model_dir / MODEL_MANIFEST_NAME
    if not manifest_path.is_file():
        raise BackendLoadError(f"no model manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    kind = manifest.get("backend_kind")
    if kind == "toy":
        return _load_toy_model(model_dir)
    if kind == "seq2seq-checkpoint":
        return Seq2seqCheckpointBackend(str(model_dir / "model"), local_files_only=True)
    raise BackendLoadError(f"unknown trained-model kind {kind!r}")


def read_model_manifest(ref: TrainedModelHandle | Path | str) -> dict:
    model_dir = Path(ref.path if isinstance(ref, TrainedModelHandle) else ref)
    return json.loads((model_dir / MODEL_MANIFEST_NAME).read_text(encoding="utf-8"))
