"""The two DP rewriting mechanisms behind one interface.

``dp-prompt`` generates a paraphrase word by word, drawing each token from a
clipped-logit temperature softmax, so every token costs ``2 * clip.width() / T``
at word-level granularity. ``dp-bart-clv`` clips the encoder latent to
``[-C, C]``, adds Laplace noise calibrated to the latent's L1 sensitivity
``2 * C * n``, and decodes the noisy latent, spending its epsilon once per
document.

Both produce :class:`RewriteResult`; downstream re-alignment and evaluation
never branch on which mechanism ran.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .backends import InferenceBackend, load_backend
from .corpus import AlignedPair, TextRecord
from .dp_core import (
    ClipRange,
    Granularity,
    NoiseSpec,
    PrivacyBudget,
    RandomSource,
    clip_values,
    epsilon_from_temperature,
    laplace_noise,
    latent_sensitivity,
    sample_token,
)
from .errors import DataValidationError, InvalidArgumentError

log = logging.getLogger(__name__)

DP_PROMPT = "dp-prompt"
DP_BART_CLV = "dp-bart-clv"

DEFAULT_PROMPT_TEMPLATE = "Paraphrase the following text: {text}\nParaphrase:"
# Logit clip range whose width 103 gives eps = 206/T; see dp_core.
DEFAULT_PROMPT_CLIP = ClipRange(-95.0, 8.0)


@dataclass(frozen=True)
class RewriteResult:
    """One privatized text plus the budget bookkeeping for it.

    ``naive_composed_epsilon`` is the sequential-composition total for
    word-level output (epsilon_per_unit times tokens_generated) and None for
    document-level output, where epsilon_per_unit already covers the whole
    document.
    """

    text: str
    epsilon_per_unit: float
    granularity: Granularity
    tokens_generated: int
    naive_composed_epsilon: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class DPPromptConfig:
    backend_spec: str = "toy"
    clip: ClipRange = DEFAULT_PROMPT_CLIP
    temperature: float = 1.5
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    max_new_tokens: int = 256

    def __post_init__(self):
        if self.temperature <= 0:
            raise InvalidArgumentError("temperature must be positive")
        if self.max_new_tokens < 1:
            raise InvalidArgumentError("max_new_tokens must be positive")
        if self.prompt_template.count("{text}") != 1:
            raise InvalidArgumentError(
                "prompt template must contain the {text} slot exactly once"
            )


@dataclass(frozen=True)
class DPBartConfig:
    epsilon: float
    clip_value: float
    backend_spec: str = "toy"
    noise: NoiseSpec | str = "auto"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidArgumentError("epsilon must be positive")
        if self.clip_value <= 0:
            raise InvalidArgumentError("clip value must be positive")
        if isinstance(self.noise, str) and self.noise != "auto":
            raise InvalidArgumentError("noise must be a NoiseSpec or the string 'auto'")

    def noise_scale(self, dims: int) -> float:
        if isinstance(self.noise, NoiseSpec):
            return self.noise.scale
        return latent_sensitivity(self.clip_value, dims) / self.epsilon


def dp_prompt_rewrite(
    text: str,
    cfg: DPPromptConfig,
    rng: RandomSource,
    backend: InferenceBackend | None = None,
) -> RewriteResult:
    """Autoregressive paraphrase with per-token exponential-mechanism sampling.

    Fills the prompt template, then draws up to ``max_new_tokens`` tokens via
    :func:`dp_core.sample_token`, stopping at end-of-sequence. Each emitted
    token spends ``2 * clip.width() / temperature``.
    """
    if not text.strip():
        raise InvalidArgumentError("cannot rewrite empty text")
    if backend is None:
        backend = load_backend(cfg.backend_spec)
    budget = epsilon_from_temperature(cfg.clip, cfg.temperature)
    prompt = cfg.prompt_template.replace("{text}", text)
    prompt_tokens = backend.tokenize(prompt)
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    generated: list[int] = []
    for _ in range(cfg.max_new_tokens):
        logits = backend.next_token_logits(prompt_tokens, generated)
        token = sample_token(logits, cfg.clip, cfg.temperature, gen)
        if token == backend.eos_id:
            break
        generated.append(token)
    n = len(generated)
    return RewriteResult(
        text=backend.detokenize(generated),
        epsilon_per_unit=budget.epsilon,
        granularity=Granularity.WORD,
        tokens_generated=n,
        naive_composed_epsilon=budget.epsilon * n,
    )


def dp_bart_rewrite(
    text: str,
    cfg: DPBartConfig,
    rng: RandomSource,
    backend: InferenceBackend | None = None,
) -> RewriteResult:
    """Clip-latent-values rewrite: encode, clip to [-C, C], add Laplace, decode.

    With "auto" noise the scale is ``latent_sensitivity(C, n) / epsilon``,
    which makes the whole document one epsilon-DP release; decoding is pure
    post-processing.
    """
    if not text.strip():
        raise InvalidArgumentError("cannot rewrite empty text")
    if backend is None:
        backend = load_backend(cfg.backend_spec)
    latent = backend.encode(text)
    clipped = clip_values(latent, ClipRange(-cfg.clip_value, cfg.clip_value))
    scale = cfg.noise_scale(latent.size)
    if isinstance(rng, RandomSource):
        noise_rng, decode_rng = rng, rng.derived()
    else:
        noise_rng = decode_rng = rng
    noisy = clipped + laplace_noise(scale, latent.size, noise_rng)
    out = backend.decode_from_latent(noisy, decode_rng)
    return RewriteResult(
        text=out,
        epsilon_per_unit=cfg.epsilon,
        granularity=Granularity.DOCUMENT,
        tokens_generated=len(backend.tokenize(out)) if out.strip() else 0,
        naive_composed_epsilon=None,
    )


class Mechanism:
    """Common surface: a name, a config, and rewrite(text, rng) -> RewriteResult."""

    name: str

    def budget(self) -> PrivacyBudget:
        raise NotImplementedError

    def rewrite(self, text: str, rng: RandomSource) -> RewriteResult:
        raise NotImplementedError


class DPPromptMechanism(Mechanism):
    name = DP_PROMPT

    def __init__(self, config: DPPromptConfig | None = None, backend: InferenceBackend | None = None):
        self.config = config or DPPromptConfig()
        self._backend = backend

    @property
    def backend(self) -> InferenceBackend:
        if self._backend is None:
            self._backend = load_backend(self.config.backend_spec)
        return self._backend

    def budget(self) -> PrivacyBudget:
        return epsilon_from_temperature(self.config.clip, self.config.temperature)

    def rewrite(self, text: str, rng: RandomSource) -> RewriteResult:
        return dp_prompt_rewrite(text, self.config, rng, backend=self.backend)


class DPBartMechanism(Mechanism):
    name = DP_BART_CLV

    def __init__(self, config: DPBartConfig, backend: InferenceBackend | None = None):
        self.config = config
        self._backend = backend

    @property
    def backend(self) -> InferenceBackend:
        if self._backend is None:
            self._backend = load_backend(self.config.backend_spec)
        return self._backend

    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.config.epsilon, Granularity.DOCUMENT)

    def rewrite(self, text: str, rng: RandomSource) -> RewriteResult:
        return dp_bart_rewrite(text, self.config, rng, backend=self.backend)


def build_mechanism(name: str, config=None, backend: InferenceBackend | None = None) -> Mechanism:
    if name == DP_PROMPT:
        return DPPromptMechanism(config, backend=backend)
    if name == DP_BART_CLV:
        if config is None:
            raise InvalidArgumentError(f"{DP_BART_CLV} requires an explicit config")
        return DPBartMechanism(config, backend=backend)
    raise InvalidArgumentError(f"unknown mechanism {name!r}")


def rewrite_corpus(
    records: Sequence[TextRecord], mech: Mechanism, base_seed: int
) -> list[AlignedPair]:
    """Rewrite a corpus into aligned (original, privatized) pairs.

    Record i in canonical id order draws from RNG stream i of ``base_seed``,
    so input order and sharding cannot change any output. A record whose
    rewrite raises is kept as a pair with an error marker; the job never
    aborts mid-corpus.
    """
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DataValidationError(f"duplicate record ids: {dupes}")
    budget = mech.budget()
    pairs: list[AlignedPair] = []
    failures = 0
    for index, record in enumerate(sorted(records, key=lambda r: r.id)):
        rng = RandomSource(seed=base_seed, stream=index)
        try:
            result = mech.rewrite(record.text, rng)
            pairs.append(
                AlignedPair(
                    id=record.id,
                    original=record.text,
                    rewritten=result.text,
                    mechanism=mech.name,
                    epsilon=result.epsilon_per_unit,
                    granularity=result.granularity.value,
                    tokens_generated=result.tokens_generated,
                )
            )
        except Exception as exc:
            failures += 1
            pairs.append(
                AlignedPair(
                    id=record.id,
                    original=record.text,
                    rewritten="",
                    mechanism=mech.name,
                    epsilon=budget.epsilon,
                    granularity=budget.granularity.value,
                    tokens_generated=0,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    if failures:
        log.warning("rewrite_corpus: %d of %d records failed", failures, len(records))
    return pairs
