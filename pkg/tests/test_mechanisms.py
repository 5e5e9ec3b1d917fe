"""DP rewriting mechanisms: sampling loop, latent noise, corpus jobs."""

from __future__ import annotations

import numpy as np
import pytest

from rewrite_again.backends import InferenceBackend, ToyBackend
from rewrite_again.corpus import TextRecord
from rewrite_again.dp_core import (
    ClipRange,
    Granularity,
    NoiseSpec,
    RandomSource,
    laplace_noise,
    latent_sensitivity,
)
from rewrite_again.errors import (
    CapabilityError,
    DataValidationError,
    InvalidArgumentError,
)
from rewrite_again.mechanisms import (
    DPBartConfig,
    DPBartMechanism,
    DPPromptConfig,
    DPPromptMechanism,
    Mechanism,
    RewriteResult,
    build_mechanism,
    dp_bart_rewrite,
    dp_prompt_rewrite,
    rewrite_corpus,
)

VOCAB = ["a", "b", "<eos>"]


class TestDPPromptConfig:
    def test_template_slot_enforced(self):
        with pytest.raises(InvalidArgumentError):
            DPPromptConfig(prompt_template="no slot here")
        with pytest.raises(InvalidArgumentError):
            DPPromptConfig(prompt_template="{text} twice {text}")

    def test_parameter_validation(self):
        with pytest.raises(InvalidArgumentError):
            DPPromptConfig(temperature=0.0)
        with pytest.raises(InvalidArgumentError):
            DPPromptConfig(max_new_tokens=0)


class TestDPPromptRewrite:
    def test_epsilon_per_unit_values(self):
        backend = ToyBackend(vocab=VOCAB)
        for temperature, low, high in ((1.0, 206.0, 206.0), (1.5, 137.0, 138.0)):
            cfg = DPPromptConfig(temperature=temperature, max_new_tokens=4)
            result = dp_prompt_rewrite("a b", cfg, RandomSource(1), backend=backend)
            assert low <= result.epsilon_per_unit <= high
            assert result.granularity is Granularity.WORD

    def test_forced_eos_gives_empty_result(self):
        # eos dominates at step one; non-eos mass is below double resolution
        backend = ToyBackend(vocab=VOCAB, table={(): [-200.0, -200.0, 9.0]})
        cfg = DPPromptConfig(temperature=1.0, max_new_tokens=8)
        result = dp_prompt_rewrite("a", cfg, RandomSource(3), backend=backend)
        assert result.text == ""
        assert result.tokens_generated == 0
        assert result.naive_composed_epsilon == 0.0

    def test_replay_oracle_reproduces_exact_output(self):
        # independent re-implementation of the clipped-softmax decode loop
        rows = {
            (): [2.0, 0.5, -1.0],
            (0,): [0.0, 2.0, 0.5],
            (1,): [1.0, 1.0, 1.8],
            (0, 1): [0.4, 0.1, 2.2],
            (1, 0): [0.3, 1.2, 2.0],
        }
        default = [0.2, 0.2, 3.0]
        clip = ClipRange(-1.5, 1.5)
        for seed in range(40):
            backend = ToyBackend(vocab=VOCAB, table=rows, default_row=default)
            cfg = DPPromptConfig(clip=clip, temperature=0.9, max_new_tokens=6)
            got = dp_prompt_rewrite("a b", cfg, RandomSource(seed), backend=backend)

            gen = RandomSource(seed).generator()
            generated: list[int] = []
            for _ in range(6):
                row = np.asarray(rows.get(tuple(generated), default), dtype=np.float64)
                clipped = np.minimum(np.maximum(row, -1.5), 1.5) / 0.9
                weights = np.exp(clipped - clipped.max())
                probs = weights / weights.sum()
                u = gen.random()
                acc, token = 0.0, len(probs) - 1
                for i, p in enumerate(probs):
                    acc += p
                    if acc >= u:
                        token = i
                        break
                if token == 2:
                    break
                generated.append(token)
            expected = " ".join(VOCAB[t] for t in generated)
            assert got.text == expected
            assert got.tokens_generated == len(generated)
            assert got.naive_composed_epsilon == got.epsilon_per_unit * len(generated)

    def test_same_text_same_rng_same_output(self):
        backend = ToyBackend(vocab=VOCAB)
        cfg = DPPromptConfig(max_new_tokens=10)
        a = dp_prompt_rewrite("b a b", cfg, RandomSource(9, 4), backend=backend)
        b = dp_prompt_rewrite("b a b", cfg, RandomSource(9, 4), backend=backend)
        assert a == b

    def test_empty_text_rejected(self):
        backend = ToyBackend(vocab=VOCAB)
        with pytest.raises(InvalidArgumentError):
            dp_prompt_rewrite("   ", DPPromptConfig(), RandomSource(1), backend=backend)

    def test_respects_token_cap(self):
        backend = ToyBackend(vocab=VOCAB, table={}, default_row=[5.0, 0.0, -50.0])
        cfg = DPPromptConfig(temperature=1.0, max_new_tokens=3)
        result = dp_prompt_rewrite("a", cfg, RandomSource(2), backend=backend)
        assert result.tokens_generated == 3


class RecordingBackend(ToyBackend):
    """Toy backend that records every latent handed to the decoder."""

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.seen_latents = []

    def decode_from_latent(self, latent, rng=None):
        self.seen_latents.append(np.asarray(latent).copy())
        return super().decode_from_latent(latent, rng)


class TestDPBartConfig:
    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            DPBartConfig(epsilon=0.0, clip_value=1.0)
        with pytest.raises(InvalidArgumentError):
            DPBartConfig(epsilon=1.0, clip_value=0.0)
        with pytest.raises(InvalidArgumentError):
            DPBartConfig(epsilon=1.0, clip_value=1.0, noise="gaussian")

    def test_auto_noise_scale_oracle(self):
        cfg = DPBartConfig(epsilon=8.0, clip_value=1.0)
        assert cfg.noise_scale(4) == 1.0
        assert cfg.noise_scale(4) == latent_sensitivity(1.0, 4) / 8.0

    def test_explicit_noise_spec_wins(self):
        cfg = DPBartConfig(epsilon=8.0, clip_value=1.0, noise=NoiseSpec(scale=0.25))
        assert cfg.noise_scale(400) == 0.25


class TestDPBartRewrite:
    def test_clipping_and_noise_composition(self):
        backend = RecordingBackend(latent_dim=4)
        cfg = DPBartConfig(epsilon=8.0, clip_value=0.5)
        rng = RandomSource(21, 5)
        dp_bart_rewrite("the food was great", cfg, rng, backend=backend)

        clipped = np.clip(backend.encode("the food was great"), -0.5, 0.5)
        assert clipped.min() >= -0.5 and clipped.max() <= 0.5
        expected_noise = laplace_noise(cfg.noise_scale(4), 4, RandomSource(21, 5))
        assert np.array_equal(backend.seen_latents[0], clipped + expected_noise)

    def test_epsilon_propagated(self):
        backend = ToyBackend(latent_dim=6)
        result = dp_bart_rewrite(
            "a b", DPBartConfig(epsilon=625.0, clip_value=1.0), RandomSource(2), backend=backend
        )
        assert result.epsilon_per_unit == 625.0
        assert result.granularity is Granularity.DOCUMENT
        assert result.naive_composed_epsilon is None
        assert result.tokens_generated == len(backend.tokenize(result.text))

    def test_requires_latent_capability(self):
        class NoLatent(InferenceBackend):
            kind = "nolatent"
            vocab_size = 3
            max_length = 8
            eos_id = 2

        with pytest.raises(CapabilityError):
            dp_bart_rewrite(
                "a", DPBartConfig(epsilon=1.0, clip_value=1.0), RandomSource(1), backend=NoLatent()
            )

    def test_deterministic(self):
        backend = ToyBackend(latent_dim=8)
        cfg = DPBartConfig(epsilon=50.0, clip_value=1.0)
        assert dp_bart_rewrite("a b a", cfg, RandomSource(7), backend=backend) == dp_bart_rewrite(
            "a b a", cfg, RandomSource(7), backend=backend
        )


class FailingMechanism(Mechanism):
    name = "dp-prompt"

    def __init__(self, inner, fail_ids):
        self.inner = inner
        self.fail_texts = fail_ids
        self.calls = 0

    def budget(self):
        return self.inner.budget()

    def rewrite(self, text, rng):
        self.calls += 1
        if text in self.fail_texts:
            raise RuntimeError("backend exploded")
        return self.inner.rewrite(text, rng)


class TestRewriteCorpus:
    def records(self, n):
        return [TextRecord(id=f"r{i}", text=f"a b a {i}") for i in range(n)]

    def mechanism(self):
        return DPPromptMechanism(
            DPPromptConfig(max_new_tokens=6), backend=ToyBackend(vocab=VOCAB)
        )

    def test_one_pair_per_record(self):
        pairs = rewrite_corpus(self.records(3), self.mechanism(), base_seed=5)
        assert [p.id for p in pairs] == ["r0", "r1", "r2"]
        assert all(p.mechanism == "dp-prompt" for p in pairs)

    def test_input_order_irrelevant(self):
        recs = self.records(8)
        shuffled = [recs[i] for i in [5, 2, 7, 0, 3, 6, 1, 4]]
        assert rewrite_corpus(recs, self.mechanism(), 9) == rewrite_corpus(
            shuffled, self.mechanism(), 9
        )

    def test_failures_marked_not_fatal(self):
        mech = FailingMechanism(self.mechanism(), {"a b a 1"})
        pairs = rewrite_corpus(self.records(3), mech, 4)
        assert len(pairs) == 3
        failed = [p for p in pairs if p.error]
        assert len(failed) == 1
        assert failed[0].id == "r1"
        assert "backend exploded" in failed[0].error
        assert failed[0].rewritten == ""

    def test_duplicate_ids_rejected(self):
        recs = self.records(2) + [TextRecord(id="r0", text="again")]
        with pytest.raises(DataValidationError, match="r0"):
            rewrite_corpus(recs, self.mechanism(), 1)

    def test_word_level_bookkeeping(self):
        pairs = rewrite_corpus(self.records(20), self.mechanism(), 2)
        eps = self.mechanism().budget().epsilon
        for p in pairs:
            assert p.epsilon == eps
            assert p.granularity == "word_level"


class TestMechanismInterface:
    def test_build_mechanism_names(self):
        prompt = build_mechanism("dp-prompt", DPPromptConfig(), backend=ToyBackend(vocab=VOCAB))
        assert prompt.name == "dp-prompt"
        bart = build_mechanism(
            "dp-bart-clv", DPBartConfig(epsilon=625.0, clip_value=1.0), backend=ToyBackend()
        )
        assert bart.name == "dp-bart-clv"
        assert bart.budget().epsilon == 625.0
        with pytest.raises(InvalidArgumentError):
            build_mechanism("dp-mystery")
        with pytest.raises(InvalidArgumentError):
            build_mechanism("dp-bart-clv")

    def test_results_carry_no_mechanism_specific_fields(self):
        backend = ToyBackend(vocab=VOCAB, latent_dim=4)
        prompt = DPPromptMechanism(DPPromptConfig(max_new_tokens=4), backend=backend)
        bart = DPBartMechanism(DPBartConfig(epsilon=10.0, clip_value=1.0), backend=backend)
        a = prompt.rewrite("a b", RandomSource(1))
        b = bart.rewrite("a b", RandomSource(1))
        assert isinstance(a, RewriteResult) and isinstance(b, RewriteResult)
        assert set(a.__dataclass_fields__) == set(b.__dataclass_fields__)
