"""Toy backend behavior, decoding, training, and model persistence."""

from __future__ import annotations

import json

import numpy as np
import pytest

from rewrite_again.backends import (
    FineTuneConfig,
    InferenceBackend,
    ToyBackend,
    greedy_decode,
    load_backend,
    load_trained,
    pairs_fingerprint,
    read_model_manifest,
)
from rewrite_again.errors import (
    BackendLoadError,
    CapabilityError,
    ConfigurationError,
    InvalidArgumentError,
)

VOCAB = ["a", "b", "c", "<eos>"]


def table_backend(table, default_row=None):
    return ToyBackend(vocab=VOCAB, table=table, default_row=default_row)


class TestTokenization:
    def test_known_words_round_trip(self):
        backend = ToyBackend(vocab=VOCAB)
        ids = backend.tokenize("a c b")
        assert ids == [0, 2, 1]
        assert backend.detokenize(ids) == "a c b"

    def test_unknown_words_map_off_eos(self):
        backend = ToyBackend(vocab=VOCAB)
        ids = backend.tokenize("zebra quark zebra")
        assert all(i != backend.eos_id for i in ids)
        assert ids[0] == ids[2]  # stable hash

    def test_detokenize_skips_eos(self):
        backend = ToyBackend(vocab=VOCAB)
        assert backend.detokenize([0, backend.eos_id, 1]) == "a b"

    def test_eos_appended_when_missing(self):
        backend = ToyBackend(vocab=["x", "y"])
        assert backend.vocab[backend.eos_id] == "<eos>"


class TestLogits:
    def test_table_rows_by_context(self):
        table = {(): [5.0, 0.0, 0.0, -9.0], (0,): [0.0, 5.0, 0.0, -9.0]}
        backend = table_backend(table, default_row=[0.0, 0.0, 0.0, 9.0])
        assert np.argmax(backend.next_token_logits([2], [])) == 0
        assert np.argmax(backend.next_token_logits([2], [0])) == 1
        # unseen context falls to the default row
        assert np.argmax(backend.next_token_logits([2], [1, 1])) == 3

    def test_row_length_checked(self):
        with pytest.raises(InvalidArgumentError):
            table_backend({(): [1.0, 2.0]})

    def test_hash_rule_echoes_prompt(self):
        backend = ToyBackend(vocab=VOCAB, echo_bias=5.0)
        logits = backend.next_token_logits([0, 1], [])
        assert logits[0] > logits[2] and logits[1] > logits[2]

    def test_hash_rule_eos_pressure_grows(self):
        backend = ToyBackend(vocab=VOCAB)
        short = backend.next_token_logits([0], [])[backend.eos_id]
        long = backend.next_token_logits([0], [1] * 12)[backend.eos_id]
        assert long > short


class TestGreedyDecode:
    def test_follows_table_until_eos(self):
        table = {
            (): [0.0, 5.0, 0.0, -9.0],
            (1,): [5.0, 0.0, 0.0, -9.0],
            (1, 0): [0.0, 0.0, 0.0, 9.0],
        }
        backend = table_backend(table)
        assert greedy_decode(backend, [2]) == [1, 0]

    def test_token_cap(self):
        backend = table_backend({}, default_row=[5.0, 0.0, 0.0, -9.0])
        assert greedy_decode(backend, [2], max_new_tokens=3) == [0, 0, 0]

    def test_on_logits_observer(self):
        backend = table_backend({}, default_row=[5.0, 0.0, 0.0, -9.0])
        seen = []
        greedy_decode(backend, [2], max_new_tokens=2, on_logits=seen.append)
        assert len(seen) == 2
        assert all(row.shape == (4,) for row in seen)


class TestLatentPath:
    def test_encode_deterministic_and_bounded(self):
        backend = ToyBackend(latent_dim=12)
        z1 = backend.encode("the food was great")
        z2 = backend.encode("the food was great")
        assert np.array_equal(z1, z2)
        assert z1.shape == (12,)
        assert z1.min() >= -1.0 and z1.max() < 1.0
        assert not np.array_equal(z1, backend.encode("different text"))

    def test_decode_deterministic_non_eos_words(self):
        backend = ToyBackend(latent_dim=8)
        z = backend.encode("some text")
        out = backend.decode_from_latent(z)
        assert out == backend.decode_from_latent(z)
        assert len(out.split()) == 8
        assert "<eos>" not in out

    def test_decode_rejects_bad_latent(self):
        backend = ToyBackend()
        with pytest.raises(InvalidArgumentError):
            backend.decode_from_latent(np.zeros((2, 2)))


class TestFit:
    def test_memorizes_pairs(self, tmp_path):
        backend = ToyBackend(vocab=VOCAB)
        cfg = FineTuneConfig(seed=1, output_dir=tmp_path)
        backend.fit([("b", "a")], cfg)
        tokens = greedy_decode(backend, backend.tokenize("b"))
        assert backend.detokenize(tokens) == "a"

    def test_translation_fallback_on_unseen_input(self, tmp_path):
        backend = ToyBackend(vocab=VOCAB)
        backend.fit([("b c", "a a"), ("b", "a")], FineTuneConfig(seed=1, output_dir=tmp_path))
        tokens = greedy_decode(backend, backend.tokenize("c b b"))
        assert backend.detokenize(tokens) == "a a a"

    def test_empty_pairs_rejected(self, tmp_path):
        backend = ToyBackend(vocab=VOCAB)
        with pytest.raises(InvalidArgumentError):
            backend.fit([], FineTuneConfig(output_dir=tmp_path))

    def test_manifest_contents(self, tmp_path):
        backend = ToyBackend(vocab=VOCAB)
        cfg = FineTuneConfig(base_spec="toy", seed=5, output_dir=tmp_path)
        handle = backend.fit([("b", "a"), ("c", "a")], cfg)
        manifest = read_model_manifest(handle)
        assert manifest["id"] == handle.id
        assert manifest["backend_kind"] == "toy"
        assert manifest["base_spec"] == "toy"
        assert manifest["parent"] is None
        assert manifest["examples"] == 2
        assert manifest["data_fingerprint"] == pairs_fingerprint([("b", "a"), ("c", "a")])
        assert manifest["config"]["seed"] == 5
        assert "output_dir" not in manifest["config"]

    def test_persistence_round_trip(self, tmp_path):
        backend = ToyBackend(vocab=VOCAB)
        handle = backend.fit([("b c", "a")], FineTuneConfig(seed=2, output_dir=tmp_path))
        loaded = load_trained(handle)
        prompt = loaded.tokenize("b c")
        assert loaded.detokenize(greedy_decode(loaded, prompt)) == "a"

    def test_continued_fit_links_parent(self, tmp_path):
        backend = ToyBackend(vocab=VOCAB)
        cfg = FineTuneConfig(seed=2, output_dir=tmp_path)
        first = backend.fit([("b", "a")], cfg)
        second = backend.fit([("c", "a")], cfg)
        assert read_model_manifest(first)["parent"] is None
        assert read_model_manifest(second)["parent"] == first.id
        assert first.id != second.id

    def test_handle_id_content_addressed(self, tmp_path):
        cfg_a = FineTuneConfig(seed=2, output_dir=tmp_path / "one")
        cfg_b = FineTuneConfig(seed=2, output_dir=tmp_path / "two")
        id_a = ToyBackend(vocab=VOCAB).fit([("b", "a")], cfg_a).id
        id_b = ToyBackend(vocab=VOCAB).fit([("b", "a")], cfg_b).id
        assert id_a == id_b  # storage location is not part of identity
        id_c = ToyBackend(vocab=VOCAB).fit([("b", "a")], FineTuneConfig(seed=3, output_dir=tmp_path)).id
        assert id_c != id_a


class TestRegistry:
    def test_toy_with_options(self):
        backend = load_backend("toy", {"vocab": VOCAB, "seed": 9})
        assert backend.vocab_size == 4
        assert backend.seed == 9

    def test_unknown_spec(self):
        with pytest.raises(ConfigurationError):
            load_backend("markov-chain")

    def test_empty_checkpoint_id(self):
        with pytest.raises(ConfigurationError):
            load_backend("seq2seq-checkpoint:")

    def test_load_trained_requires_manifest(self, tmp_path):
        with pytest.raises(BackendLoadError):
            load_trained(tmp_path)

    def test_load_trained_unknown_kind(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"backend_kind": "mystery"}))
        with pytest.raises(BackendLoadError):
            load_trained(tmp_path)


class TestCapabilities:
    def test_base_interface_raises(self):
        base = InferenceBackend()
        with pytest.raises(CapabilityError):
            base.tokenize("x")
        with pytest.raises(CapabilityError):
            base.encode("x")
        with pytest.raises(CapabilityError):
            base.decode_from_latent(np.zeros(3))
        with pytest.raises(CapabilityError):
            base.next_token_logits([], [])


class TestFineTuneConfig:
    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            FineTuneConfig(epochs=0)
        with pytest.raises(InvalidArgumentError):
            FineTuneConfig(learning_rate=0.0)

    def test_identity_excludes_output_dir(self):
        cfg = FineTuneConfig(seed=4, output_dir="anywhere")
        ident = cfg.identity_dict()
        assert "output_dir" not in ident
        assert ident["learning_rate"] == 5e-5
        assert ident["epochs"] == 1


class TestPairsFingerprint:
    def test_order_and_content_sensitive(self):
        a = pairs_fingerprint([("x", "y"), ("u", "v")])
        assert a == pairs_fingerprint([("x", "y"), ("u", "v")])
        assert a != pairs_fingerprint([("u", "v"), ("x", "y")])
        assert a != pairs_fingerprint([("x", "y")])
