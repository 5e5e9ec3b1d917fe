"""Differentially private text rewriting with post-hoc re-alignment.

Rewrite text under a DP mechanism (word-level prompt sampling or
document-level latent noise), train a reverse Text2Text model on the aligned
outputs, re-rewrite for free under the post-processing property, and measure
what an attribute-inference attacker can still recover.
"""

from .backends import (
    FineTuneConfig,
    InferenceBackend,
    Seq2seqCheckpointBackend,
    ToyBackend,
    TrainableBackend,
    TrainedModelHandle,
    greedy_decode,
    load_backend,
    load_trained,
    read_model_manifest,
)
from .corpus import (
    AlignedPair,
    DatasetSplit,
    ReversePair,
    TextRecord,
    build_reverse_pairs,
    load_aligned,
    load_jsonl,
    load_reverse_pairs,
    sample_public_corpus,
    save_aligned,
    save_jsonl,
    save_reverse_pairs,
    split_dataset,
)
from .dp_core import (
    ClipRange,
    Granularity,
    NoiseSpec,
    PrivacyBudget,
    RandomSource,
    clip_values,
    compose_word_level,
    epsilon_from_temperature,
    estimate_logit_range,
    laplace_noise,
    latent_sensitivity,
    sample_token,
    temperature_from_epsilon,
    token_distribution,
)
from .errors import (
    BackendLoadError,
    CapabilityError,
    ConfigurationError,
    DataValidationError,
    InvalidArgumentError,
    MissingArtifactError,
    RewriteAgainError,
    ValidationLeakError,
)
from .evaluation import (
    AttackerKind,
    ClassifierConfig,
    EncoderBackend,
    HashedBagEncoder,
    PrivacyReport,
    TokenPerceptron,
    cosine,
    cs_score,
    evaluate_attack,
    f1_score,
    load_encoder,
    majority_baseline,
    run_empirical_privacy,
    train_attacker,
)
from .mechanisms import (
    DP_BART_CLV,
    DP_PROMPT,
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
from .realign import (
    ReleaseRecord,
    Track,
    load_release,
    pairs_fingerprint,
    rerewrite,
    results_from_pairs,
    save_release,
    train_T,
    train_Tpp,
)
from .reports import (
    render_report_csv,
    render_report_text,
    reports_to_json,
    save_reports,
)
from .toydata import LEXICON, make_private_corpus, make_public_corpus

__version__ = "0.1.0"
