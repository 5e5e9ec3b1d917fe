"""Mechanism-independent differential-privacy primitives.

Implements the numeric core shared by the rewriting mechanisms: value
clipping, sensitivity bookkeeping, Laplace noise, temperature sampling over
clipped logits (an instance of the exponential mechanism, giving a per-token
ratio bound of e^(2*delta/T) where delta is the clip width), and the
conversion between sampling temperature and the word-level privacy
parameter, epsilon = 2 * delta / T.

All randomized operations take an explicit :class:`RandomSource` so that
equal (seed, stream) always reproduces equal output.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError

_MAX_UINT64 = 2**64


class Granularity(str, Enum):
    """Syntactic unit covered by one epsilon expenditure."""

    WORD = "word_level"
    DOCUMENT = "document_level"


@dataclass(frozen=True)
class PrivacyBudget:
    """An epsilon value together with the granularity it applies to."""

    epsilon: float
    granularity: Granularity

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "granularity", Granularity(self.granularity))


@dataclass(frozen=True)
class ClipRange:
    """Closed interval [low, high] used to bound logits or latent values.

    The width doubles as the sensitivity of a clipped score, so degenerate
    ranges (low >= high) are rejected rather than treated as deterministic.
    """

    low: float
    high: float

    def __post_init__(self):
        if not (np.isfinite(self.low) and np.isfinite(self.high)):
            raise InvalidArgumentError("clip bounds must be finite")
        if self.low >= self.high:
            raise InvalidArgumentError(
                f"clip range must satisfy low < high, got ({self.low}, {self.high})"
            )

    def width(self) -> float:
        return self.high - self.low


@dataclass(frozen=True)
class NoiseSpec:
    """Noise distribution and scale for latent perturbation."""

    scale: float
    distribution: str = "laplace"

    def __post_init__(self):
        if self.distribution != "laplace":
            raise InvalidArgumentError(
                f"unsupported noise distribution {self.distribution!r}"
            )
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise InvalidArgumentError(f"noise scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class RandomSource:
    """Keyed randomness: equal (seed, stream) yields equal sample sequences.

    Parallel work units must each own a distinct stream id. Stream ids above
    2**63 are reserved for internally derived sub-streams.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name, value in (("seed", self.seed), ("stream", self.stream)):
            if not 0 <= value < _MAX_UINT64:
                raise InvalidArgumentError(f"{name} must be a 64-bit unsigned integer")

    def generator(self) -> np.random.Generator:
        """Fresh generator; repeated calls replay the same sequence."""
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        )

    def derived(self, offset_bit: int = 63) -> "RandomSource":
        """Source on a reserved sub-stream, disjoint from low-numbered streams."""
        return RandomSource(self.seed, self.stream | (1 << offset_bit))


def _as_generator(rng: RandomSource | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RandomSource):
        return rng.generator()
    return rng


def _check_vector(values: Sequence[float] | np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return arr


def epsilon_from_temperature(clip: ClipRange, temperature: float) -> PrivacyBudget:
    """Word-level epsilon implied by temperature sampling over clipped logits.

    epsilon = 2 * width / T, with width = clip.high - clip.low acting as the
    per-step sensitivity. Returned at full precision; round only for display.
    """
    if not np.isfinite(temperature) or temperature <= 0:
        raise InvalidArgumentError(f"temperature must be positive, got {temperature}")
    return PrivacyBudget(2.0 * clip.width() / temperature, Granularity.WORD)


def temperature_from_epsilon(clip: ClipRange, epsilon: float) -> float:
    """Inverse of :func:`epsilon_from_temperature`: T = 2 * width / epsilon."""
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    return 2.0 * clip.width() / epsilon


def clip_values(values: Sequence[float] | np.ndarray, clip: ClipRange) -> np.ndarray:
    """Clamp each entry into [clip.low, clip.high]; idempotent, length-preserving."""
    arr = _check_vector(values, "values")
    return np.clip(arr, clip.low, clip.high)


def token_distribution(
    logits: Sequence[float] | np.ndarray, clip: ClipRange, temperature: float
) -> np.ndarray:
    """Sampling distribution softmax(clip(logits) / T).

    The max logit is subtracted before exponentiation for numerical
    stability; the result is unchanged mathematically.
    """
    if not np.isfinite(temperature) or temperature <= 0:
        raise InvalidArgumentError(f"temperature must be positive, got {temperature}")
    clipped = clip_values(logits, clip)
    shifted = (clipped - clipped.max()) / temperature
    weights = np.exp(shifted)
    return weights / weights.sum()


def sample_token(
    logits: Sequence[float] | np.ndarray,
    clip: ClipRange,
    temperature: float,
    rng: RandomSource | np.random.Generator,
) -> int:
    """Draw one token index with probability proportional to exp(clip(l_i)/T).

    Inverse-CDF sampling on one uniform draw; a draw landing exactly on a
    CDF boundary resolves to the lower index. Pass a Generator (not a
    RandomSource) when sampling several tokens in sequence, otherwise every
    call replays the same draw.
    """
    probs = token_distribution(logits, clip, temperature)
    gen = _as_generator(rng)
    u = gen.random()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0  # guard against accumulated rounding below 1
    return int(np.searchsorted(cdf, u, side="left"))


def latent_sensitivity(clip_value: float, dims: int) -> float:
    """L1 sensitivity of a latent vector clipped per-coordinate to [-C, C].

    Any two inputs map into the cube [-C, C]^n, so the L1 distance between
    their clipped latents is at most 2 * C * n.
    """
    if not np.isfinite(clip_value) or clip_value <= 0:
        raise InvalidArgumentError(f"clip_value must be positive, got {clip_value}")
    if dims < 1:
        raise InvalidArgumentError(f"dims must be a positive integer, got {dims}")
    return 2.0 * clip_value * dims


def laplace_noise(scale: float, dims: int, rng: RandomSource | np.random.Generator) -> np.ndarray:
    """dims independent draws from Laplace(0, scale)."""
    if not np.isfinite(scale) or scale <= 0:
        raise InvalidArgumentError(f"scale must be positive, got {scale}")
    if dims < 1:
        raise InvalidArgumentError(f"dims must be a positive integer, got {dims}")
    gen = _as_generator(rng)
    return gen.laplace(0.0, scale, size=dims)


def compose_word_level(epsilon_per_token: float, tokens: int) -> float:
    """Naive sequential composition total over generated tokens.

    Reported for bookkeeping alongside the per-token epsilon; no tighter
    accounting is attempted.
    """
    if epsilon_per_token <= 0:
        raise InvalidArgumentError("epsilon_per_token must be positive")
    if tokens < 0:
        raise InvalidArgumentError("tokens must be non-negative")
    return epsilon_per_token * tokens


def estimate_logit_range(backend, texts: Iterable, n: int = 100) -> ClipRange:
    """Observed (min, max) over all decoder-step logits on the first n texts.

    Each text is greedily decoded; every pre-clip logit vector the backend
    produces along the way contributes to the range. ``texts`` may be raw
    strings or records with a ``text`` attribute.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    pool = [t.text if hasattr(t, "text") else str(t) for t in texts]
    if len(pool) < n:
        raise InvalidArgumentError(f"need at least {n} texts, got {len(pool)}")

    lo = np.inf
    hi = -np.inf

    def observe(logits: np.ndarray) -> None:
        nonlocal lo, hi
        lo = min(lo, float(np.min(logits)))
        hi = max(hi, float(np.max(logits)))

    from .backends import greedy_decode  # local import to keep dp_core standalone

    for text in pool[:n]:
        greedy_decode(backend, backend.tokenize(text), on_logits=observe)
    return ClipRange(lo, hi)
