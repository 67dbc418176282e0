"""Shared currency of the package: vocabularies, token sequences as plain
int tuples, validated categorical distributions, and a reproducible RNG.

All probability vectors live in plain probability space (no logs) and are
validated at construction rather than silently renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import AllZeroWeights

__all__ = [
    "PROB_ATOL",
    "Categorical",
    "SeededRng",
    "Vocabulary",
    "categorical_normalize",
    "categorical_sample",
    "check_clean_sequence",
    "check_corrupted_sequence",
    "sequence_code",
    "sequence_from_code",
    "tokens_from_word",
    "word_from_tokens",
]

# Absolute tolerance for "sums to one" checks on probability vectors.
PROB_ATOL = 1e-9


@dataclass(frozen=True)
class Vocabulary:
    """Clean alphabet {0, ..., size-1}; the mask symbol sits at index `size`.

    Corrupted sequences may therefore contain tokens in {0, ..., size}, clean
    sequences only tokens in {0, ..., size-1}.
    """

    size: int

    def __post_init__(self) -> None:
        if not isinstance(self.size, int) or self.size < 2:
            raise ValueError(f"vocabulary size must be an int >= 2, got {self.size!r}")

    @property
    def mask_id(self) -> int:
        return self.size

    @property
    def corrupt_size(self) -> int:
        """Number of symbols a corrupted token can take (clean alphabet plus mask)."""
        return self.size + 1


def check_clean_sequence(tokens: Sequence[int], vocab: Vocabulary) -> tuple[int, ...]:
    """Validate a clean sequence (no mask symbol) and return it as a tuple."""
    out = tuple(int(v) for v in tokens)
    for j, v in enumerate(out):
        if not 0 <= v < vocab.size:
            raise ValueError(f"clean token out of range at position {j}: {v}")
    return out

def check_corrupted_sequence(tokens: Sequence[int], vocab: Vocabulary) -> tuple[int, ...]:
    """Validate a corrupted sequence (mask allowed) and return it as a tuple."""
    out = tuple(int(v) for v in tokens)
    for j, v in enumerate(out):
        if not 0 <= v <= vocab.mask_id:
            raise ValueError(f"corrupted token out of range at position {j}: {v}")
    return out


def sequence_code(tokens: Sequence[int], base: int) -> int:
    """Mixed-radix code of a sequence; position 0 is the most significant digit."""
    code = 0
    for v in tokens:
        if not 0 <= v < base:
            raise ValueError(f"token {v} out of range for base {base}")
        code = code * base + int(v)
    return code

def sequence_from_code(code: int, base: int, length: int) -> tuple[int, ...]:
    """Inverse of :func:`sequence_code`."""
    if code < 0 or code >= base**length:
        raise ValueError(f"code {code} out of range for base {base}, length {length}")
    out = []
    for _ in range(length):
        out.append(code % base)
        code //= base
    return tuple(reversed(out))


def tokens_from_word(word: str) -> tuple[int, ...]:
    """Letter shorthand for tiny alphabets: 'a' is token 0, 'b' token 1, and so on."""
    out = []
    for ch in word:
        v = ord(ch) - ord("a")
        if not 0 <= v < 16:
            raise ValueError(f"letter {ch!r} outside the supported a..p range")
        out.append(v)
    return tuple(out)

def word_from_tokens(tokens: Sequence[int]) -> str:
    return "".join(chr(ord("a") + int(v)) for v in tokens)


@dataclass(frozen=True)
class Categorical:
    """Probability vector over token indices, the universal currency of posteriors.

    Construction rejects negative entries and vectors whose mass deviates from
    one by more than ``PROB_ATOL``; use :func:`categorical_normalize` to build
    a distribution from unnormalized weights.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float, copy=True)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probability vector must be one-dimensional and nonempty")
        if np.any(p < 0.0):
            raise ValueError("probability entries must be nonnegative")
        total = float(p.sum())
        if abs(total - 1.0) > PROB_ATOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1 within {PROB_ATOL}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return int(self.probs.size)

    def prob(self, index: int) -> float:
        return float(self.probs[index])

    @staticmethod
    def delta(index: int, size: int) -> "Categorical":
        p = np.zeros(size)
        p[index] = 1.0
        return Categorical(p)

    @staticmethod
    def uniform(size: int) -> "Categorical":
        return Categorical(np.full(size, 1.0 / size))


def categorical_normalize(weights: Iterable[float]) -> Categorical:
    """Rescale nonnegative weights into a Categorical.

    Raises AllZeroWeights when the total mass is zero (there is no principled
    distribution to return) and ValueError on negative entries.
    """
    w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weight vector must be one-dimensional and nonempty")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    total = float(w.sum())
    if total <= 0.0:
        raise AllZeroWeights("cannot normalize a zero weight vector")
    return Categorical(w / total)


class SeededRng:
    """Deterministic random source backed by the Philox 4x64 counter-based bit
    generator, so equal seeds replay byte-identical draw sequences on any
    platform.

    Parallel workers derive their own streams with ``derive(worker_index)``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return float(self._gen.random())

    def uniforms(self, shape: int | tuple[int, ...]) -> np.ndarray:
        """Array of doubles in [0, 1)."""
        return self._gen.random(shape)

    def dirichlet(self, alphas: np.ndarray) -> np.ndarray:
        return self._gen.dirichlet(np.asarray(alphas, dtype=float))

    def derive(self, offset: int) -> "SeededRng":
        """Independent stream for worker `offset`; offsets must be distinct."""
        return SeededRng(self.seed + int(offset))


def categorical_sample(dist: Categorical, rng: SeededRng) -> int:
    """Draw one index from `dist`, advancing `rng` by a single uniform.

    Inverse-CDF sampling on the cumulative sums; zero-probability entries are
    never returned.
    """
    cdf = np.cumsum(dist.probs)
    u = rng.uniform()
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= len(dist.probs):
        # Total mass can fall a few ulp short of 1; fall back to the last
        # positive-probability index.
        positive = np.nonzero(dist.probs > 0.0)[0]
        idx = int(positive[-1])
    return idx
