"""Count-based position-conditioned predictor and its training loop.

Training draws (clean sequence, corruption level, corrupted sequence) triples,
walks the genuinely corrupted positions in ascending order, and for each one
counts the clean token against the hybrid input (clean tokens before the
position, corrupted tokens from it on). Maximum likelihood over such counts is
the exact minimizer of the per-position cross-entropy objective, so with
enough samples the table converges to the enumerated oracle conditionals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Categorical, SeededRng, Vocabulary
from .errors import UnseenContext
from .forward import KernelSchedule, sample_forward
from .oracle import DataLaw, ExactPredictor, HybridContext, prefix_posterior

__all__ = [
    "LearnedPredictor",
    "TrainConfig",
    "exact_conditional_entropy",
    "load_predictor",
    "loss_eval",
    "predict",
    "save_predictor",
    "train_position_conditioned",
]


@dataclass(frozen=True)
class TrainConfig:
    """Sampling budget and smoothing for one training run.

    t_probs is the sampling law over corruption levels 1..T; None means
    uniform. Smoothing 0 keeps raw maximum likelihood (queries at unseen
    contexts then raise), 0.5 adds a Jeffreys-style pseudocount per token.
    """

    n_samples: int
    smoothing: float = 0.5
    seed: int = 0
    t_probs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.smoothing < 0.0:
            raise ValueError("smoothing must be >= 0")
        if self.t_probs is not None:
            p = np.asarray(self.t_probs, dtype=float)
            if np.any(p < 0.0) or abs(float(p.sum()) - 1.0) > 1e-9:
                raise ValueError("t_probs must be a distribution")


class LearnedPredictor:
    """Tabular conditional model keyed by exact hybrid contexts.

    Implements the same `target` interface as the enumerated oracle, so it can
    be plugged into any decoder as the verification law.
    """

    def __init__(self, vocab: Vocabulary, dim: int, smoothing: float,
                 counts: dict[HybridContext, np.ndarray] | None = None):
        self.vocab = vocab
        self.dim = dim
        self.smoothing = float(smoothing)
        self.counts: dict[HybridContext, np.ndarray] = counts if counts is not None else {}

    def observe(self, ctx: HybridContext, token: int) -> None:
        row = self.counts.get(ctx)
        if row is None:
            row = np.zeros(self.vocab.size)
            self.counts[ctx] = row
        row[token] += 1.0

    def predict(self, ctx: HybridContext) -> Categorical:
        row = self.counts.get(ctx)
        if row is None:
            if self.smoothing <= 0.0:
                raise UnseenContext(f"no observations for context {ctx}")
            return Categorical.uniform(self.vocab.size)
        w = row + self.smoothing
        total = w.sum()
        if total <= 0.0:
            raise UnseenContext(f"no observations for context {ctx}")
        return Categorical(w / total)

    # Decoder-facing alias.
    def target(self, ctx: HybridContext) -> Categorical:
        return self.predict(ctx)

    def with_smoothing(self, smoothing: float) -> "LearnedPredictor":
        """Same counts, different smoothing; the count table is shared."""
        return LearnedPredictor(self.vocab, self.dim, smoothing, self.counts)

    def seen_contexts(self) -> list[HybridContext]:
        return list(self.counts.keys())


def _sample_t(t_probs: np.ndarray, rng: SeededRng) -> int:
    cdf = np.cumsum(t_probs)
    return int(np.searchsorted(cdf, rng.uniform(), side="right")) + 1


def _resolve_t_probs(cfg_probs: tuple[float, ...] | None, steps: int) -> np.ndarray:
    if cfg_probs is None:
        return np.full(steps, 1.0 / steps)
    p = np.asarray(cfg_probs, dtype=float)
    if p.shape != (steps,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("t_probs must be a distribution over levels 1..T")
    return p


def train_position_conditioned(law: DataLaw, sched: KernelSchedule,
                               cfg: TrainConfig) -> LearnedPredictor:
    """Count-based fit of p(clean token at the pivot | hybrid input, t).

    Only positions whose corrupted token differs from the clean one are
    counted; under uniform-mixing kernels a position can be corrupted back
    onto its own value and is then skipped, exactly as the sampling objective
    dictates.
    """
    t_probs = _resolve_t_probs(cfg.t_probs, sched.steps)
    rng = SeededRng(cfg.seed)
    model = LearnedPredictor(law.vocab, law.dim, cfg.smoothing)
    for _ in range(cfg.n_samples):
        x0 = law.sample(rng)
        t = _sample_t(t_probs, rng)
        xt = sample_forward(x0, t, sched, rng)
        for pivot in range(law.dim):
            if xt[pivot] == x0[pivot]:
                continue
            ctx = HybridContext(pivot, x0[:pivot], xt[pivot:], t)
            model.observe(ctx, x0[pivot])
    return model


def predict(model: LearnedPredictor, ctx: HybridContext) -> Categorical:
    return model.predict(ctx)


def loss_eval(model, law: DataLaw, sched: KernelSchedule, n_eval: int,
              rng: SeededRng, t_probs: Sequence[float] | None = None) -> float:
    """Monte Carlo negative log-likelihood per predicted token, under the same
    sampling scheme as training. `model` is anything with the target
    interface, so the enumerated oracle can be scored as well."""
    probs = _resolve_t_probs(tuple(t_probs) if t_probs is not None else None, sched.steps)
    total = 0.0
    count = 0
    for _ in range(n_eval):
        x0 = law.sample(rng)
        t = _sample_t(probs, rng)
        xt = sample_forward(x0, t, sched, rng)
        for pivot in range(law.dim):
            if xt[pivot] == x0[pivot]:
                continue
            ctx = HybridContext(pivot, x0[:pivot], xt[pivot:], t)
            p = model.target(ctx).prob(x0[pivot])
            total += -np.log(max(p, 1e-300))
            count += 1
    if count == 0:
        return 0.0
    return total / count


def exact_conditional_entropy(law: DataLaw, sched: KernelSchedule,
                              t_probs: Sequence[float] | None = None) -> float:
    """Exact per-token conditional entropy of the clean token given the hybrid
    input, enumerated over every (x0, t, xt) with positive mass.

    This is the loss floor: the expected loss of the enumerated oracle itself,
    and the infimum of `loss_eval` over all models.
    """
    probs = _resolve_t_probs(tuple(t_probs) if t_probs is not None else None, sched.steps)
    oracle = ExactPredictor(law, sched)
    s, d = law.vocab.size, law.dim
    if (s + 1) ** d * law.table.size > 10_000_000:
        raise ValueError("enumeration would be too large for the exact entropy")
    total = 0.0
    weight_tokens = 0.0
    for code in range(law.table.size):
        px0 = float(law.table[code])
        if px0 == 0.0:
            continue
        x0 = _decode(code, s, d)
        for t_idx in range(sched.steps):
            pt = float(probs[t_idx])
            if pt == 0.0:
                continue
            t = t_idx + 1
            qbar = sched.cum(t)
            rows = [qbar[v, :] for v in x0]
            for xt_code in range((s + 1) ** d):
                xt = _decode(xt_code, s + 1, d)
                q = 1.0
                for j in range(d):
                    q *= float(rows[j][xt[j]])
                    if q == 0.0:
                        break
                if q == 0.0:
                    continue
                w = px0 * pt * q
                for pivot in range(d):
                    if xt[pivot] == x0[pivot]:
                        continue
                    ctx = HybridContext(pivot, x0[:pivot], xt[pivot:], t)
                    p = oracle.target(ctx).prob(x0[pivot])
                    total += -w * np.log(max(p, 1e-300))
                    weight_tokens += w
    if weight_tokens == 0.0:
        return 0.0
    return total / weight_tokens


def _decode(code: int, base: int, length: int) -> tuple[int, ...]:
    out = []
    for _ in range(length):
        out.append(code % base)
        code //= base
    return tuple(reversed(out))


# ---- serialization ----------------------------------------------------------
#
# Plain JSON: {"vocab_size", "dim", "smoothing", "counts": {key: [..]}} where
# key is "t|pivot|prefix|suffix" with comma-separated tokens (empty string for
# an empty prefix).


def _context_key(ctx: HybridContext) -> str:
    prefix = ",".join(str(v) for v in ctx.clean_prefix)
    suffix = ",".join(str(v) for v in ctx.corrupted_suffix)
    return f"{ctx.t}|{ctx.pivot}|{prefix}|{suffix}"


def _context_from_key(key: str) -> HybridContext:
    t_s, pivot_s, prefix_s, suffix_s = key.split("|")
    prefix = tuple(int(v) for v in prefix_s.split(",")) if prefix_s else ()
    suffix = tuple(int(v) for v in suffix_s.split(",")) if suffix_s else ()
    return HybridContext(int(pivot_s), prefix, suffix, int(t_s))


def save_predictor(model: LearnedPredictor, path: str | Path) -> None:
    doc = {
        "vocab_size": model.vocab.size,
        "dim": model.dim,
        "smoothing": model.smoothing,
        "counts": {_context_key(ctx): [float(c) for c in row]
                   for ctx, row in sorted(model.counts.items(), key=lambda kv: _context_key(kv[0]))},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_predictor(path: str | Path) -> LearnedPredictor:
    doc = json.loads(Path(path).read_text())
    vocab = Vocabulary(int(doc["vocab_size"]))
    counts = {_context_from_key(key): np.asarray(row, dtype=float)
              for key, row in doc["counts"].items()}
    return LearnedPredictor(vocab, int(doc["dim"]), float(doc["smoothing"]), counts)
