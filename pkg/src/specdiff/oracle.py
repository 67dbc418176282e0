"""Exact tabular data laws and their enumerated conditionals.

A DataLaw stores the full joint over clean sequences as a dense table, so
every posterior the decoders need is computable by summation, with no
approximation anywhere. Conditioning is expressed as per-position evidence:

    ("x0", v)      the clean token at this position is v
    ("xt", u)      the corrupted token at this position is u
    ("x0xt", v, u) both are observed (the corrupted one is then redundant)
    None           nothing observed at this position

which covers independent posteriors, prefix-conditioned posteriors, draft
laws that skip one observation, joint clean posteriors, and the re-corruption
conditionals used by multi-pass decoding.

All computation happens in plain probability space: weights are the joint
table times per-position likelihood factors, then summed over nuisance axes
and normalized once at the end.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .core import (
    Categorical,
    SeededRng,
    Vocabulary,
    check_clean_sequence,
    check_corrupted_sequence,
    sequence_code,
    sequence_from_code,
    tokens_from_word,
)
from .errors import DegenerateFactor, LengthMismatch, ZeroProbabilityEvent
from .forward import KernelSchedule, marginal

__all__ = [
    "DataLaw",
    "DraftContext",
    "ExactPredictor",
    "HybridContext",
    "clean_posterior_joint",
    "draft_law",
    "factorized_joint",
    "independent_posterior",
    "joint_prob",
    "prefix_identity_gap",
    "prefix_posterior",
    "recorruption_conditional",
]

# Dense-table guards: enumeration must stay desk-scale.
MAX_DIM = 8
MAX_CELLS = 1_000_000

PROB_ATOL = 1e-9

Evidence = tuple  # per-position evidence item, see module docstring


class DataLaw:
    """Joint distribution over clean sequences of length `dim`, stored densely.

    The flat table is indexed by the mixed-radix sequence code with position 0
    as the most significant digit.
    """

    def __init__(self, vocab: Vocabulary, dim: int, table: np.ndarray):
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"dim must be in 1..{MAX_DIM}, got {dim}")
        cells = vocab.size**dim
        if cells > MAX_CELLS:
            raise ValueError(f"table would hold {cells} cells, above the {MAX_CELLS} cap")
        t = np.array(table, dtype=float, copy=True).reshape(-1)
        if t.size != cells:
            raise ValueError(f"table has {t.size} entries, expected {cells}")
        if np.any(t < 0.0):
            raise ValueError("table entries must be nonnegative")
        total = float(t.sum())
        if abs(total - 1.0) > PROB_ATOL:
            raise ValueError(f"table mass is {total!r}, expected 1 within {PROB_ATOL}")
        t.setflags(write=False)
        self.vocab = vocab
        self.dim = dim
        self.table = t

    @cached_property
    def table_nd(self) -> np.ndarray:
        return self.table.reshape((self.vocab.size,) * self.dim)

    @cached_property
    def _cdf(self) -> np.ndarray:
        return np.cumsum(self.table)

    def prob(self, x0: Sequence[int]) -> float:
        """Joint probability of one clean sequence."""
        clean = check_clean_sequence(x0, self.vocab)
        if len(clean) != self.dim:
            raise LengthMismatch(f"sequence has length {len(clean)}, law has dim {self.dim}")
        return float(self.table[sequence_code(clean, self.vocab.size)])

    def sample(self, rng: SeededRng) -> tuple[int, ...]:
        """One clean sequence drawn from the law."""
        u = rng.uniform()
        code = int(np.searchsorted(self._cdf, u, side="right"))
        if code >= self.table.size:
            code = int(np.nonzero(self.table > 0.0)[0][-1])
        return sequence_from_code(code, self.vocab.size, self.dim)

    # ---- named constructors -------------------------------------------------

    @staticmethod
    def uniform(vocab: Vocabulary, dim: int) -> "DataLaw":
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"dim must be in 1..{MAX_DIM}, got {dim}")
        cells = vocab.size**dim
        return DataLaw(vocab, dim, np.full(cells, 1.0 / cells))

    @staticmethod
    def product(vocab: Vocabulary, marginals: Sequence[Sequence[float]]) -> "DataLaw":
        """Independent positions with the given per-position marginals."""
        dim = len(marginals)
        table = np.ones(1)
        for m in marginals:
            v = np.asarray(m, dtype=float)
            if v.shape != (vocab.size,):
                raise ValueError("each marginal must have one entry per clean token")
            table = np.multiply.outer(table, v).reshape(-1)
        return DataLaw(vocab, dim, table)

    @staticmethod
    def markov(vocab: Vocabulary, dim: int, initial: Sequence[float],
               transition: Sequence[Sequence[float]]) -> "DataLaw":
        """First-order chain: p(x) = initial[x_0] * prod_j transition[x_{j-1}, x_j]."""
        s = vocab.size
        init = np.asarray(initial, dtype=float)
        trans = np.asarray(transition, dtype=float)
        if init.shape != (s,) or trans.shape != (s, s):
            raise ValueError("initial must be (S,), transition (S, S)")
        if np.any(init < 0) or abs(init.sum() - 1.0) > PROB_ATOL:
            raise ValueError("initial must be a distribution over clean tokens")
        if np.any(trans < 0) or np.any(np.abs(trans.sum(axis=1) - 1.0) > PROB_ATOL):
            raise ValueError("transition rows must each be a distribution")
        table = init
        for _ in range(dim - 1):
            table = table[..., None] * trans[(None,) * (table.ndim - 1)]
        return DataLaw(vocab, dim, table.reshape(-1))

    @staticmethod
    def from_probs(vocab: Vocabulary, dim: int,
                   probs: Mapping[Sequence[int] | str, float]) -> "DataLaw":
        """Handcrafted law from a sparse {sequence: probability} mapping.

        Keys may be token tuples, comma-separated index strings ("0,1"), or
        letter words ("ab") for alphabets up to 16 symbols.
        """
        table = np.zeros(vocab.size**dim)
        for key, p in probs.items():
            tokens = _parse_sequence_key(key)
            clean = check_clean_sequence(tokens, vocab)
            if len(clean) != dim:
                raise LengthMismatch(f"key {key!r} has length {len(clean)}, law has dim {dim}")
            table[sequence_code(clean, vocab.size)] += float(p)
        return DataLaw(vocab, dim, table)

    @staticmethod
    def random(vocab: Vocabulary, dim: int, seed: int,
               concentration: float = 1.0) -> "DataLaw":
        """Dirichlet draw over all cells; strictly positive almost surely."""
        if concentration <= 0.0:
            raise ValueError("concentration must be positive")
        rng = SeededRng(seed)
        cells = vocab.size**dim
        return DataLaw(vocab, dim, rng.dirichlet(np.full(cells, concentration)))


def _parse_sequence_key(key: Sequence[int] | str) -> tuple[int, ...]:
    if isinstance(key, str):
        if "," in key:
            return tuple(int(part) for part in key.split(","))
        return tokens_from_word(key)
    return tuple(int(v) for v in key)


def joint_prob(law: DataLaw, x0: Sequence[int]) -> float:
    return law.prob(x0)


# ---- conditioning contexts --------------------------------------------------


@dataclass(frozen=True)
class HybridContext:
    """Input seen by a position-conditioned predictor: clean tokens strictly
    before the pivot, corrupted tokens (mask allowed) from the pivot on.

    Committed tokens sitting after the pivot are passed inside
    `corrupted_suffix` as survived corruptions; under absorbing kernels that
    conditioning is equivalent to observing them clean.
    """

    pivot: int
    clean_prefix: tuple[int, ...]
    corrupted_suffix: tuple[int, ...]
    t: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "clean_prefix", tuple(int(v) for v in self.clean_prefix))
        object.__setattr__(self, "corrupted_suffix", tuple(int(v) for v in self.corrupted_suffix))
        if self.pivot != len(self.clean_prefix):
            raise ValueError("pivot must equal the clean prefix length")
        if len(self.corrupted_suffix) < 1:
            raise ValueError("the pivot position itself must sit inside the suffix")
        if self.t < 1:
            raise ValueError("contexts are defined for corruption levels t >= 1")

    @property
    def dim(self) -> int:
        return self.pivot + len(self.corrupted_suffix)


@dataclass(frozen=True)
class DraftContext:
    """Input shared by one whole draft pass: the verified prefix plus the
    corrupted tokens strictly after position `verified_prefix_len`.

    The corrupted token at `verified_prefix_len` itself is deliberately
    excluded, which is what lets every window position be drafted from one
    frozen context.
    """

    verified_prefix_len: int
    clean_prefix: tuple[int, ...]
    corrupted_tail: tuple[int, ...]
    t: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "clean_prefix", tuple(int(v) for v in self.clean_prefix))
        object.__setattr__(self, "corrupted_tail", tuple(int(v) for v in self.corrupted_tail))
        if self.verified_prefix_len != len(self.clean_prefix):
            raise ValueError("verified_prefix_len must equal the clean prefix length")
        if self.t < 1:
            raise ValueError("contexts are defined for corruption levels t >= 1")

    @property
    def dim(self) -> int:
        return self.verified_prefix_len + 1 + len(self.corrupted_tail)


# ---- enumeration engine -----------------------------------------------------


def _posterior(law: DataLaw, sched: KernelSchedule, evidence: Sequence[Evidence | None],
               t: int, positions: tuple[int, ...],
               cache: dict | None = None) -> np.ndarray:
    """Normalized joint posterior over `positions` given per-position evidence.

    Returns a read-only flat array over clean codes of the queried positions
    (ascending position order, mixed-radix). Raises ZeroProbabilityEvent when
    the conditioning event has zero mass under the law plus schedule.
    """
    if len(evidence) != law.dim:
        raise LengthMismatch("evidence must list one item per position")
    key = (t, tuple(evidence), positions)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit

    s = law.vocab.size
    qbar = sched.cum(t)
    index: list[object] = []
    remaining: list[int] = []
    scale = 1.0
    for j, ev in enumerate(evidence):
        if ev is None:
            index.append(slice(None))
            remaining.append(j)
            continue
        tag = ev[0]
        if tag == "x0":
            index.append(int(ev[1]))
        elif tag == "x0xt":
            index.append(int(ev[1]))
            scale *= float(qbar[int(ev[1]), int(ev[2])])
        elif tag == "xt":
            index.append(slice(None))
            remaining.append(j)
        else:
            raise ValueError(f"unknown evidence tag {tag!r}")

    for p in positions:
        if p not in remaining:
            raise ValueError(f"queried position {p} is pinned by clean evidence")

    w = np.array(law.table_nd[tuple(index)], dtype=float, copy=True)
    if scale != 1.0:
        w *= scale
    for axis, j in enumerate(remaining):
        ev = evidence[j]
        if ev is None:
            continue
        lik = qbar[:s, int(ev[1])]
        shape = [1] * len(remaining)
        shape[axis] = s
        w *= lik.reshape(shape)

    drop = tuple(axis for axis, j in enumerate(remaining) if j not in positions)
    if drop:
        w = w.sum(axis=drop)
    total = float(w.sum())
    if total <= 0.0:
        raise ZeroProbabilityEvent("conditioning event has zero probability")
    out = (w / total).reshape(-1)
    out.setflags(write=False)
    if cache is not None:
        cache[key] = out
    return out


def _hybrid_evidence(ctx: HybridContext, law: DataLaw) -> list[Evidence | None]:
    if ctx.dim != law.dim:
        raise LengthMismatch(f"context covers {ctx.dim} positions, law has {law.dim}")
    check_clean_sequence(ctx.clean_prefix, law.vocab)
    check_corrupted_sequence(ctx.corrupted_suffix, law.vocab)
    ev: list[Evidence | None] = [("x0", v) for v in ctx.clean_prefix]
    ev.extend(("xt", u) for u in ctx.corrupted_suffix)
    return ev


def _draft_evidence(ctx: DraftContext, law: DataLaw) -> list[Evidence | None]:
    if ctx.dim != law.dim:
        raise LengthMismatch(f"context covers {ctx.dim} positions, law has {law.dim}")
    check_clean_sequence(ctx.clean_prefix, law.vocab)
    check_corrupted_sequence(ctx.corrupted_tail, law.vocab)
    ev: list[Evidence | None] = [("x0", v) for v in ctx.clean_prefix]
    ev.append(None)
    ev.extend(("xt", u) for u in ctx.corrupted_tail)
    return ev


def _corrupted_evidence(law: DataLaw, xt: Sequence[int]) -> list[Evidence | None]:
    corrupted = check_corrupted_sequence(xt, law.vocab)
    if len(corrupted) != law.dim:
        raise LengthMismatch(f"sequence has length {len(corrupted)}, law has dim {law.dim}")
    return [("xt", u) for u in corrupted]


# ---- public conditionals ----------------------------------------------------


def independent_posterior(law: DataLaw, sched: KernelSchedule, xt: Sequence[int],
                          i: int, t: int, cache: dict | None = None) -> Categorical:
    """p(X_0^i = . | X_t = xt) by full enumeration; the mean-field factor."""
    ev = _corrupted_evidence(law, xt)
    return Categorical(_posterior(law, sched, ev, t, (i,), cache))


def prefix_posterior(law: DataLaw, sched: KernelSchedule, ctx: HybridContext,
                     xt_prefix: Sequence[int] | None = None,
                     cache: dict | None = None) -> Categorical:
    """p(X_0^pivot = . | clean prefix, corrupted suffix) by enumeration.

    `xt_prefix` optionally supplies the corrupted tokens that preceded the
    clean prefix; they are redundant given the clean values (corruption acts
    position-wise) and never change the result.
    """
    ev = _hybrid_evidence(ctx, law)
    if xt_prefix is not None:
        hist = check_corrupted_sequence(xt_prefix, law.vocab)
        if len(hist) != ctx.pivot:
            raise LengthMismatch("xt_prefix must cover exactly the prefix positions")
        for j, u in enumerate(hist):
            ev[j] = ("x0xt", ctx.clean_prefix[j], u)
    return Categorical(_posterior(law, sched, ev, ctx.t, (ctx.pivot,), cache))


def draft_law(law: DataLaw, sched: KernelSchedule, ctx: DraftContext, i: int,
              cache: dict | None = None) -> Categorical:
    """p(X_0^i = . | verified prefix, corrupted tokens after the prefix position).

    Valid for any i from `verified_prefix_len` through the last position; the
    clean values at the skipped positions are integrated out by the summation.
    """
    if not ctx.verified_prefix_len <= i < ctx.dim:
        raise ValueError(f"draft query position {i} outside the unresolved range")
    ev = _draft_evidence(ctx, law)
    return Categorical(_posterior(law, sched, ev, ctx.t, (i,), cache))


def clean_posterior_joint(law: DataLaw, sched: KernelSchedule, xt: Sequence[int],
                          t: int, positions: Sequence[int],
                          cache: dict | None = None) -> np.ndarray:
    """Exact joint p(X_0^positions = . | X_t = xt) as a flat array over clean
    codes of the queried positions (ascending order, mixed radix)."""
    pos = tuple(sorted(int(p) for p in positions))
    if len(pos) == 0 or len(set(pos)) != len(pos):
        raise ValueError("positions must be a nonempty set")
    ev = _corrupted_evidence(law, xt)
    return _posterior(law, sched, ev, t, pos, cache)


def factorized_joint(law: DataLaw, sched: KernelSchedule, xt: Sequence[int],
                     t: int, positions: Sequence[int],
                     cache: dict | None = None) -> np.ndarray:
    """Mean-field product of the per-position independent posteriors, as a
    flat array aligned with :func:`clean_posterior_joint`."""
    pos = tuple(sorted(int(p) for p in positions))
    out = np.ones(1)
    for p in pos:
        out = np.multiply.outer(out, independent_posterior(law, sched, xt, p, t, cache).probs)
    return out.reshape(-1)


def prefix_identity_gap(law: DataLaw, sched: KernelSchedule, xt: Sequence[int],
                        x0_prefix: Sequence[int], i: int, t: int) -> float:
    """Max absolute gap between the enumerated prefix-conditioned posterior and
    its reconstruction from mean-field factors:

        p(X_0^i | X_t, X_0^{<i})  propto  p(X_0^i | X_t)
                                          * p(X_0^i | X_t^{>i}, X_0^{<i})
                                          / p(X_0^i | X_t^{-i})

    The reconstruction only needs quantities that are computable without
    resolving positions after the prefix, which is what justifies drafting.
    Raises DegenerateFactor if the denominator vanishes somewhere the exact
    posterior is positive.
    """
    corrupted = check_corrupted_sequence(xt, law.vocab)
    prefix = check_clean_sequence(x0_prefix, law.vocab)
    if len(corrupted) != law.dim:
        raise LengthMismatch("xt must cover every position")
    if len(prefix) != i:
        raise LengthMismatch("x0_prefix must cover exactly the positions before i")

    # Exact left side, conditioning on the full corrupted sequence plus the
    # clean prefix (the corrupted prefix values are genuinely included).
    ev_lhs: list[Evidence | None] = [("x0xt", v, corrupted[j]) for j, v in enumerate(prefix)]
    ev_lhs.extend(("xt", u) for u in corrupted[i:])
    lhs = _posterior(law, sched, ev_lhs, t, (i,))

    f_indep = _posterior(law, sched, [("xt", u) for u in corrupted], t, (i,))

    ev_pref: list[Evidence | None] = [("x0", v) for v in prefix]
    ev_pref.append(None)
    ev_pref.extend(("xt", u) for u in corrupted[i + 1:])
    f_prefix = _posterior(law, sched, ev_pref, t, (i,))

    ev_drop: list[Evidence | None] = [("xt", u) for u in corrupted]
    ev_drop[i] = None
    f_drop = _posterior(law, sched, ev_drop, t, (i,))

    rhs = np.zeros_like(lhs)
    for v in range(law.vocab.size):
        if f_drop[v] > 0.0:
            rhs[v] = f_indep[v] * f_prefix[v] / f_drop[v]
        elif lhs[v] > 0.0:
            raise DegenerateFactor(
                f"denominator vanishes at token {v} where the exact posterior is positive")
    total = rhs.sum()
    if total <= 0.0:
        raise DegenerateFactor("reconstruction has zero total mass")
    rhs /= total
    return float(np.max(np.abs(lhs - rhs)))


def recorruption_conditional(law: DataLaw, sched: KernelSchedule,
                             base: Sequence[int], selected: Sequence[int],
                             t: int) -> np.ndarray:
    """Exact law of regenerated tokens at `selected` given a committed clean
    sequence `base`, marginalized over the re-corruption draws.

    Each re-corruption outcome u pins down the regeneration conditional
    p(X_0^selected | clean outside, X_t^selected = u); weighting those by the
    corruption probabilities q(u | base) gives the observable conditional of a
    correct resampling pass. Flat array over clean codes of `selected`.
    """
    clean = check_clean_sequence(base, law.vocab)
    if len(clean) != law.dim:
        raise LengthMismatch("base must cover every position")
    sel = tuple(sorted(int(p) for p in selected))
    if len(sel) == 0 or len(set(sel)) != len(sel):
        raise ValueError("selected must be a nonempty set")
    if law.prob(clean) <= 0.0:
        raise ZeroProbabilityEvent("base sequence has zero probability under the law")

    rows = [marginal(clean[p], t, sched).probs for p in sel]
    supports = [np.nonzero(r > 0.0)[0] for r in rows]
    s = law.vocab.size
    acc = np.zeros(s ** len(sel))
    for combo in itertools.product(*supports):
        weight = 1.0
        for idx, u in enumerate(combo):
            weight *= float(rows[idx][u])
        ev: list[Evidence | None] = [("x0", v) for v in clean]
        for p, u in zip(sel, combo):
            ev[p] = ("xt", int(u))
        acc += weight * _posterior(law, sched, ev, t, sel)
    total = acc.sum()
    if total <= 0.0:
        raise ZeroProbabilityEvent("re-corruption conditional has zero mass")
    return acc / total


class ExactPredictor:
    """Enumerated conditionals of one (law, schedule) pair with a query cache.

    Implements the three provider interfaces the decoders consume: `target`
    for position-conditioned verification, `draft` for shared-context
    drafting, and `independent` for mean-field decoding. The cache maps
    (t, evidence, positions) keys to normalized posteriors; it is only
    read and written under single-thread use, parallel callers should hold
    one predictor per worker.
    """

    def __init__(self, law: DataLaw, sched: KernelSchedule):
        if law.vocab != sched.vocab:
            raise ValueError("law and schedule must share one vocabulary")
        self.law = law
        self.sched = sched
        self._cache: dict = {}

    @property
    def vocab(self) -> Vocabulary:
        return self.law.vocab

    @property
    def dim(self) -> int:
        return self.law.dim

    def clear_cache(self) -> None:
        self._cache.clear()

    def independent(self, xt: Sequence[int], i: int, t: int) -> Categorical:
        return independent_posterior(self.law, self.sched, xt, i, t, self._cache)

    def target(self, ctx: HybridContext) -> Categorical:
        return prefix_posterior(self.law, self.sched, ctx, cache=self._cache)

    def draft(self, ctx: DraftContext, i: int) -> Categorical:
        return draft_law(self.law, self.sched, ctx, i, self._cache)

    def joint(self, xt: Sequence[int], t: int, positions: Sequence[int]) -> np.ndarray:
        return clean_posterior_joint(self.law, self.sched, xt, t, positions, self._cache)
