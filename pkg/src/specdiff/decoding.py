"""Decoding regimes over corrupted sequences: mean-field independent decoding,
sequential chain-rule decoding, in-step speculative decoding with draft and
verify passes, and multi-pass inference with low-confidence re-corruption.

Conventions shared by every routine here:

  * A draft pass evaluates one shared context frozen at the window start; a
    verify pass evaluates each window position against a target law whose
    input carries the accepted draft tokens as a pseudo-clean prefix.
  * Acceptance of a drafted token x follows u <= min(1, target(x)/draft(x));
    on rejection the position is resampled from the normalized positive part
    of target - draft, committed, and the rest of the window is discarded.
  * The committed confidence of a position is the target probability of the
    token actually committed there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .core import Categorical, SeededRng, Vocabulary, categorical_sample
from .errors import BudgetTooLarge, ZeroRejectionMass
from .forward import KernelSchedule, forward_posterior, recorrupt_position
from .oracle import DraftContext, HybridContext

__all__ = [
    "DecodeConfig",
    "DraftModel",
    "IndependentModel",
    "PredictorPair",
    "RoundRecord",
    "SpecTrace",
    "StaticPredictor",
    "TargetModel",
    "decode_independent",
    "decode_sequential",
    "decode_speculative",
    "full_inference",
    "low_conf_select",
    "residual_distribution",
    "reverse_transition",
    "speculative_round",
]


MODES = ("independent", "sequential", "speculative")
UNRESOLVED_RULES = ("masked", "all")


@dataclass(frozen=True)
class DecodeConfig:
    """Knobs for one inference run.

    window          draft window size k (tokens proposed per round)
    n_steps         total decoding passes; passes after the first only touch
                    re-corrupted positions
    remask_budget   how many lowest-confidence positions to re-corrupt after
                    each non-final pass
    recorrupt_t     corruption level used by re-corruption draws and by the
                    later passes' contexts; None means the initial level
    mode            decoding regime for the experiment drivers
    prompt_len      leading positions that are never corrupted or decoded
    unresolved      which response positions need decoding: "masked" (token
                    equals the mask id) or "all" (uniform-mixing chains, where
                    corruption leaves ordinary tokens behind)
    """

    window: int = 1
    n_steps: int = 1
    remask_budget: int = 0
    recorrupt_t: int | None = None
    mode: str = "speculative"
    prompt_len: int = 0
    unresolved: str = "masked"

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.remask_budget < 0:
            raise ValueError("remask_budget must be >= 0")
        if self.recorrupt_t is not None and self.recorrupt_t < 1:
            raise ValueError("recorrupt_t must be >= 1 when given")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.prompt_len < 0:
            raise ValueError("prompt_len must be >= 0")
        if self.unresolved not in UNRESOLVED_RULES:
            raise ValueError(f"unresolved must be one of {UNRESOLVED_RULES}")


class TargetModel(Protocol):
    vocab: Vocabulary

    def target(self, ctx: HybridContext) -> Categorical: ...


class DraftModel(Protocol):
    vocab: Vocabulary

    def draft(self, ctx: DraftContext, position: int) -> Categorical: ...


class IndependentModel(Protocol):
    vocab: Vocabulary

    def independent(self, xt: Sequence[int], i: int, t: int) -> Categorical: ...


@dataclass(frozen=True)
class PredictorPair:
    """Target and draft providers; both must speak the same vocabulary and
    sequence length."""

    target: TargetModel
    draft: DraftModel

    def __post_init__(self) -> None:
        if self.target.vocab != self.draft.vocab:
            raise ValueError("target and draft must share one vocabulary")
        if getattr(self.target, "dim", None) != getattr(self.draft, "dim", None):
            raise ValueError("target and draft must cover the same sequence length")

    @property
    def vocab(self) -> Vocabulary:
        return self.target.vocab

    @property
    def dim(self) -> int:
        return self.target.dim  # type: ignore[attr-defined]


class StaticPredictor:
    """Fixed per-position clean-token laws that ignore all conditioning.

    Serves as target, draft, and independent provider at once; useful for
    exercising the accept/reject machinery with known acceptance rates.
    """

    def __init__(self, laws: Sequence[Categorical], vocab: Vocabulary):
        laws = tuple(laws)
        for law in laws:
            if len(law) != vocab.size:
                raise ValueError("static laws must cover exactly the clean alphabet")
        self.laws = laws
        self.vocab = vocab
        self.dim = len(laws)

    def target(self, ctx: HybridContext) -> Categorical:
        return self.laws[ctx.pivot]

    def draft(self, ctx: DraftContext, position: int) -> Categorical:
        return self.laws[position]

    def independent(self, xt: Sequence[int], i: int, t: int) -> Categorical:
        return self.laws[i]


@dataclass(frozen=True)
class RoundRecord:
    """Outcome of one draft-and-verify round.

    `positions` is the whole window; `flags`, `committed` and `confidences`
    cover only the verified entries (all of the window when every proposal is
    accepted, otherwise a true-prefix followed by the single rejection).
    """

    positions: tuple[int, ...]
    drafts: tuple[int, ...]
    flags: tuple[bool, ...]
    committed: tuple[int, ...]
    confidences: tuple[float, ...]


@dataclass
class SpecTrace:
    """Bookkeeping across one decoding pass.

    `proposals_total` counts verified proposals (each accepted token plus the
    one rejected token per failed round); drafted-but-discarded tokens never
    faced the target and are not counted.
    """

    rounds: list[RoundRecord] = field(default_factory=list)
    draft_passes: int = 0
    verify_passes: int = 0
    proposals_total: int = 0
    accepts_total: int = 0

    def add(self, rec: RoundRecord) -> None:
        self.rounds.append(rec)
        self.draft_passes += 1
        self.verify_passes += 1
        self.proposals_total += len(rec.flags)
        self.accepts_total += sum(rec.flags)

    def committed_positions(self) -> list[int]:
        return [p for rec in self.rounds for p in rec.positions[: len(rec.committed)]]

    def committed_confidences(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for rec in self.rounds:
            for p, c in zip(rec.positions, rec.confidences):
                out[p] = c
        return out


def residual_distribution(pi: Categorical, rho: Categorical) -> Categorical:
    """Normalized positive part of (target - draft); the law a rejected
    position is resampled from. Raises ZeroRejectionMass when target and
    draft coincide so no rejection is possible."""
    if len(pi) != len(rho):
        raise ValueError("target and draft must share a support")
    pos = np.maximum(pi.probs - rho.probs, 0.0)
    total = float(pos.sum())
    if total <= 0.0:
        raise ZeroRejectionMass("target does not exceed draft anywhere")
    return Categorical(pos / total)


def _prediction_positions(state: Sequence[int], vocab: Vocabulary,
                          cfg: DecodeConfig) -> list[int]:
    if cfg.unresolved == "all":
        return list(range(cfg.prompt_len, len(state)))
    return [i for i in range(cfg.prompt_len, len(state)) if state[i] == vocab.mask_id]


def speculative_round(state: list[int], window: Sequence[int], pair: PredictorPair,
                      t: int, rng: SeededRng) -> RoundRecord:
    """One draft pass plus one verify pass over `window`, committing tokens
    into `state` in place.

    All draft laws come from a single context frozen at the window start (the
    corrupted token at the first window position is excluded from it, so the
    whole window is drafted in parallel from known quantities). Verification
    walks left to right; accepted drafts become part of the next target input.
    """
    window = [int(p) for p in window]
    if not window:
        raise ValueError("window must be nonempty")
    m0 = window[0]
    dctx = DraftContext(m0, tuple(state[:m0]), tuple(state[m0 + 1:]), t)
    rhos = [pair.draft.draft(dctx, p) for p in window]
    drafts = [categorical_sample(r, rng) for r in rhos]

    flags: list[bool] = []
    committed: list[int] = []
    confidences: list[float] = []
    for m, pos in enumerate(window):
        tctx = HybridContext(pos, tuple(state[:pos]), tuple(state[pos:]), t)
        pi = pair.target.target(tctx)
        proposal = drafts[m]
        ratio = min(1.0, pi.prob(proposal) / rhos[m].prob(proposal))
        # Strict comparison: P(U < r) = r exactly at both endpoints, so a
        # ratio of 0 can never accept and a ratio of 1 can never reject.
        if rng.uniform() < ratio:
            state[pos] = proposal
            flags.append(True)
            committed.append(proposal)
            confidences.append(pi.prob(proposal))
        else:
            fix = categorical_sample(residual_distribution(pi, rhos[m]), rng)
            state[pos] = fix
            flags.append(False)
            committed.append(fix)
            confidences.append(pi.prob(fix))
            break
    return RoundRecord(tuple(window), tuple(drafts), tuple(flags),
                       tuple(committed), tuple(confidences))


def decode_speculative(xt: Sequence[int], t: int, pair: PredictorPair,
                       cfg: DecodeConfig, rng: SeededRng,
                       positions: Sequence[int] | None = None,
                       ) -> tuple[tuple[int, ...], SpecTrace]:
    """One full speculative pass: repeated windows over the unresolved
    positions until all are committed.

    `positions` overrides the unresolved rule (used by later re-corruption
    passes, which re-decode exactly the selected set).
    """
    state = [int(v) for v in xt]
    pending = (sorted(int(p) for p in positions) if positions is not None
               else _prediction_positions(state, pair.vocab, cfg))
    trace = SpecTrace()
    while pending:
        window = pending[: min(cfg.window, len(pending))]
        rec = speculative_round(state, window, pair, t, rng)
        trace.add(rec)
        pending = pending[len(rec.committed):]
    return tuple(state), trace


def decode_sequential(xt: Sequence[int], t: int, target: TargetModel,
                      rng: SeededRng, cfg: DecodeConfig | None = None,
                      positions: Sequence[int] | None = None) -> tuple[int, ...]:
    """Chain-rule baseline: resolve unresolved positions in ascending order,
    each sampled from the target law given everything committed so far."""
    cfg = cfg or DecodeConfig()
    state = [int(v) for v in xt]
    pending = (sorted(int(p) for p in positions) if positions is not None
               else _prediction_positions(state, target.vocab, cfg))
    for pos in pending:
        ctx = HybridContext(pos, tuple(state[:pos]), tuple(state[pos:]), t)
        state[pos] = categorical_sample(target.target(ctx), rng)
    return tuple(state)


def decode_independent(xt: Sequence[int], t: int, predictor: IndependentModel,
                       rng: SeededRng, cfg: DecodeConfig | None = None,
                       positions: Sequence[int] | None = None) -> tuple[int, ...]:
    """Mean-field baseline: every unresolved position sampled from its own
    posterior given the corrupted input alone, all in parallel. This is the
    regime that can fabricate jointly impossible outputs."""
    cfg = cfg or DecodeConfig()
    frozen = tuple(int(v) for v in xt)
    pending = (sorted(int(p) for p in positions) if positions is not None
               else _prediction_positions(list(frozen), predictor.vocab, cfg))
    state = list(frozen)
    for pos in pending:
        # Every law is conditioned on the original corrupted input, never on
        # the other positions' fresh samples.
        state[pos] = categorical_sample(predictor.independent(frozen, pos, t), rng)
    return tuple(state)


def low_conf_select(confidences: Mapping[int, float], budget: int) -> tuple[int, ...]:
    """The `budget` lowest-confidence positions, ties broken toward the
    smaller index; returned in ascending position order."""
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if budget > len(confidences):
        raise BudgetTooLarge(
            f"budget {budget} exceeds the {len(confidences)} scored positions")
    ranked = sorted(confidences.items(), key=lambda item: (item[1], item[0]))
    return tuple(sorted(p for p, _ in ranked[:budget]))


def full_inference(xT: Sequence[int], pair: PredictorPair, cfg: DecodeConfig,
                   sched: KernelSchedule, rng: SeededRng,
                   ) -> tuple[tuple[int, ...], list[SpecTrace]]:
    """Multi-pass decoding: a first speculative pass at the schedule's final
    level, then `n_steps - 1` refinement passes that re-corrupt the lowest
    confidence committed positions and re-decode exactly those.

    The re-corruption budget is clamped to the number of positions the pass
    actually scored (a pass can decode fewer positions than the budget).
    """
    t_first = sched.steps
    t_later = cfg.recorrupt_t if cfg.recorrupt_t is not None else t_first
    state = tuple(int(v) for v in xT)
    traces: list[SpecTrace] = []
    positions: Sequence[int] | None = None
    for step in range(cfg.n_steps):
        t = t_first if step == 0 else t_later
        state, trace = decode_speculative(state, t, pair, cfg, rng, positions=positions)
        traces.append(trace)
        if step == cfg.n_steps - 1:
            break
        confidences = trace.committed_confidences()
        budget = min(cfg.remask_budget, len(confidences))
        selected = low_conf_select(confidences, budget)
        working = list(state)
        for pos in selected:
            working[pos] = recorrupt_position(state[pos], t_later, sched, rng)
        state = tuple(working)
        positions = selected
    return state, traces


def reverse_transition(xt: Sequence[int], x0_hat: Sequence[int], t: int,
                       sched: KernelSchedule, rng: SeededRng) -> tuple[int, ...]:
    """Position-wise draw of X_{t-1} from the closed-form posterior given the
    corrupted sequence and a committed clean estimate."""
    if len(xt) != len(x0_hat):
        raise ValueError("xt and x0_hat must share a length")
    out = []
    for u, v in zip(xt, x0_hat):
        out.append(categorical_sample(forward_posterior(int(u), int(v), t, sched), rng))
    return tuple(out)
