"""Verification math: distances, the exact one-step committed law, empirical
joints, committed-length formulas and simulation, and cost accounting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import Categorical, SeededRng, sequence_code
from .decoding import SpecTrace, residual_distribution
from .errors import EmptySampleSet, InvalidAlpha, NoProposals, SupportMismatch

__all__ = [
    "CostModel",
    "EmpiricalJoint",
    "SimulatedLength",
    "cost_accounting",
    "empirical_joint",
    "exact_commit_law",
    "expected_committed_length",
    "ideal_speedup",
    "measure_acceptance",
    "simulate_committed_length",
    "tv_distance",
]


def _as_probs(p) -> np.ndarray:
    if isinstance(p, Categorical):
        return p.probs
    return np.asarray(p, dtype=float)


def tv_distance(p, q) -> float:
    """Total variation distance, half the L1 difference."""
    pa, qa = _as_probs(p), _as_probs(q)
    if pa.shape != qa.shape:
        raise SupportMismatch(f"supports differ: {pa.shape} vs {qa.shape}")
    return 0.5 * float(np.abs(pa - qa).sum())


def exact_commit_law(pi, rho) -> Categorical:
    """Law of the token committed by one accept/reject step, by branch
    enumeration: the pointwise minimum of target and draft (acceptance) plus
    the rejection mass times the residual law. Equals the target exactly.
    Accepts Categorical or plain probability arrays."""
    pa, ra = _as_probs(pi), _as_probs(rho)
    if pa.shape != ra.shape:
        raise SupportMismatch("target and draft must share a support")
    floor = np.minimum(pa, ra)
    rejection = 1.0 - float(floor.sum())
    if rejection <= 0.0:
        return Categorical(floor / floor.sum())
    residual = residual_distribution(Categorical(pa), Categorical(ra))
    return Categorical(floor + rejection * residual.probs)


@dataclass(frozen=True)
class EmpiricalJoint:
    """Token-tuple counts over a fixed position set."""

    positions: tuple[int, ...]
    counts: dict
    total: int

    def probs(self, vocab_size: int) -> np.ndarray:
        """Flat empirical distribution over clean codes of the positions,
        aligned with the oracle joint layout."""
        out = np.zeros(vocab_size ** len(self.positions))
        for tokens, n in self.counts.items():
            out[sequence_code(tokens, vocab_size)] = n / self.total
        return out


def empirical_joint(samples: Sequence[Sequence[int]],
                    positions: Sequence[int]) -> EmpiricalJoint:
    """Histogram of the restriction of each sample to `positions`."""
    pos = tuple(sorted(int(p) for p in positions))
    if len(samples) == 0:
        raise EmptySampleSet("no samples to aggregate")
    counts: dict = {}
    for sample in samples:
        key = tuple(int(sample[p]) for p in pos)
        counts[key] = counts.get(key, 0) + 1
    return EmpiricalJoint(pos, counts, len(samples))


def expected_committed_length(alpha: float, k: int) -> float:
    """Expected tokens committed by one window of size k when each draft is
    accepted independently with probability alpha (the rejected position is
    itself committed after correction): sum of alpha^l for l < k."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidAlpha(f"alpha={alpha} outside [0, 1]")
    if k < 1:
        raise ValueError("window size k must be >= 1")
    if alpha == 1.0:
        return float(k)
    return (1.0 - alpha**k) / (1.0 - alpha)


class SimulatedLength(NamedTuple):
    mean: float
    se: float


def simulate_committed_length(alpha: float, k: int, n_rounds: int,
                              rng: SeededRng) -> SimulatedLength:
    """Monte Carlo mean committed length over `n_rounds` independent windows,
    with its standard error. Each window accepts Bernoulli(alpha) tokens until
    the first failure or exhaustion; the failure position counts as committed.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidAlpha(f"alpha={alpha} outside [0, 1]")
    if k < 1:
        raise ValueError("window size k must be >= 1")
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    hist = np.zeros(k + 1, dtype=np.int64)
    remaining = n_rounds
    chunk_rows = max(1, min(remaining, 1 << 18))
    while remaining > 0:
        rows = min(chunk_rows, remaining)
        u = rng.uniforms((rows, k))
        rejected = u >= alpha  # strict acceptance keeps both endpoints exact
        any_reject = rejected.any(axis=1)
        first = rejected.argmax(axis=1)
        lengths = np.where(any_reject, first + 1, k)
        hist += np.bincount(lengths, minlength=k + 1)
        remaining -= rows
    values = np.arange(k + 1, dtype=float)
    mean = float((values * hist).sum() / n_rounds)
    if n_rounds == 1:
        return SimulatedLength(mean, 0.0)
    second = float((values**2 * hist).sum())
    var = max(0.0, (second - n_rounds * mean**2) / (n_rounds - 1))
    return SimulatedLength(mean, float(np.sqrt(var / n_rounds)))


@dataclass(frozen=True)
class CostModel:
    """Per-pass costs of one draft evaluation and one target evaluation."""

    c_draft: float = 1.0
    c_verify: float = 1.0

    def __post_init__(self) -> None:
        if self.c_draft <= 0.0 or self.c_verify <= 0.0:
            raise ValueError("pass costs must be positive")


def ideal_speedup(e_committed: float, cost: CostModel) -> float:
    """Speedup over the one-token-per-target-pass baseline when every round
    costs one draft pass plus one verify pass and commits `e_committed` tokens
    on average."""
    if e_committed < 1.0:
        raise ValueError("a round always commits at least one token")
    return e_committed * cost.c_verify / (cost.c_draft + cost.c_verify)


def measure_acceptance(traces: Iterable[SpecTrace]) -> float:
    """Fraction of verified proposals that were accepted."""
    proposals = 0
    accepts = 0
    for tr in traces:
        proposals += tr.proposals_total
        accepts += tr.accepts_total
    if proposals == 0:
        raise NoProposals("no verified proposals in the given traces")
    return accepts / proposals


def cost_accounting(traces: Iterable[SpecTrace], cost: CostModel,
                    baseline_positions: int) -> float:
    """Measured speedup: baseline cost of decoding `baseline_positions` tokens
    one target pass each, divided by the actual pass costs in the traces."""
    draft_passes = 0
    verify_passes = 0
    for tr in traces:
        draft_passes += tr.draft_passes
        verify_passes += tr.verify_passes
    if draft_passes + verify_passes == 0:
        raise NoProposals("no decoding work recorded in the given traces")
    if baseline_positions < 1:
        raise ValueError("baseline_positions must be >= 1")
    spent = draft_passes * cost.c_draft + verify_passes * cost.c_verify
    return baseline_positions * cost.c_verify / spent
