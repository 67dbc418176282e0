"""Decoding loops: speculative rounds, mode equivalence, confidence-based
re-corruption, and multi-pass inference."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specdiff.core import Categorical, SeededRng, Vocabulary
from specdiff.decoding import (
    DecodeConfig,
    PredictorPair,
    RoundRecord,
    SpecTrace,
    StaticPredictor,
    decode_independent,
    decode_sequential,
    decode_speculative,
    full_inference,
    low_conf_select,
    residual_distribution,
    reverse_transition,
    speculative_round,
)
from specdiff.errors import BudgetTooLarge, ZeroRejectionMass
from specdiff.forward import build_absorbing_schedule
from specdiff.oracle import DataLaw, ExactPredictor, HybridContext, independent_posterior
from specdiff.stats import tv_distance

V2 = Vocabulary(2)
MASK = V2.mask_id
SCHED2 = build_absorbing_schedule(V2, [0.5, 0.5])
ANTI = DataLaw.from_probs(V2, 2, {"ab": 0.5, "ba": 0.5})
RICH = DataLaw.from_probs(V2, 2, {"aa": 0.4, "ab": 0.2, "ba": 0.1, "bb": 0.3})


def exact_pair(law, sched=SCHED2):
    pred = ExactPredictor(law, sched)
    return PredictorPair(pred, pred), pred


def test_decode_config_validation():
    DecodeConfig()
    with pytest.raises(ValueError):
        DecodeConfig(window=0)
    with pytest.raises(ValueError):
        DecodeConfig(n_steps=0)
    with pytest.raises(ValueError):
        DecodeConfig(remask_budget=-1)
    with pytest.raises(ValueError):
        DecodeConfig(recorrupt_t=0)
    with pytest.raises(ValueError):
        DecodeConfig(mode="greedy")
    with pytest.raises(ValueError):
        DecodeConfig(unresolved="sometimes")


def test_predictor_pair_requires_matching_shapes():
    a = StaticPredictor([Categorical([0.5, 0.5])], V2)
    b = StaticPredictor([Categorical([0.5, 0.5])] * 2, V2)
    with pytest.raises(ValueError):
        PredictorPair(a, b)
    c = StaticPredictor([Categorical([1 / 3] * 3)], Vocabulary(3))
    with pytest.raises(ValueError):
        PredictorPair(a, c)


def test_residual_distribution_frozen():
    pi = Categorical([0.6, 0.4])
    rho = Categorical([0.4, 0.6])
    res = residual_distribution(pi, rho)
    assert np.allclose(res.probs, [1.0, 0.0])
    with pytest.raises(ZeroRejectionMass):
        residual_distribution(pi, pi)


def test_speculative_round_writes_committed_tokens():
    pair, _ = exact_pair(ANTI)
    state = [MASK, MASK]
    rec = speculative_round(state, [0, 1], pair, 2, SeededRng(0))
    assert len(rec.flags) == len(rec.committed) == len(rec.confidences)
    assert MASK not in state[: len(rec.committed)]
    for pos, tok in zip(rec.positions, rec.committed):
        assert state[pos] == tok


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1),
       st.integers(min_value=1, max_value=6))
def test_round_flag_invariant(seed, width):
    """Flags are an all-true run or a true-prefix ending in one rejection."""
    rng = SeededRng(seed)
    vocab = Vocabulary(3)
    pi = [Categorical(rng.dirichlet(np.ones(3))) for _ in range(width)]
    rho = [Categorical(rng.dirichlet(np.ones(3))) for _ in range(width)]
    pair = PredictorPair(StaticPredictor(pi, vocab), StaticPredictor(rho, vocab))
    state = [vocab.mask_id] * width
    rec = speculative_round(state, list(range(width)), pair, 1, rng)
    flags = rec.flags
    assert len(flags) >= 1
    if not all(flags):
        assert all(flags[:-1]) and flags[-1] is False
    assert len(rec.committed) == len(flags)
    # unverified window positions stay masked
    for pos in rec.positions[len(rec.committed):]:
        assert state[pos] == vocab.mask_id


def test_trace_counting():
    tr = SpecTrace()
    tr.add(RoundRecord((0, 1), (0, 0), (True, False), (0, 1), (0.5, 0.5)))
    tr.add(RoundRecord((2,), (1,), (True,), (1,), (0.9,)))
    assert tr.draft_passes == 2 and tr.verify_passes == 2
    assert tr.proposals_total == 3 and tr.accepts_total == 2
    assert tr.committed_positions() == [0, 1, 2]
    assert tr.committed_confidences() == {0: 0.5, 1: 0.5, 2: 0.9}


def test_single_round_commit_matches_target_law():
    """Accept/reject with residual resampling commits from the target exactly;
    empirical check on one position."""
    vocab = Vocabulary(3)
    pi = Categorical([0.5, 0.3, 0.2])
    rho = Categorical([0.2, 0.3, 0.5])
    pair = PredictorPair(StaticPredictor([pi], vocab), StaticPredictor([rho], vocab))
    rng = SeededRng(12)
    counts = np.zeros(3)
    n = 30000
    for _ in range(n):
        state = [vocab.mask_id]
        speculative_round(state, [0], pair, 1, rng)
        counts[state[0]] += 1
    assert np.abs(counts / n - pi.probs).max() < 0.01


def test_decode_speculative_resolves_everything():
    pair, pred = exact_pair(ANTI)
    cfg = DecodeConfig(window=2)
    rng = SeededRng(1)
    for _ in range(200):
        out, trace = decode_speculative((MASK, MASK), 2, pair, cfg, rng)
        assert MASK not in out
        assert out in ((0, 1), (1, 0))  # the law's support, never aa or bb
        assert trace.proposals_total >= 2 or len(trace.rounds) >= 1


def test_decode_speculative_respects_explicit_positions():
    pair, _ = exact_pair(RICH)
    cfg = DecodeConfig(window=2)
    out, trace = decode_speculative((0, MASK), 2, pair, cfg, SeededRng(2),
                                    positions=[1])
    assert out[0] == 0
    assert trace.committed_positions() == [1]


def test_sequential_single_masked_equals_independent_law():
    """With exactly one unresolved position the chain-rule law and the
    mean-field law coincide (the survivors pin their own clean values)."""
    xt = (0, MASK)
    ctx = HybridContext(1, (0,), (MASK,), 2)
    pred = ExactPredictor(RICH, SCHED2)
    seq_law = pred.target(ctx)
    ind_law = independent_posterior(RICH, SCHED2, xt, 1, 2)
    assert tv_distance(seq_law, ind_law) < 1e-12


def test_modes_agree_in_distribution():
    pair, pred = exact_pair(RICH)
    cfg = DecodeConfig(window=2)
    n = 4000
    rng_a, rng_b = SeededRng(3), SeededRng(4)
    spec = [decode_speculative((MASK, MASK), 2, pair, cfg, rng_a)[0] for _ in range(n)]
    seq = [decode_sequential((MASK, MASK), 2, pred, rng_b, cfg) for _ in range(n)]

    def hist(samples):
        h = np.zeros(4)
        for s in samples:
            h[s[0] * 2 + s[1]] += 1
        return h / len(samples)

    assert tv_distance(hist(spec), hist(seq)) < 0.05


def test_independent_decode_conditions_on_the_original_input():
    """Mean-field sampling of the anticorrelated law factorizes: all four
    outcomes appear, including the jointly impossible ones."""
    pred = ExactPredictor(ANTI, SCHED2)
    rng = SeededRng(5)
    seen = set()
    for _ in range(300):
        seen.add(decode_independent((MASK, MASK), 2, pred, rng))
    assert (0, 0) in seen and (1, 1) in seen


def test_prompt_positions_are_never_decoded():
    pair, pred = exact_pair(RICH)
    cfg = DecodeConfig(window=2, prompt_len=1)
    out, trace = decode_speculative((0, MASK), 2, pair, cfg, SeededRng(6))
    assert out[0] == 0
    assert 0 not in trace.committed_positions()


def test_unresolved_all_redecodes_survivors():
    pair, _ = exact_pair(RICH)
    cfg = DecodeConfig(window=2, unresolved="all")
    out, trace = decode_speculative((0, 1), 2, pair, cfg, SeededRng(7))
    assert sorted(trace.committed_positions()) == [0, 1]


def test_low_conf_select_orders_and_breaks_ties():
    confs = {0: 0.9, 1: 0.2, 2: 0.2, 3: 0.5}
    assert low_conf_select(confs, 0) == ()
    assert low_conf_select(confs, 1) == (1,)  # tie 1 vs 2 goes to index 1
    assert low_conf_select(confs, 2) == (1, 2)
    assert low_conf_select(confs, 3) == (1, 2, 3)
    with pytest.raises(BudgetTooLarge):
        low_conf_select(confs, 5)


def test_full_inference_single_pass_reduces_to_one_decode():
    pair, _ = exact_pair(RICH)
    cfg = DecodeConfig(window=2, n_steps=1)
    state, traces = full_inference((MASK, MASK), pair, cfg, SCHED2, SeededRng(8))
    assert len(traces) == 1
    assert MASK not in state


def test_full_inference_zero_budget_keeps_the_first_pass():
    pair, _ = exact_pair(RICH)
    cfg = DecodeConfig(window=2, n_steps=2, remask_budget=0)
    state, traces = full_inference((MASK, MASK), pair, cfg, SCHED2, SeededRng(9))
    assert len(traces) == 2
    assert len(traces[1].rounds) == 0  # nothing was re-corrupted
    assert MASK not in state


def test_full_inference_redecodes_the_selected_set():
    pair, _ = exact_pair(RICH)
    cfg = DecodeConfig(window=2, n_steps=2, remask_budget=1)
    state, traces = full_inference((MASK, MASK), pair, cfg, SCHED2, SeededRng(10))
    assert MASK not in state
    redone = sorted({p for rec in traces[1].rounds
                     for p in rec.positions[: len(rec.committed)]})
    assert len(redone) == 1  # budget one position per pass


def test_full_inference_budget_clamped_to_scored_positions():
    pair, _ = exact_pair(RICH)
    cfg = DecodeConfig(window=2, n_steps=3, remask_budget=5)
    state, traces = full_inference((MASK, MASK), pair, cfg, SCHED2, SeededRng(11))
    assert len(traces) == 3
    assert MASK not in state


def test_reverse_transition_draws_the_hidden_level():
    rng = SeededRng(12)
    draws = np.array([reverse_transition((MASK,), (0,), 2, SCHED2, rng)[0]
                      for _ in range(20000)])
    freq = np.bincount(draws, minlength=3) / len(draws)
    assert np.abs(freq - np.array([1 / 3, 0.0, 2 / 3])).max() < 0.02
