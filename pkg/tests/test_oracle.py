"""Exact data laws and enumerated conditionals.

Any value asserted against the enumeration engine is first recomputed here by
a direct loop over the law table and cumulative kernels, so the two routes
stay independent.
"""

import numpy as np
import pytest

from specdiff.core import SeededRng, Vocabulary, sequence_from_code
from specdiff.errors import LengthMismatch, ZeroProbabilityEvent
from specdiff.forward import build_absorbing_schedule, build_uniform_schedule
from specdiff.oracle import (
    DataLaw,
    DraftContext,
    ExactPredictor,
    HybridContext,
    clean_posterior_joint,
    draft_law,
    factorized_joint,
    independent_posterior,
    joint_prob,
    prefix_identity_gap,
    prefix_posterior,
    recorruption_conditional,
)

V2 = Vocabulary(2)
SCHED2 = build_absorbing_schedule(V2, [0.5, 0.5])
MASK = V2.mask_id

CORR = DataLaw.from_probs(V2, 2, {"aa": 0.6, "bb": 0.4})
ANTI = DataLaw.from_probs(V2, 2, {"ab": 0.5, "ba": 0.5})
RICH = DataLaw.from_probs(V2, 2, {"aa": 0.4, "ab": 0.2, "ba": 0.1, "bb": 0.3})


def brute_joint(law, sched, xt, t, positions):
    """Direct Bayes enumeration without the production engine."""
    s, d = law.vocab.size, law.dim
    qbar = sched.cum(t)
    out = np.zeros(s ** len(positions))
    for code in range(s ** d):
        x0 = sequence_from_code(code, s, d)
        w = law.prob(x0)
        for j in range(d):
            w *= qbar[x0[j], xt[j]]
        idx = 0
        for p in positions:
            idx = idx * s + x0[p]
        out[idx] += w
    return out / out.sum()


# ---- DataLaw ----------------------------------------------------------------


def test_from_probs_with_word_keys():
    assert CORR.prob((0, 0)) == 0.6
    assert CORR.prob((1, 1)) == 0.4
    assert CORR.prob((0, 1)) == 0.0


def test_from_probs_rejects_bad_mass():
    with pytest.raises(ValueError):
        DataLaw.from_probs(V2, 2, {"aa": 0.6, "bb": 0.3})


def test_uniform_law():
    law = DataLaw.uniform(Vocabulary(3), 2)
    assert abs(law.prob((1, 2)) - 1 / 9) < 1e-12


def test_product_law_factorizes():
    law = DataLaw.product(V2, [[0.3, 0.7], [0.9, 0.1]])
    assert abs(law.prob((0, 1)) - 0.03) < 1e-12
    assert abs(law.prob((1, 0)) - 0.63) < 1e-12


def test_markov_law_chain_probability():
    law = DataLaw.markov(V2, 3, [0.7, 0.3], [[0.8, 0.2], [0.3, 0.7]])
    assert abs(law.prob((0, 1, 1)) - 0.7 * 0.2 * 0.7) < 1e-12
    assert abs(float(law.table.sum()) - 1.0) < 1e-9


def test_random_law_is_a_distribution_and_reproducible():
    a = DataLaw.random(Vocabulary(3), 3, seed=9)
    b = DataLaw.random(Vocabulary(3), 3, seed=9)
    assert np.array_equal(a.table, b.table)
    assert abs(float(a.table.sum()) - 1.0) < 1e-9
    assert (a.table >= 0).all()


def test_law_size_guard():
    with pytest.raises(ValueError):
        DataLaw.uniform(Vocabulary(3), 20)


def test_sample_matches_table():
    rng = SeededRng(3)
    draws = [RICH.sample(rng) for _ in range(20000)]
    freq = np.zeros(4)
    for d in draws:
        freq[d[0] * 2 + d[1]] += 1
    freq /= len(draws)
    assert np.abs(freq - RICH.table).max() < 0.02


def test_joint_prob_helper():
    assert joint_prob(RICH, (1, 0)) == 0.1


# ---- contexts ---------------------------------------------------------------


def test_hybrid_context_shape_rules():
    HybridContext(1, (0,), (MASK,), 2)
    with pytest.raises(ValueError):
        HybridContext(1, (0, 1), (MASK,), 2)  # prefix longer than pivot
    with pytest.raises(ValueError):
        HybridContext(0, (), (), 1)  # empty suffix
    with pytest.raises(ValueError):
        HybridContext(0, (), (MASK,), 0)  # t below 1


def test_draft_context_shape_rules():
    ctx = DraftContext(1, (0,), (MASK,), 2)
    assert ctx.dim == 3  # prefix + the excluded pivot + tail
    with pytest.raises(ValueError):
        DraftContext(2, (0,), (MASK,), 2)


# ---- conditionals vs direct enumeration --------------------------------------


def test_independent_posterior_frozen_case():
    for i in (0, 1):
        post = independent_posterior(CORR, SCHED2, (MASK, MASK), i, 2)
        assert np.allclose(post.probs, [0.6, 0.4], atol=1e-12)


def test_prefix_posterior_hand_cases():
    # pivot 1, clean prefix (a), suffix masked:
    # p(aa) * qbar[a, mask] : p(ab) * qbar[b, mask] = 0.4*0.75 : 0.2*0.75
    post = prefix_posterior(RICH, SCHED2, HybridContext(1, (0,), (MASK,), 2))
    assert np.allclose(post.probs, [2 / 3, 1 / 3], atol=1e-12)
    # pivot 0, suffix (mask, b): the survived b pins X_0^1 = b under absorbing
    post = prefix_posterior(RICH, SCHED2, HybridContext(0, (), (MASK, 1), 2))
    assert np.allclose(post.probs, [0.4, 0.6], atol=1e-12)


def test_prefix_posterior_ignores_redundant_corrupted_history():
    ctx = HybridContext(1, (0,), (MASK,), 2)
    bare = prefix_posterior(RICH, SCHED2, ctx)
    for hist in ((0,), (MASK,)):
        with_hist = prefix_posterior(RICH, SCHED2, ctx, xt_prefix=hist)
        assert np.allclose(bare.probs, with_hist.probs, atol=1e-14)


def test_prefix_posterior_impossible_history():
    ctx = HybridContext(1, (0,), (MASK,), 2)
    with pytest.raises(ZeroProbabilityEvent):
        # absorbing corruption cannot turn token a into token b
        prefix_posterior(RICH, SCHED2, ctx, xt_prefix=(1,))


def test_draft_law_frozen_case():
    dl = draft_law(CORR, SCHED2, DraftContext(0, (), (MASK,), 2), 0, {})
    assert np.allclose(dl.probs, [0.6, 0.4], atol=1e-12)


def test_draft_law_skips_the_unverified_prefix_position():
    # querying i=1 with the token at position 0 integrated out
    law = RICH
    dl = draft_law(law, SCHED2, DraftContext(0, (), (MASK,), 2), 1, {})
    # direct route: sum over x0 pairs, position 0 unobserved entirely
    qbar = SCHED2.cum(2)
    w = np.zeros(2)
    for v0 in range(2):
        for v1 in range(2):
            w[v1] += law.prob((v0, v1)) * qbar[v1, MASK]
    assert np.allclose(dl.probs, w / w.sum(), atol=1e-12)


def test_draft_law_position_bounds():
    ctx = DraftContext(1, (0,), (MASK,), 2)
    with pytest.raises(ValueError):
        draft_law(RICH, SCHED2, ctx, 0, {})


def test_clean_posterior_joint_matches_brute_force():
    rng_seeds = [(2, 3, 0), (3, 2, 1), (3, 3, 2)]
    for s, d, seed in rng_seeds:
        vocab = Vocabulary(s)
        law = DataLaw.random(vocab, d, seed=seed)
        sched = build_absorbing_schedule(vocab, [0.4, 0.6])
        rng = SeededRng(seed)
        x0 = law.sample(rng)
        from specdiff.forward import sample_forward
        xt = sample_forward(x0, 2, sched, rng)
        for positions in ([0], list(range(d)), [0, d - 1] if d > 1 else [0]):
            pos = tuple(sorted(set(positions)))
            got = clean_posterior_joint(law, sched, xt, 2, pos)
            want = brute_joint(law, sched, xt, 2, pos)
            assert np.abs(got - want).max() < 1e-12


def test_clean_posterior_joint_anticorrelated_frozen():
    joint = clean_posterior_joint(ANTI, SCHED2, (MASK, MASK), 2, (0, 1))
    assert np.allclose(joint, [0.0, 0.5, 0.5, 0.0], atol=1e-12)


def test_factorized_joint_is_the_outer_product():
    xt = (MASK, MASK)
    f = factorized_joint(ANTI, SCHED2, xt, 2, (0, 1))
    p0 = independent_posterior(ANTI, SCHED2, xt, 0, 2).probs
    p1 = independent_posterior(ANTI, SCHED2, xt, 1, 2).probs
    assert np.allclose(f, np.outer(p0, p1).reshape(-1), atol=1e-14)
    # anticorrelated marginals are uniform, so the product is flat
    assert np.allclose(f, 0.25, atol=1e-12)


def test_zero_probability_conditioning_raises():
    with pytest.raises(ZeroProbabilityEvent):
        clean_posterior_joint(CORR, SCHED2, (0, 1), 2, (0, 1))


def test_evidence_length_mismatch():
    with pytest.raises(LengthMismatch):
        clean_posterior_joint(CORR, SCHED2, (MASK,), 2, (0,))


# ---- the prefix identity ------------------------------------------------------


def test_prefix_identity_gap_exhaustive_small():
    """The reconstruction from mean-field factors is exact, for every law,
    kernel kind, pivot, prefix, and reachable corrupted input."""
    for builder in (build_absorbing_schedule, build_uniform_schedule):
        sched = builder(V2, [0.5, 0.5])
        for law in (CORR, RICH):
            for t in (1, 2):
                for xt_code in range(3 ** 2):
                    xt = sequence_from_code(xt_code, 3, 2)
                    try:
                        clean_posterior_joint(law, sched, xt, t, (0, 1))
                    except ZeroProbabilityEvent:
                        continue
                    for i in range(2):
                        for pref_code in range(2 ** i):
                            prefix = sequence_from_code(pref_code, 2, i)
                            try:
                                gap = prefix_identity_gap(law, sched, xt, prefix, i, t)
                            except ZeroProbabilityEvent:
                                continue
                            assert gap < 1e-10


# ---- re-corruption conditional ------------------------------------------------


def brute_recorruption(law, sched, base, selected, t):
    s = law.vocab.size
    n = law.vocab.corrupt_size
    qbar = sched.cum(t)
    sel = tuple(selected)
    acc = np.zeros(s ** len(sel))
    for u_code in range(n ** len(sel)):
        u = sequence_from_code(u_code, n, len(sel))
        weight = 1.0
        for p, uv in zip(sel, u):
            weight *= qbar[base[p], uv]
        if weight == 0.0:
            continue
        w = np.zeros(s ** len(sel))
        for code in range(s ** len(sel)):
            xr = sequence_from_code(code, s, len(sel))
            full = list(base)
            lik = 1.0
            for p, v, uv in zip(sel, xr, u):
                full[p] = v
                lik *= qbar[v, uv]
            w[code] = law.prob(tuple(full)) * lik
        total = w.sum()
        if total > 0:
            acc += weight * w / total
    return acc / acc.sum()


def test_recorruption_conditional_matches_brute_force():
    for base in ((0, 0), (1, 1), (0, 1)):
        if RICH.prob(base) == 0:
            continue
        for selected in ((0,), (1,), (0, 1)):
            got = recorruption_conditional(RICH, SCHED2, base, selected, 2)
            want = brute_recorruption(RICH, SCHED2, base, selected, 2)
            assert np.abs(got - want).max() < 1e-12


def test_recorruption_conditional_keeps_survivor_weight():
    """With partial masking the conditional is a genuine mixture: the survived
    branch pins the original token, the masked branch resamples."""
    got = recorruption_conditional(ANTI, SCHED2, (0, 1), (0,), 2)
    # survive prob 0.25 pins token a; mask prob 0.75 resamples from
    # p(X_0^0 | X_0^1 = b) which is the delta at a too (law is ab/ba)
    assert np.allclose(got, [1.0, 0.0], atol=1e-12)
    # under the uniform-pair law the masked branch is uniform instead
    unif = DataLaw.uniform(V2, 2)
    got = recorruption_conditional(unif, SCHED2, (0, 1), (0,), 2)
    assert np.allclose(got, [0.25 + 0.75 * 0.5, 0.75 * 0.5], atol=1e-12)


def test_recorruption_conditional_rejects_impossible_base():
    with pytest.raises(ZeroProbabilityEvent):
        recorruption_conditional(CORR, SCHED2, (0, 1), (0,), 2)


# ---- predictor façade ---------------------------------------------------------


def test_exact_predictor_matches_module_functions():
    pred = ExactPredictor(RICH, SCHED2)
    ctx = HybridContext(1, (0,), (MASK,), 2)
    assert np.allclose(pred.target(ctx).probs,
                       prefix_posterior(RICH, SCHED2, ctx).probs)
    dctx = DraftContext(0, (), (MASK,), 2)
    assert np.allclose(pred.draft(dctx, 1).probs,
                       draft_law(RICH, SCHED2, dctx, 1, {}).probs)
    xt = (MASK, MASK)
    assert np.allclose(pred.independent(xt, 0, 2).probs,
                       independent_posterior(RICH, SCHED2, xt, 0, 2).probs)
    assert np.allclose(pred.joint(xt, 2, (0, 1)),
                       clean_posterior_joint(RICH, SCHED2, xt, 2, (0, 1)))


def test_exact_predictor_caches_queries():
    pred = ExactPredictor(RICH, SCHED2)
    a = pred.joint((MASK, MASK), 2, (0, 1))
    b = pred.joint((MASK, MASK), 2, (0, 1))
    assert a is b  # second call is a cache hit
    pred.clear_cache()
    c = pred.joint((MASK, MASK), 2, (0, 1))
    assert c is not a and np.array_equal(c, a)
