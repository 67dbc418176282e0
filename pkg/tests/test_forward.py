"""Forward corruption schedules and the closed-form single-step posterior."""

import numpy as np
import pytest

from specdiff.core import SeededRng, Vocabulary
from specdiff.errors import InvalidBeta, TimeOutOfRange, ZeroProbabilityEvent
from specdiff.forward import (
    build_absorbing_schedule,
    build_uniform_schedule,
    constant_betas,
    forward_posterior,
    marginal,
    recorrupt_position,
    sample_forward,
)

V2 = Vocabulary(2)


def test_constant_betas_hit_the_terminal_rate():
    betas = constant_betas(4, 0.9)
    assert len(betas) == 4
    survive = np.prod([1 - b for b in betas])
    assert abs((1 - survive) - 0.9) < 1e-12
    assert all(b == betas[0] for b in betas)


def test_constant_betas_full_masking():
    betas = constant_betas(3, 1.0)
    assert betas[-1] == 1.0 or abs(np.prod([1 - b for b in betas])) < 1e-12


def test_beta_validation():
    with pytest.raises(InvalidBeta):
        build_absorbing_schedule(V2, [1.5])
    with pytest.raises(InvalidBeta):
        build_absorbing_schedule(V2, [-0.1])
    with pytest.raises(InvalidBeta):
        build_absorbing_schedule(V2, [])


def test_time_bounds():
    sched = build_absorbing_schedule(V2, [0.5, 0.5])
    with pytest.raises(TimeOutOfRange):
        sched.kernel(0)
    with pytest.raises(TimeOutOfRange):
        sched.kernel(3)
    with pytest.raises(TimeOutOfRange):
        sched.cum(-1)
    assert np.allclose(sched.cum(0), np.eye(3))


def test_absorbing_kernel_moves_mass_only_to_mask():
    sched = build_absorbing_schedule(V2, [0.3])
    k = sched.kernel(1)
    assert np.allclose(k[0], [0.7, 0.0, 0.3])
    assert np.allclose(k[1], [0.0, 0.7, 0.3])
    assert np.allclose(k[2], [0.0, 0.0, 1.0])  # mask is absorbing


def test_uniform_kernel_mixes_within_clean_block():
    # beta = 0.5 over two clean tokens: stay 0.75, swap 0.25
    sched = build_uniform_schedule(V2, [0.5])
    k = sched.kernel(1)
    assert np.allclose(k[0], [0.75, 0.25, 0.0])
    assert np.allclose(k[1], [0.25, 0.75, 0.0])
    assert np.allclose(k[2], [0.0, 0.0, 1.0])  # identity padding, never entered


def test_uniform_two_step_cumulative_diagonal():
    # two steps of beta = 0.5 compose to a 0.625 stay probability
    sched = build_uniform_schedule(V2, [0.5, 0.5])
    qbar = sched.cum(2)
    assert abs(qbar[0, 0] - 0.625) < 1e-12
    assert abs(qbar[1, 1] - 0.625) < 1e-12


def test_rows_are_stochastic_for_both_kinds():
    for builder in (build_absorbing_schedule, build_uniform_schedule):
        sched = builder(Vocabulary(4), [0.2, 0.7, 0.4])
        for t in range(1, 4):
            assert np.allclose(sched.kernel(t).sum(axis=1), 1.0, atol=1e-12)
            assert np.allclose(sched.cum(t).sum(axis=1), 1.0, atol=1e-12)


def test_marginal_matches_cumulative_row():
    sched = build_absorbing_schedule(V2, [0.5, 0.5])
    m = marginal(0, 2, sched)
    assert np.allclose(m.probs, [0.25, 0.0, 0.75])


def test_forward_posterior_frozen_absorbing_case():
    # x0 = 0, fully masked at t = 2 under beta = (0.5, 0.5): the hidden
    # intermediate is clean with probability 1/3 and already masked with 2/3.
    sched = build_absorbing_schedule(V2, [0.5, 0.5])
    post = forward_posterior(V2.mask_id, 0, 2, sched)
    assert np.allclose(post.probs, [1 / 3, 0.0, 2 / 3], atol=1e-12)


def test_forward_posterior_is_bayes_consistent():
    """q(x_{t-1} | x_t, x_0) q(x_t | x_0) == Q_t[x_{t-1}, x_t] Qbar_{t-1}[x_0, x_{t-1}]"""
    for builder in (build_absorbing_schedule, build_uniform_schedule):
        sched = builder(Vocabulary(3), [0.4, 0.6, 0.3])
        n = sched.vocab.corrupt_size
        for t in (1, 2, 3):
            for x0 in range(sched.vocab.size):
                for xt in range(n):
                    reach = sched.cum(t)[x0, xt]
                    if reach == 0.0:
                        with pytest.raises(ZeroProbabilityEvent):
                            forward_posterior(xt, x0, t, sched)
                        continue
                    post = forward_posterior(xt, x0, t, sched)
                    for prev in range(n):
                        lhs = post.prob(prev) * reach
                        rhs = sched.kernel(t)[prev, xt] * sched.cum(t - 1)[x0, prev]
                        assert abs(lhs - rhs) < 1e-12


def test_forward_posterior_unreachable_event():
    sched = build_absorbing_schedule(V2, [0.5])
    with pytest.raises(ZeroProbabilityEvent):
        forward_posterior(1, 0, 1, sched)  # absorbing never swaps clean tokens


def test_sample_forward_matches_marginal():
    sched = build_absorbing_schedule(V2, [0.5, 0.5])
    rng = SeededRng(5)
    draws = np.array([sample_forward((0, 1), 2, sched, rng) for _ in range(20000)])
    freq0 = np.bincount(draws[:, 0], minlength=3) / len(draws)
    assert np.abs(freq0 - marginal(0, 2, sched).probs).max() < 0.02


def test_recorrupt_position_uses_the_level_marginal():
    sched = build_absorbing_schedule(V2, [0.5, 0.5])
    rng = SeededRng(6)
    draws = np.array([recorrupt_position(1, 2, sched, rng) for _ in range(20000)])
    freq = np.bincount(draws, minlength=3) / len(draws)
    assert np.abs(freq - marginal(1, 2, sched).probs).max() < 0.02
