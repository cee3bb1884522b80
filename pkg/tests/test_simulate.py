from fractions import Fraction as F

import pytest

from cvarssp.lp.cvar import solve_cvar_lp
from cvarssp.model import AssumptionError
from cvarssp.models import deterministic_chain, gen_fig4, gen_walk, geometric_chain
from cvarssp.policy import STEP, Policy, stationary
from cvarssp.simulate import simulate_policy
from cvarssp.ssp import evaluate_policy_expectation, solve_ssp


def test_deterministic_chain_is_exact():
    m = deterministic_chain(3)
    rep = simulate_policy(m, stationary([0] * 4), [0.5, 0.1], 1000, seed=1)
    assert rep.completed == 1000 and rep.censored == 0
    assert rep.results[0.1].var == 3 and rep.results[0.1].cvar == 3
    assert rep.half_width[0.1] == 0 and rep.mean == 3


def test_geometric_chain_interval_holds_exact_value():
    m = geometric_chain()
    rep = simulate_policy(m, stationary([0, 0]), [0.25], 10**6, seed=7)
    assert rep.contains(0.25, 4)
    assert rep.half_width[0.25] < 0.02
    assert abs(rep.mean - 2) <= rep.mean_half_width * 1.5


def test_same_seed_same_report():
    m = gen_walk(8)
    pol = stationary(solve_ssp(m).tail_policy)
    a = simulate_policy(m, pol, [0.1], 200_000, seed=3)
    b = simulate_policy(m, pol, [0.1], 200_000, seed=3)
    assert a == b
    c = simulate_policy(m, pol, [0.1], 200_000, seed=4)
    assert c.distribution != a.distribution


def test_randomized_prefix_policy():
    m = gen_fig4(3)
    tail = tuple(0 for _ in m.states)
    mix = Policy(({m.initial: {0: F(1, 2), 1: F(1, 2)}},), STEP, tail)
    rep = simulate_policy(m, mix, [0.15], 400_000, seed=11)
    assert rep.contains(0.15, 5)


def test_mean_matches_expectation(random_models):
    for k, m in enumerate(random_models[:6]):
        tail = solve_ssp(m).tail_policy
        rep = simulate_policy(m, stationary(tail), [0.5], 100_000, seed=k)
        expected = float(evaluate_policy_expectation(m, tail)[m.initial])
        assert abs(rep.mean - expected) <= 2 * rep.mean_half_width + 1e-9


def test_lp_witness_audit():
    m = gen_fig4(3)
    res, pol, _ = solve_cvar_lp(m, F(3, 20))
    rep = simulate_policy(m, pol, [0.15], 100_000, seed=0, engine_cvar=res.cvar)
    assert rep.horizon == 40
    assert rep.contains(0.15, res.cvar)


def test_censoring():
    m = gen_walk(10)
    pol = stationary([0] * m.n_states)  # always walk: at least 10 steps
    with pytest.raises(AssumptionError, match="exceeded the horizon"):
        simulate_policy(m, pol, [0.5], 1000, horizon=5)
    rep = simulate_policy(m, pol, [0.5], 1000, horizon=25)
    assert rep.censored > 0 and rep.completed + rep.censored == 1000
    assert sum(rep.distribution.values()) == 1


def test_sample_count_must_be_positive():
    with pytest.raises(ValueError):
        simulate_policy(geometric_chain(), stationary([0, 0]), [0.5], 0)
