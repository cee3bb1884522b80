import random
from fractions import Fraction as F

import pytest

from cvarssp.lp import INFEASIBLE, LpModel, UnboundedLp, solve_lp
from cvarssp.lp.cvar import build_lp, reach_lower_bound, solve_cvar_lp
from cvarssp.lp.model import to_lp_format
from cvarssp.model import float_mode, make_mdp
from cvarssp.models import deterministic_chain, gen_fig4, geometric_chain, random_mdp
from cvarssp.policy import Policy, policy_risk
from cvarssp.ssp import solve_ssp
from cvarssp.vi import solve_cvar_vi

BACKENDS = ("exact", "exact-pure", "float")


# ---------------------------------------------------------------- generic LPs


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_bound(backend):
    lp = LpModel()
    x = lp.var("x")
    lp.add({x: 1}, ">=", 3)
    lp.minimize({x: 1})
    sol = solve_lp(lp, backend)
    assert sol.optimal and sol.objective == 3 and sol.values == (3,)


@pytest.mark.parametrize("backend", BACKENDS)
def test_contradiction_is_infeasible(backend):
    lp = LpModel()
    x = lp.var("x")
    lp.add({x: 1}, ">=", 3)
    lp.add({x: 1}, "<=", 2)
    lp.minimize({x: 1})
    assert solve_lp(lp, backend).status == INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded_raises(backend):
    lp = LpModel()
    x, y = lp.var("x"), lp.var("y")
    lp.add({x: 1, y: -1}, "<=", 1)
    lp.minimize({y: -1})
    with pytest.raises(UnboundedLp):
        solve_lp(lp, backend)


def test_model_rejects_bad_input():
    lp = LpModel()
    with pytest.raises(IndexError):
        lp.add({0: 1}, "=", 0)
    lp.var("x")
    with pytest.raises(ValueError):
        lp.add({0: 1}, "<", 0)
    with pytest.raises(ValueError):
        solve_lp(lp, "cplex")


def _random_lp(rng):
    lp = LpModel()
    n = rng.randint(1, 5)
    xs = [lp.var(f"x{j}") for j in range(n)]
    for _ in range(rng.randint(1, 5)):
        coeffs = {j: F(rng.randint(-4, 4), rng.randint(1, 3)) for j in xs if rng.random() < 0.7}
        lp.add(coeffs, rng.choice(("<=", "=", ">=")), F(rng.randint(-3, 6), rng.randint(1, 2)))
    # box the variables so the optimum is finite
    for j in xs:
        lp.add({j: 1}, "<=", 10)
    lp.minimize({j: F(rng.randint(-3, 3), rng.randint(1, 3)) for j in xs})
    return lp


def test_backends_agree_on_random_lps():
    rng = random.Random(5)
    for _ in range(300):
        lp = _random_lp(rng)
        exact = solve_lp(lp, "exact")
        pure = solve_lp(lp, "exact-pure")
        approx = solve_lp(lp, "float")
        assert exact.status == pure.status == approx.status
        if exact.optimal:
            assert exact.objective == pure.objective
            assert abs(float(exact.objective) - approx.objective) < 1e-7
            assert lp.violation(exact.values) == 0
            assert lp.evaluate(exact.values) == exact.objective


# ---------------------------------------------------------------- CVaR programs


def test_geometric_program_size_and_value():
    m = geometric_chain()
    lp = build_lp(m, solve_ssp(m), F(1, 4), 2)
    assert lp.n_vars == 10 and len(lp.constraints) == 12
    assert solve_lp(lp).objective == F(1, 2)


def test_guess_below_var_infeasible():
    m = geometric_chain()
    assert solve_lp(build_lp(m, solve_ssp(m), F(1, 4), 1)).status == INFEASIBLE


def test_feasibility_is_not_monotone_in_guess():
    m = deterministic_chain(1)
    e = solve_ssp(m)
    assert solve_lp(build_lp(m, e, F(1, 2), 1)).optimal
    assert solve_lp(build_lp(m, e, F(1, 2), 2)).status == INFEASIBLE
    res, _, guesses = solve_cvar_lp(m, F(1, 2))
    assert res.var == 1 and res.cvar == 1
    assert [g.n for g in guesses] == [1]  # guesses above the best CVaR are skipped


@pytest.mark.parametrize("t, expected", [(F(1, 4), (2, 4)), (F(1, 2), (1, 3)), (F(3, 10), (2, F(11, 3)))])
def test_geometric_cvar(t, expected):
    res, pol, _ = solve_cvar_lp(geometric_chain(), t)
    assert (res.var, res.cvar) == expected
    assert policy_risk(geometric_chain(), pol, [t])[t] == res


def test_fig4_prefers_safe_action():
    m = gen_fig4(3)
    res, pol, _ = solve_cvar_lp(m, F(3, 20))
    assert res.cvar == 4
    assert policy_risk(m, pol, [F(3, 20)])[F(3, 20)].cvar == 4


def test_reach_bound():
    assert reach_lower_bound(geometric_chain(), F(1, 4)) == 2
    assert reach_lower_bound(deterministic_chain(4), F(1, 2)) == 4


def test_witness_matches_and_zero_flow_rows_are_free(random_models):
    rng = random.Random(9)
    for m in random_models[:20]:
        for t in (F(1, 2), F(1, 5)):
            res, pol, _ = solve_cvar_lp(m, t)
            assert policy_risk(m, pol, [t])[t] == res
            # rows that carry no flow may be filled arbitrarily
            rows = []
            for row in pol.prefix:
                row = dict(row)
                for s in m.states:
                    if s not in row and s not in m.goals and rng.random() < 0.5:
                        k = len(m.actions[s])
                        w = [rng.randint(1, 3) for _ in range(k)]
                        row[s] = {a: F(x, sum(w)) for a, x in enumerate(w)}
                rows.append(row)
            noisy = Policy(tuple(rows), pol.indexing, pol.tail)
            assert policy_risk(m, noisy, [t])[t].cvar == res.cvar


def test_total_cost_mode_matches_value_iteration():
    rng = random.Random(21)
    seen = 0
    while seen < 8:
        m = random_mdp(rng, costs=(1, 2, 3))
        if m.is_uniform:
            continue
        seen += 1
        t = F(1, 4)
        res, pol, _ = solve_cvar_lp(m, t)
        assert res == solve_cvar_vi(m, [t])[t]
        assert policy_risk(m, pol, [t])[t] == res


def test_uniform_model_solved_both_ways():
    m = gen_fig4(2)
    a, _, _ = solve_cvar_lp(m, F(1, 3), mode="uniform")
    b, _, _ = solve_cvar_lp(m, F(1, 3), mode="total")
    assert a == b


def test_uniform_mode_rejects_mixed_costs():
    m = make_mdp(2, {0: [("go", 2, [(1, 1)])]}, 0, [1])
    with pytest.raises(ValueError, match="unit costs"):
        solve_cvar_lp(m, F(1, 2), mode="uniform")


def test_float_program_close_to_exact():
    m = gen_fig4(3)
    exact, _, _ = solve_cvar_lp(m, F(1, 3))
    approx, _, _ = solve_cvar_lp(m, 1 / 3, float_mode())
    assert abs(float(exact.cvar) - approx.cvar) < 1e-7


def test_threshold_range():
    with pytest.raises(ValueError):
        solve_cvar_lp(geometric_chain(), F(1))


def test_lp_export():
    m = geometric_chain()
    seen = {}
    solve_cvar_lp(m, F(1, 4), on_lp=lambda n, lp: seen.setdefault(n, to_lp_format(lp, f"guess {n}")))
    assert sorted(seen) == [2, 3]
    text = seen[2]
    assert text.startswith("\\ guess 2\nMinimize\n obj: 2 p_s0_i2\nSubject To\n")
    assert " bracket_hi: p_s1_i2 >= 0.75" in text
    assert " split_s0_i0: p_s0_i0 - p_s0_a0_i0 = 0" in text
    assert text.rstrip().endswith("End")


def test_early_stop_and_lower_bound_are_sound(random_models):
    for m in random_models[:8]:
        e = solve_ssp(m)
        for t in (F(1, 2), F(1, 4)):
            res, _, guesses = solve_cvar_lp(m, t, e=e)
            lo = reach_lower_bound(m, t)
            if lo > 1:
                assert solve_lp(build_lp(m, e, t, lo - 1)).status == INFEASIBLE
            # scan well past the stopping point: nothing beats the reported optimum
            for n in range(max(lo, 1), guesses[-1].n + 4):
                sol = solve_lp(build_lp(m, e, t, n))
                if sol.optimal:
                    assert n + sol.objective / t >= res.cvar
