import numpy as np
import pytest

from wcdp.errors import ConfigError
from wcdp.inforelax import (default_tau_cap, draw_scenario,
                            estimate_info_bound, greedy_consistency_certificate,
                            inner_exact, replay_actions, sample_tau,
                            supersolution_check)
from wcdp.lagrangian import optimal_lambda_lp
from wcdp.model import (InitialDistribution, Scenario, joint_value_iteration,
                        sample_scenario, state_index)
from wcdp.penalty import JointTablePenalty

from conftest import seeded_instance
from oracles import brute_inner_value


def test_sample_tau_frozen_points():
    assert sample_tau(0.9, 0.95) == 28
    assert sample_tau(0.9, 0.0) == 0
    assert sample_tau(0.5, 0.49) == 0
    assert sample_tau(0.5, 0.51) == 1


def test_sample_tau_matches_geometric_cdf():
    beta = 0.85
    for u in np.linspace(0.001, 0.999, 97):
        t = sample_tau(beta, float(u))
        # smallest t with 1 - beta^{t+1} > u
        assert 1.0 - beta ** (t + 1) > u
        assert t == 0 or 1.0 - beta ** t <= u


def test_default_tau_cap():
    assert default_tau_cap(0.9) == 131
    cap = default_tau_cap(0.95)
    assert 0.95 ** (cap + 1) < 1e-6 <= 0.95 ** cap


def test_draw_scenario_respects_cap(golden):
    caps = []
    for i in range(200):
        sc = draw_scenario(golden, seed=i, tau_cap=10)
        assert 0 <= sc.tau <= 10
        assert sc.uniforms.shape == (1, sc.tau + 1)
        caps.append(sc.tau)
    assert max(caps) == 10  # resampling actually exercises the cap


def test_inner_exact_golden_formula(golden):
    # from state 0 the scenario value is -6 - 4 tau at the optimal price
    dist = InitialDistribution.point(golden, (0,))
    bound, _ = optimal_lambda_lp(golden, dist)
    pen = bound.penalty()
    for tau in (0, 1, 3, 7):
        sc = sample_scenario(golden, seed=5, horizon=tau)
        res = inner_exact(golden, pen, sc, (0,))
        assert abs(res.value - (-6.0 - 4.0 * tau)) < 1e-9
        replay = replay_actions(golden, pen, sc, (0,), res.actions)
        assert abs(replay - res.value) < 1e-9


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_inner_exact_matches_brute_force(seed):
    model = seeded_instance(seed)
    dist = InitialDistribution.uniform(model)
    bound, _ = optimal_lambda_lp(model, dist)
    pen = bound.penalty()
    x0 = (0,) * model.n_subproblems
    for tau in (0, 1, 2, 3):
        sc = sample_scenario(model, seed=seed + 10, horizon=tau)
        res = inner_exact(model, pen, sc, x0)
        ref = brute_inner_value(model, pen, sc, x0)
        assert abs(res.value - ref) < 1e-9, (res.value, ref)


def test_inner_exact_zero_variance_at_exact_values(small_random):
    sol = joint_value_iteration(small_random)
    pen = JointTablePenalty(values=sol.values)
    x0 = (0,) * small_random.n_subproblems
    for i in range(10):
        sc = draw_scenario(small_random, seed=i,
                           tau_cap=default_tau_cap(small_random.discount))
        res = inner_exact(small_random, pen, sc, x0)
        assert abs(res.value) < 1e-8


def test_estimate_info_bound_golden(golden):
    dist = InitialDistribution.point(golden, (0,))
    bound, _ = optimal_lambda_lp(golden, dist)
    est = estimate_info_bound(golden, bound.penalty(), (0,),
                              n_scenarios=600, seed=3)
    assert est.n_samples == 600
    assert est.seed == 3
    assert est.bias_bound < 2e-3  # 0.9^132 tail times 2 sup|H| / (1-beta)
    # true estimand is 18: J(0) + E[-6 - 4 tau] = 60 - 6 - 36
    assert abs(est.value - 18.0) < 3 * est.se + est.bias_bound + 1e-9
    assert est.se > 0.1  # per-sample spread is genuinely large here


def test_estimate_info_bound_rejects_bad_counts(golden):
    dist = InitialDistribution.point(golden, (0,))
    bound, _ = optimal_lambda_lp(golden, dist)
    with pytest.raises(ConfigError):
        estimate_info_bound(golden, bound.penalty(), (0,), n_scenarios=0,
                            seed=1)


def test_supersolution_check_golden(golden):
    dist = InitialDistribution.point(golden, (0,))
    bound, _ = optimal_lambda_lp(golden, dist)
    rep = supersolution_check(golden, bound.penalty())
    assert rep.is_supersolution
    assert abs(rep.epsilon - 4.0) < 1e-9
    assert rep.worst_state == (2,)
    assert rep.worst_action == (1,)


def test_supersolution_slack_shifts_the_estimate(golden):
    # adding slack eps to the penalty lowers the bound by eps/(1-beta)
    dist = InitialDistribution.point(golden, (0,))
    bound, _ = optimal_lambda_lp(golden, dist)
    pen = bound.penalty()
    shifted = JointTablePenalty(
        values=np.array([pen.value((x,)) + 10.0 * (1 - golden.discount)
                         for x in range(3)]))
    sc = sample_scenario(golden, seed=2, horizon=4)
    base = inner_exact(golden, pen, sc, (0,)).value
    moved = inner_exact(golden, shifted, sc, (0,)).value
    # identical scenario: the integrand drops by eps(1-beta) each period
    assert moved < base - 1e-9


def test_greedy_consistency_at_exact_values(small_random):
    sol = joint_value_iteration(small_random)
    pen = JointTablePenalty(values=sol.values)
    x0 = (0,) * small_random.n_subproblems
    rep = greedy_consistency_certificate(small_random, pen, x0,
                                         horizons=(1, 2, 4), n_scenarios=8,
                                         seed=5)
    assert rep.passed
    assert rep.argmax_ok
    assert rep.max_gap < 1e-8


def test_greedy_consistency_flags_wrong_tables(small_random):
    sol = joint_value_iteration(small_random)
    wrong = sol.values.copy()
    wrong[0] += 7.0  # corrupt one state's value
    pen = JointTablePenalty(values=wrong)
    x0 = (0,) * small_random.n_subproblems
    rep = greedy_consistency_certificate(small_random, pen, x0,
                                         horizons=(1, 2, 4), n_scenarios=8,
                                         seed=5)
    assert not rep.passed
