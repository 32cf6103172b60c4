"""Release checklist: ten end-to-end guarantees, one test each.

Every criterion states its own tolerance; exact identities use tight
absolute windows, Monte Carlo comparisons use three standard errors
(plus the reported truncation bias where it applies). Runtime limits
are asserted where the guarantee includes one. Run with -v to get one
pass/fail line per criterion.
"""

from itertools import product
from time import monotonic

import numpy as np

from wcdp.bandit import bandit_row
from wcdp.finite_horizon import (fh_info_bound, fh_lambda_search,
                                 fh_practical_bound, fh_value,
                                 random_fh_model)
from wcdp.inforelax import (JointInnerEvaluator, default_tau_cap,
                            draw_scenario, estimate_info_bound, inner_exact,
                            supersolution_check)
from wcdp.lagrangian import (SubgradientConfig, _expected_discounted_usage,
                             alp_bound, lagrangian_bound, optimal_lambda_lp)
from wcdp.lp import LinearProgram, solve_lp
from wcdp.lqc import generate_lqc, run_lqc_table
from wcdp.model import (InitialDistribution, deterministic_transition,
                        joint_value_iteration, random_weakly_coupled,
                        sample_scenario, scenario_seed, state_index)
from wcdp.penalty import JointTablePenalty, joint_value
from wcdp.practical import (RelaxedEvaluator, estimate_practical_bound,
                            gap_certificate, inner_lp_oracle, minimize_mu,
                            truncation_chain, uniform_gamma_check)

from conftest import seeded_instance, three_state_example
from oracles import (brute_fh_value, lp_vertex_oracle, lqc_grid_value,
                     random_bounded_lp)


def _priced(model):
    dist = InitialDistribution.uniform(model)
    bound, lp = optimal_lambda_lp(model, dist)
    return dist, bound, lp


def test_criterion_01_golden_example():
    """Worked three-state instance: every quantity in closed form.

    Exact values (18, 0, 20); optimal price 6 with flat priced bound 60;
    supersolution slack >= 4; scenario inner value -6 - 4*tau; relaxed
    estimator lands on 18. Exact tolerances 1e-6, Monte Carlo 3 SE.
    Budget: 10 seconds.
    """
    t0 = monotonic()
    model = three_state_example()
    sol = joint_value_iteration(model)
    assert np.max(np.abs(sol.values - np.array([18.0, 0.0, 20.0]))) <= 1e-6

    _, bound, _ = _priced(model)
    assert abs(bound.lam[0] - 6.0) <= 1e-6
    for x in range(3):
        assert abs(bound.value((x,)) - 60.0) <= 1e-6

    pen = bound.penalty()
    report = supersolution_check(model, pen)
    assert report.is_supersolution
    assert report.epsilon >= 4.0 - 1e-6

    cap = default_tau_cap(model.discount)
    for i in range(6):
        sc = draw_scenario(model, scenario_seed(21, i), cap)
        res = inner_exact(model, pen, sc, (0,))
        assert abs(res.value - (-6.0 - 4.0 * sc.tau)) <= 1e-6

    est = estimate_info_bound(model, pen, (0,), 1000, seed=5)
    assert abs(est.value - 18.0) <= 3.0 * est.se + est.bias_bound
    assert monotonic() - t0 < 10.0


def test_criterion_02_exact_table_zero_variance():
    """With the exact joint table as the surrogate, every scenario's
    inner maximum vanishes: 20 instances, |value| <= 1e-8 per scenario.
    Budget: 60 seconds.
    """
    t0 = monotonic()
    for seed in range(20):
        model = seeded_instance(seed)
        sol = joint_value_iteration(model)
        pen = JointTablePenalty(values=sol.values)
        ev = JointInnerEvaluator(model, pen)
        x0 = (0,) * model.n_subproblems
        cap = default_tau_cap(model.discount)
        for i in range(10):
            sc = draw_scenario(model, scenario_seed(100 + seed, i), cap)
            v = ev.inner(sc, x0).value
            assert -1e-8 <= v <= 1e-8, (seed, i, v)
    assert monotonic() - t0 < 60.0


def test_criterion_03_bound_lattice_ordering():
    """Exact value <= scenario bound <= decoupled bound <= price bound on
    20 instances with 200 common scenarios, each step within 3 combined
    SE, and every per-scenario decoupled value nonpositive (1e-9 slack).
    Budget: 5 minutes.
    """
    t0 = monotonic()
    for seed in range(20):
        model = seeded_instance(seed)
        x0 = (0,) * model.n_subproblems
        _, bound, _ = _priced(model)
        pen = bound.penalty()
        sol = joint_value_iteration(model)
        v0 = sol.values[state_index(model, x0)]

        info = estimate_info_bound(model, pen, x0, 200, seed=1000 + seed)
        prac = estimate_practical_bound(model, pen, x0, 200, seed=1000 + seed)
        assert v0 <= info.value + 3.0 * info.se + info.bias_bound + 1e-9
        assert info.value <= prac.value + 3.0 * (info.se + prac.se) + 1e-9
        assert prac.value <= bound.value(x0) + 3.0 * prac.se + 1e-9

        h0 = joint_value(model, pen, x0)
        assert float(np.max(prac.samples - h0)) <= 1e-9
    assert monotonic() - t0 < 300.0


def test_criterion_04_separable_lp_dominance():
    """The separable-supersolution LP never exceeds the optimized price
    bound in weighted value (1e-6) and its one-step dominance rows hold
    within 1e-7 on all 20 instances.
    """
    for seed in range(20):
        model = seeded_instance(seed)
        dist = InitialDistribution.uniform(model)
        _, lp = optimal_lambda_lp(model, dist)
        alp = alp_bound(model, dist)
        assert alp.objective <= lp.objective + 1e-6
        report = supersolution_check(model, alp.penalty())
        assert report.epsilon >= -1e-7, (seed, report.epsilon)


def test_criterion_05_trajectory_lp_equivalence():
    """Subgradient minimization of the priced scenario value meets the
    exact trajectory LP within 1e-3 on 50 tiny scenarios, and each LP
    solve closes its own primal-dual gap within 1e-6.
    """
    checked = 0
    for inst in range(10):
        model = random_weakly_coupled(2, 2, 2, 1, 0.9, 3000 + inst)
        _, bound, _ = _priced(model)
        pen = bound.penalty()
        x0 = (0, 0)
        for i in range(5):
            sc = sample_scenario(model, seed=10 * inst + i, horizon=i % 3)
            ref = inner_lp_oracle(model, pen, sc, x0)
            assert abs(ref.primal_objective - ref.dual_objective) <= 1e-6
            val, _, _ = minimize_mu(model, pen, sc, x0,
                                    config=SubgradientConfig(max_iters=3000,
                                                             s0=1.0))
            assert abs(val - ref.value) <= 1e-3 * (1 + abs(ref.value))
            checked += 1
    assert checked == 50


def test_criterion_06_truncation_monotonicity():
    """Per common scenario, the truncated decoupled value never
    increases with the truncation horizon (1e-9 slack across
    T in {0, 2, 5, 10, tau cap}).
    """
    for seed in range(20):
        model = seeded_instance(seed)
        x0 = (0,) * model.n_subproblems
        _, bound, _ = _priced(model)
        horizons = [0, 2, 5, 10, default_tau_cap(model.discount)]
        chain = truncation_chain(model, bound.penalty(), x0, horizons, 40,
                                 seed=77 + seed,
                                 config=SubgradientConfig(max_iters=60))
        for prev, cur in zip(chain, chain[1:]):
            worst = float(np.max(cur.samples - prev.samples))
            assert worst <= 1e-9, (seed, worst)


def test_criterion_07_gap_certificate():
    """The paired-scenario excess of the decoupled bound over the
    scenario bound stays within the certified worst case, and the
    integrand spreads respect the uniform scale cap exactly.
    """
    for seed in range(20):
        model = seeded_instance(seed)
        x0 = (0,) * model.n_subproblems
        _, bound, _ = _priced(model)
        pen = bound.penalty()

        info = estimate_info_bound(model, pen, x0, 200, seed=1000 + seed)
        prac = estimate_practical_bound(model, pen, x0, 200, seed=1000 + seed)
        diff = prac.samples - info.samples
        dmean = float(diff.mean())
        dse = float(diff.std(ddof=1) / np.sqrt(diff.shape[0]))

        cert = gap_certificate(model, pen)
        assert dmean <= cert.gap_bound + 3.0 * dse
        report = uniform_gamma_check(model, bound)
        assert report.within
        assert cert.gamma_max <= report.cap


def test_criterion_08_finite_horizon_suite():
    """Finite-horizon chain exact <= scenario <= decoupled <= price on
    ten instances (T <= 5), and the stagewise solver reproduces
    brute-force enumeration on every start state for T <= 2, N <= 2.
    """
    for i in range(10):
        horizon = (i % 5) + 1
        n = 1 + (i % 3)
        links = 1 + (i % 2)
        model = random_fh_model(n, 3, 2, horizon, links, seed=i)
        x0 = (0,) * n
        sol = fh_value(model)
        u0 = sol.value(model, x0)
        bound, _ = fh_lambda_search(model, x0)
        pen = bound.penalty()
        info = fh_info_bound(model, pen, x0, 200, seed=40 + i)
        prac = fh_practical_bound(model, pen, x0, 200, seed=40 + i)
        assert u0 <= info.value + 3.0 * info.se + 1e-9
        assert info.value <= prac.value + 3.0 * (info.se + prac.se) + 1e-9
        assert prac.value <= bound.value(x0) + 3.0 * prac.se + 1e-9

    for seed, horizon, n in [(0, 1, 1), (1, 2, 2), (2, 2, 1), (3, 1, 2)]:
        model = random_fh_model(n, 2, 2, horizon, 1, seed=seed)
        sol = fh_value(model)
        for x0 in product(range(2), repeat=n):
            ref = brute_fh_value(model, x0)
            assert abs(sol.value(model, x0) - ref) <= 1e-9


def test_criterion_09_benchmark_tables():
    """Benchmark rows satisfy their lattice orderings at desk scale.

    Switching rows (N in {2, 5}, 4 states, discount 0.9, 100 scenarios,
    truncation 50): policy <= scenario bound <= price bound within 3 SE
    and the normalized gap stays in [-0.05, 1.05]. Control rows
    (N in {1, 2}, T in {1, 5}): unconstrained <= price <= scenario <=
    policy within 3 SE, and the single-coordinate single-period cell is
    checked against an exhaustive grid search. Budget: 10 minutes.
    """
    t0 = monotonic()
    for n_arms, seed in ((2, 900), (5, 901)):
        row = bandit_row(n_arms, 0.9, seed, n_scenarios=100, n_paths=100,
                         n_states=4, trunc=50)
        slack_pi = 3.0 * (row["policy_se"] + row["info_se"])
        assert row["policy_value"] <= row["info_bound"] + slack_pi
        assert row["info_bound"] <= row["lag_bound"] + 3.0 * row["info_se"]
        if row["gap2"] != "n/a":
            assert -0.05 <= row["gap2"] <= 1.05

    rows = []
    for horizon in (1, 5):
        rows += run_lqc_table([1, 2], [1.0], horizon=horizon,
                              seed=910 + horizon, n_paths=400,
                              n_scenarios=300)
    for row in rows:
        assert row["unconstrained"] <= row["lag_bound"] + 1e-9
        assert row["lag_bound"] <= row["info_bound"] + 3.0 * row["info_se"] + 1e-9
        slack_ip = 3.0 * (row["info_se"] + row["proj_se"])
        assert row["info_bound"] <= row["proj_value"] + slack_ip + 1e-9

    cell = rows[0]
    assert cell["N"] == 1 and cell["T"] == 1
    ref, _ = lqc_grid_value(generate_lqc(1, 1, 1.0, cell["seed"]))
    tol = 5e-3 * max(1.0, abs(ref))
    assert abs(cell["proj_value"] - ref) <= tol + 3.0 * cell["proj_se"]
    assert cell["lag_bound"] <= ref + tol
    assert cell["info_bound"] <= ref + tol + 3.0 * cell["info_se"]
    assert monotonic() - t0 < 600.0


def test_criterion_10_numeric_hygiene():
    """Solver and sampler ground truth: 500 random programs against a
    rational vertex oracle (1e-7), one-sided finite differences confirm
    reported subgradients, and the inverse-transform sampler passes a
    chi-squared test at three sigma.
    """
    rng = np.random.default_rng(12)
    optimal = 0
    for k in range(500):
        n_vars = 2 if k % 3 else 3
        c, a, senses, rhs, upper = random_bounded_lp(
            rng, n_vars=n_vars, n_rows=int(rng.integers(2, 6)))
        status, obj = lp_vertex_oracle(c, a, senses, rhs, upper)
        sol = solve_lp(LinearProgram(c=np.asarray(c, dtype=float),
                                     a=np.asarray(a, dtype=float),
                                     senses=senses,
                                     rhs=np.asarray(rhs, dtype=float),
                                     upper=np.asarray(upper, dtype=float)))
        assert sol.status == status
        if status == "optimal":
            assert abs(sol.objective - float(obj)) <= 1e-7 * (1 + abs(float(obj)))
            optimal += 1
    assert optimal >= 100

    # priced scenario value: convex in the multiplier path, so a forward
    # difference can only overshoot the reported subgradient coordinate
    model = seeded_instance(2)
    x0 = (0,) * model.n_subproblems
    dist, bound, _ = _priced(model)
    ev = RelaxedEvaluator(model, bound.penalty())
    cap = default_tau_cap(model.discount)
    h = 1e-6
    for trial in range(6):
        sc = draw_scenario(model, scenario_seed(55, trial), cap)
        mu = rng.uniform(0.0, 2.0, size=(sc.tau + 1, model.n_links))
        res = ev.evaluate(sc, x0, mu)
        for _ in range(3):
            t = int(rng.integers(sc.tau + 1))
            l = int(rng.integers(model.n_links))
            bumped = mu.copy()
            bumped[t, l] += h
            fd = (ev.evaluate(sc, x0, bumped).value - res.value) / h
            assert fd >= res.subgradient[t, l] - 1e-6

    # same check for the price objective and its reported subgradient
    beta = model.discount

    def weighted(lam):
        b = lagrangian_bound(model, lam)
        return b.theta + sum(dist.marginal(model, n) @ b.tables[n]
                             for n in range(model.n_subproblems))

    for trial in range(4):
        lam = rng.uniform(0.0, 1.0, size=model.n_links)
        b = lagrangian_bound(model, lam)
        g = model.budget / (1.0 - beta)
        for n, sub in enumerate(model.subproblems):
            usage = _expected_discounted_usage(sub, beta, b.policies[n])
            g = g - dist.marginal(model, n) @ usage
        f0 = weighted(lam)
        for i in range(model.n_links):
            step = np.zeros(model.n_links)
            step[i] = h
            fd = (weighted(lam + step) - f0) / h
            assert fd >= g[i] - 1e-5

    # inverse-transform transitions reproduce the transition row; a fair
    # sampler still exceeds the 3-sigma line on ~1.8% of streams, so the
    # draw is pinned to keep the test deterministic
    model = seeded_instance(1)
    sub = model.subproblems[0]
    probs = sub.transition[0, 0]
    draws = np.random.default_rng(3).random(20000)
    counts = np.zeros(sub.n_states)
    for u in draws:
        counts[deterministic_transition(model, 0, 0, 0, u)] += 1
    live = probs > 0
    assert np.all(counts[~live] == 0)
    expected = probs[live] * draws.shape[0]
    chi2 = float(np.sum((counts[live] - expected) ** 2 / expected))
    df = int(live.sum()) - 1
    assert chi2 <= df + 3.0 * np.sqrt(2.0 * df)
