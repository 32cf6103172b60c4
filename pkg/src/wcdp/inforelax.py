"""Information-relaxation upper bounds with a random geometric horizon.

A scenario fixes the horizon tau ~ Geometric (P(tau = t) = (1-beta) beta^t)
and one uniform per (subproblem, period); transitions are then the
deterministic inverse-CDF maps. Given a candidate value function H, the
scenario value is

    H(x0) + max over admissible action paths of
        sum_{t=0}^{tau} [ R(x_t, a_t) + beta E[H | x_t, a_t] - H(x_t) ],

whose expectation dominates the optimal value for any H. When H is a
supersolution (every one-step integrand nonpositive) the inner maximum is
nonpositive scenario by scenario, so the estimate also lies below H(x0);
at H = V the inner maximum is identically zero and the estimator has no
variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import joint_inner_backward
from .errors import ConfigError, GuardError
from .model import (BoundEstimate, Scenario, WeaklyCoupledModel,
                    build_joint_space, meta_stream, project_uniforms,
                    scenario_next_states, scenario_seed, state_index)
from .penalty import (SeparablePenalty, joint_value, pair_expected_values,
                      pair_integrand)

_MAX_TAU_RESAMPLES = 10000


def sample_tau(discount: float, u: float) -> int:
    """Inverse-CDF draw of the geometric horizon: smallest t with
    1 - discount^(t+1) > u."""
    if not (0.0 <= u < 1.0):
        raise ConfigError("u must lie in [0, 1)")
    if u == 0.0:
        return 0
    t = max(0, int(math.ceil(math.log1p(-u) / math.log(discount))) - 1)
    while 1.0 - discount ** (t + 1) <= u:
        t += 1
    while t > 0 and 1.0 - discount ** t > u:
        t -= 1
    return t


def default_tau_cap(discount: float, tail: float = 1e-6) -> int:
    """Smallest t with discount^(t+1) < tail; horizons above it are resampled."""
    t = max(0, int(math.ceil(math.log(tail) / math.log(discount))) - 1)
    while discount ** (t + 1) >= tail:
        t += 1
    while t > 0 and discount ** t < tail:
        t -= 1
    return t


def draw_scenario(model: WeaklyCoupledModel, seed: int, tau_cap: int) -> Scenario:
    """Scenario with a capped geometric horizon.

    The horizon comes from the scenario's meta stream and is redrawn while
    it exceeds tau_cap (conditioning on tau <= cap); the transition
    uniforms use per-subproblem counter blocks, so the draw for (n, t)
    does not depend on how many horizon redraws happened.
    """
    if tau_cap < 0:
        raise ConfigError("tau_cap must be nonnegative")
    g = meta_stream(seed)
    for _ in range(_MAX_TAU_RESAMPLES):
        tau = sample_tau(model.discount, float(g.random()))
        if tau <= tau_cap:
            break
    else:
        raise ConfigError("horizon resampling failed; tau_cap is too small")
    return Scenario(tau=tau,
                    uniforms=project_uniforms(seed, model.n_subproblems, tau),
                    seed=seed)


# ---------------------------------------------------------------------------
# exact inner optimization over the joint space


@dataclass
class InnerResult:
    """Scenario inner maximum and the maximizing path (replayable)."""

    value: float                      # inner sum only, excludes H(x0)
    states: np.ndarray                # (tau+1,) joint state indices visited
    actions: np.ndarray               # (tau+1, N) action indices taken
    scenario: Scenario = field(repr=False)


class JointInnerEvaluator:
    """Caches the joint enumeration and per-pair integrand for one penalty,
    then prices scenarios by backward dynamic programming over joint states."""

    def __init__(self, model: WeaklyCoupledModel, penalty,
                 max_pairs: int = 2 * 10**5):
        self.model = model
        self.penalty = penalty
        self.space = build_joint_space(model, max_pairs=max_pairs)
        self.integrand = pair_integrand(model, penalty, self.space)

    def inner(self, scenario: Scenario, x0) -> InnerResult:
        tau = scenario.tau
        nxt = scenario_next_states(self.space, scenario.uniforms, tau)
        k0 = state_index(self.model, x0)
        value, chosen = joint_inner_backward(self.integrand, self.space.offsets,
                                             nxt, k0, tau + 1)
        states = self.space.pair_state[chosen]
        actions = self.space.pair_actions[chosen].astype(np.int64)
        return InnerResult(value=float(value), states=states, actions=actions,
                           scenario=scenario)


def inner_exact(model: WeaklyCoupledModel, penalty, scenario: Scenario, x0,
                max_pairs: int = 2 * 10**5) -> InnerResult:
    """One-shot exact inner solve (builds the enumeration each call)."""
    return JointInnerEvaluator(model, penalty, max_pairs=max_pairs).inner(scenario, x0)


def _expected_penalty_value(model: WeaklyCoupledModel, penalty, x, a) -> float:
    """E[H(x') | x, a] under the true (not scenario) transition law."""
    if isinstance(penalty, SeparablePenalty):
        total = penalty.theta
        for n, sub in enumerate(model.subproblems):
            total += float(sub.transition[x[n], a[n]] @ penalty.tables[n])
        return total
    vals = np.asarray(penalty.values, dtype=np.float64).reshape(model.state_sizes)
    for n, sub in enumerate(model.subproblems):
        row = sub.transition[x[n], a[n]]
        vals = np.tensordot(row, vals, axes=(0, 0))
    return float(vals)


def replay_actions(model: WeaklyCoupledModel, penalty, scenario: Scenario,
                   x0, actions, n_periods: int | None = None) -> float:
    """Integrand sum of a fixed action path along the scenario.

    Pure-python forward pass, independent of the DP kernels; used to
    cross-check maximizers and to price greedy-policy paths. actions[t]
    is the joint action at period t.
    """
    beta = model.discount
    horizon = scenario.tau + 1 if n_periods is None else n_periods
    if horizon > scenario.tau + 1:
        raise ConfigError("n_periods exceeds the scenario horizon")
    x = [int(v) for v in x0]
    total = 0.0
    for t in range(horizon):
        a = [int(v) for v in actions[t]]
        r = 0.0
        for n, sub in enumerate(model.subproblems):
            if a[n] not in sub.action_sets[x[n]]:
                raise ConfigError(f"action {a} not admissible at state {tuple(x)}")
            r += float(sub.reward[x[n], a[n]])
        total += (r + beta * _expected_penalty_value(model, penalty, x, a)
                  - joint_value(model, penalty, x))
        if t + 1 < horizon:
            for n, sub in enumerate(model.subproblems):
                cdf = np.cumsum(sub.transition[x[n], a[n]])
                idx = int(np.searchsorted(cdf, scenario.uniforms[n, t], side="right"))
                x[n] = min(idx, sub.n_states - 1)
    return total


# ---------------------------------------------------------------------------
# Monte Carlo estimator


def estimate_info_bound(model: WeaklyCoupledModel, penalty, x0,
                        n_scenarios: int, seed: int,
                        tau_cap: int | None = None,
                        max_pairs: int = 2 * 10**5) -> BoundEstimate:
    """Average scenario value H(x0) + inner maximum over n_scenarios.

    Scenario i uses the stable seed scenario_seed(seed, i). Capping the
    horizon biases the estimate by at most beta^(cap+1) * 2 sup|H| / (1-beta),
    reported as bias_bound.
    """
    if n_scenarios < 1:
        raise ConfigError("n_scenarios must be positive")
    if tau_cap is None:
        tau_cap = default_tau_cap(model.discount)
    evaluator = JointInnerEvaluator(model, penalty, max_pairs=max_pairs)
    h0 = joint_value(model, penalty, x0)
    vals = np.empty(n_scenarios)
    for i in range(n_scenarios):
        sc = draw_scenario(model, scenario_seed(seed, i), tau_cap)
        vals[i] = h0 + evaluator.inner(sc, x0).value
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_scenarios)) if n_scenarios > 1 else 0.0
    bias = (model.discount ** (tau_cap + 1) * 2.0 * penalty.sup_abs()
            / (1.0 - model.discount))
    return BoundEstimate(value=mean, se=se, n_samples=n_scenarios, seed=seed,
                         bias_bound=bias, samples=vals)


# ---------------------------------------------------------------------------
# structural checks


@dataclass
class SupersolutionReport:
    epsilon: float                 # min over pairs of H - (R + beta E[H])
    is_supersolution: bool
    worst_state: tuple[int, ...]
    worst_action: tuple[int, ...]
    n_pairs: int


def supersolution_check(model: WeaklyCoupledModel, penalty,
                        max_pairs: int = 2 * 10**5,
                        tol: float = 1e-9) -> SupersolutionReport:
    """Slack of the one-step dominance inequalities over all joint pairs.

    epsilon > 0 certifies H as a strict supersolution: every scenario's
    inner maximum is then at most -epsilon per period, which pulls the
    estimator at least epsilon / (1 - beta) below H(x0).
    """
    space = build_joint_space(model, max_pairs=max_pairs)
    g = pair_integrand(model, penalty, space)
    worst = int(np.argmax(g))
    k = int(space.pair_state[worst])
    return SupersolutionReport(
        epsilon=float(-g[worst]),
        is_supersolution=bool(g[worst] <= tol),
        worst_state=tuple(int(v) for v in space.comp_states[k]),
        worst_action=tuple(int(v) for v in space.pair_actions[worst]),
        n_pairs=space.n_pairs,
    )


@dataclass
class GreedyConsistencyReport:
    passed: bool
    argmax_ok: bool
    max_gap: float                 # worst inner-optimum minus greedy replay
    n_scenarios: int
    horizons: tuple[int, ...]
    failures: list[dict]


def greedy_consistency_certificate(model: WeaklyCoupledModel, penalty, x0,
                                   horizons, n_scenarios: int, seed: int,
                                   tol: float = 1e-8,
                                   max_pairs: int = 2 * 10**5) -> GreedyConsistencyReport:
    """Check that the penalty's greedy policy attains the inner optimum.

    Two parts: (i) at every joint state the greedy action (ties to the
    lowest) must attain the maximal one-step integrand, and (ii) on
    sampled scenarios, replaying the greedy policy must match the exact
    truncated inner optimum for each horizon in `horizons`. Passing both
    is evidence the penalty behaves like an optimal value function; any
    gap localizes where it does not.
    """
    horizons = tuple(int(t) for t in horizons)
    if not horizons or min(horizons) < 0:
        raise ConfigError("horizons must be nonnegative")
    evaluator = JointInnerEvaluator(model, penalty, max_pairs=max_pairs)
    space, g = evaluator.space, evaluator.integrand

    failures = []
    # (i) one-step argmax membership at every state
    q_all = space.pair_reward + model.discount * pair_expected_values(
        model, penalty, space)
    policy_pair = np.empty(space.n_states, dtype=np.int64)
    argmax_ok = True
    for k in range(space.n_states):
        lo, hi = int(space.offsets[k]), int(space.offsets[k + 1])
        pick = lo + int(np.argmax(q_all[lo:hi]))
        policy_pair[k] = pick
        if g[pick] < float(g[lo:hi].max()) - tol * (1.0 + abs(float(g[lo:hi].max()))):
            argmax_ok = False
            failures.append({
                "state": tuple(int(v) for v in space.comp_states[k]),
                "kind": "argmax",
                "detail": (f"greedy integrand {g[pick]:.6g} below maximum "
                           f"{float(g[lo:hi].max()):.6g}"),
            })

    # (ii) truncated inner optimum vs greedy replay, scenario by scenario
    k0 = state_index(model, x0)
    h_max = max(horizons)
    max_gap = 0.0
    for i in range(n_scenarios):
        sseed = scenario_seed(seed, i)
        sc = Scenario(tau=h_max,
                      uniforms=project_uniforms(sseed, model.n_subproblems, h_max),
                      seed=sseed)
        nxt = scenario_next_states(space, sc.uniforms, h_max)
        for T in horizons:
            opt, _ = joint_inner_backward(g, space.offsets, nxt[:T], k0, T + 1)
            k = k0
            replay = 0.0
            for t in range(T + 1):
                p = policy_pair[k]
                replay += g[p]
                if t < T:
                    k = int(nxt[t, p])
            gap = float(opt) - replay
            if gap > max_gap:
                max_gap = gap
            if gap > tol * (1.0 + abs(float(opt))):
                failures.append({
                    "scenario": i, "horizon": T, "kind": "replay",
                    "detail": f"inner optimum {float(opt):.9g} vs greedy {replay:.9g}",
                })
    passed = argmax_ok and all(f["kind"] != "replay" for f in failures)
    return GreedyConsistencyReport(passed=passed, argmax_ok=argmax_ok,
                                   max_gap=max_gap, n_scenarios=n_scenarios,
                                   horizons=horizons, failures=failures)
