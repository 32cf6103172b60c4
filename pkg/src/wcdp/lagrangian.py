"""Lagrangian decomposition and approximate-LP upper bounds.

Relaxing the linking constraints with a price vector lam >= 0 splits the
joint problem into per-subproblem dynamic programs with rewards
R^n - lam'B^n over the full per-state action sets. The resulting bound

    J(lam; x) = lam'b / (1 - beta) + sum_n H^n(x^n)

dominates the optimal value at every joint state. The price is chosen
either by an exact linear program over (lam, H) or by projected
subgradient steps on lam alone. The approximate-LP bound keeps the same
separable form but prices the joint admissibility constraints directly,
which can only tighten the weighted objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .lp import LinearProgram, solve_lp
from .model import (InitialDistribution, WeaklyCoupledModel,
                    build_joint_space, state_index)
from .penalty import SeparablePenalty, pair_expected_values

_MAX_POLICY_SWEEPS = 1000


@dataclass
class SubgradientConfig:
    """Step schedule for projected subgradient searches.

    harmonic: s0 / (1 + k / kappa). geometric: s0 * rho^k (useful when the
    target is a sharp polyhedral minimum and high accuracy is needed).
    stop_tol halts early once the subgradient's max-norm falls below it;
    0 keeps iterating to max_iters.
    """

    max_iters: int = 5000
    s0: float = 1.0
    kappa: float = 50.0
    schedule: str = "harmonic"
    rho: float = 0.9995
    stop_tol: float = 0.0

    def steps(self) -> np.ndarray:
        k = np.arange(self.max_iters, dtype=np.float64)
        if self.schedule == "harmonic":
            return self.s0 / (1.0 + k / self.kappa)
        if self.schedule == "geometric":
            return self.s0 * self.rho ** k
        raise ConfigError(f"unknown step schedule: {self.schedule!r}")


# ---------------------------------------------------------------------------
# per-subproblem dynamic programs


def solve_subproblem(sub, discount: float, rewards: np.ndarray | None = None):
    """Optimal values and policy of one component MDP by policy iteration.

    rewards overrides sub.reward (same shape) so callers can price the
    weights in. Each sweep evaluates the current policy exactly with a
    dense linear solve, so the returned values satisfy the Bellman
    equation to machine precision. A state switches action only when the
    improvement clears a small tolerance; otherwise the incumbent stays,
    so exact ties (routine at the optimal price) cannot make the sweep
    oscillate between equally good policies. The incumbent starts at the
    lowest action index.
    """
    r = sub.reward if rewards is None else np.asarray(rewards, dtype=np.float64)
    S = sub.n_states
    policy = np.array([acts[0] for acts in sub.action_sets], dtype=np.int64)
    eye = np.eye(S)
    values = np.zeros(S)
    for _ in range(_MAX_POLICY_SWEEPS):
        pmat = sub.transition[np.arange(S), policy]
        rvec = r[np.arange(S), policy]
        values = np.linalg.solve(eye - discount * pmat, rvec)
        ev = sub.transition @ values  # (S, A)
        new_policy = policy.copy()
        for x, acts in enumerate(sub.action_sets):
            qs = [r[x, a] + discount * ev[x, a] for a in acts]
            j = int(np.argmax(qs))
            cur = r[x, policy[x]] + discount * ev[x, policy[x]]
            if qs[j] > cur + 1e-10 * (1.0 + abs(cur)):
                new_policy[x] = acts[j]
        if np.array_equal(new_policy, policy):
            break
        policy = new_policy
    else:
        raise NumericalError("policy iteration failed to stabilize")
    return values, policy


def priced_rewards(sub, lam: np.ndarray) -> np.ndarray:
    return sub.reward - sub.weight @ lam


# ---------------------------------------------------------------------------
# Lagrangian bound at a fixed price


@dataclass
class LagrangianBound:
    """Separable upper bound theta + sum_n tables[n][x^n] with its price."""

    lam: np.ndarray
    theta: float
    tables: list[np.ndarray]
    policies: list[np.ndarray] = field(repr=False)

    def value(self, x) -> float:
        return self.theta + sum(float(self.tables[n][x[n]])
                                for n in range(len(self.tables)))

    def state_values(self, model: WeaklyCoupledModel) -> np.ndarray:
        """Bound at every joint state, flat in mixed-radix order."""
        out = np.full(1, self.theta)
        for t in self.tables:
            out = (out[:, None] + t[None, :]).reshape(-1)
        return out

    def penalty(self) -> SeparablePenalty:
        return SeparablePenalty(theta=self.theta,
                                tables=[t.copy() for t in self.tables],
                                mu_init=self.lam.copy(), label="lagrangian")


def lagrangian_bound(model: WeaklyCoupledModel, lam) -> LagrangianBound:
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if lam.shape != (model.n_links,):
        raise ConfigError("lam must have one entry per linking constraint")
    if np.any(lam < 0):
        raise ConfigError("lam must be nonnegative")
    theta = float(lam @ model.budget) / (1.0 - model.discount)
    tables, policies = [], []
    for sub in model.subproblems:
        v, pol = solve_subproblem(sub, model.discount, priced_rewards(sub, lam))
        tables.append(v)
        policies.append(pol)
    return LagrangianBound(lam=lam, theta=theta, tables=tables, policies=policies)


def _weighted_value(model: WeaklyCoupledModel, dist: InitialDistribution,
                    bound: LagrangianBound) -> float:
    total = bound.theta
    for n in range(model.n_subproblems):
        total += float(dist.marginal(model, n) @ bound.tables[n])
    return total


# ---------------------------------------------------------------------------
# price optimization: exact LP


def optimal_lambda_lp(model: WeaklyCoupledModel, dist: InitialDistribution):
    """Best price for the weighted Lagrangian bound, by linear programming.

    Variables are (lam, all per-subproblem tables); each admissible
    (n, x, a) contributes one >= row. The recovered price is re-solved
    through the per-subproblem DPs and the two objective values must
    agree to 1e-6, otherwise NumericalError. Returns (bound, lp_solution).
    """
    dist.validate(model)
    beta = model.discount
    L = model.n_links
    sizes = model.state_sizes
    h_offset = np.concatenate(([0], np.cumsum(sizes))) + L
    n_cols = L + int(sum(sizes))

    c = np.zeros(n_cols)
    c[:L] = model.budget / (1.0 - beta)
    for n in range(model.n_subproblems):
        c[h_offset[n]:h_offset[n + 1]] = dist.marginal(model, n)

    rows, rhs = [], []
    for n, sub in enumerate(model.subproblems):
        for x, a in sub.admissible_pairs():
            row = np.zeros(n_cols)
            row[:L] = sub.weight[x, a]
            row[h_offset[n] + x] += 1.0
            row[h_offset[n]:h_offset[n + 1]] -= beta * sub.transition[x, a]
            rows.append(row)
            rhs.append(float(sub.reward[x, a]))

    lower = np.full(n_cols, -np.inf)
    lower[:L] = 0.0
    lp = LinearProgram(c=c, a=np.asarray(rows), senses=[">="] * len(rows),
                       rhs=np.asarray(rhs), lower=lower)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise NumericalError(f"price LP did not solve: {sol.status}")

    lam = np.maximum(sol.z[:L], 0.0)
    bound = lagrangian_bound(model, lam)
    resolved = _weighted_value(model, dist, bound)
    gap = abs(resolved - sol.objective)
    if gap > 1e-6 * (1.0 + abs(sol.objective)):
        raise NumericalError(
            f"price LP cross-check failed: LP objective {sol.objective:.12g} "
            f"vs re-solved bound {resolved:.12g}"
        )
    return bound, sol


# ---------------------------------------------------------------------------
# price optimization: projected subgradient


def _expected_discounted_usage(sub, discount: float, values_policy) -> np.ndarray:
    """Discounted weight consumption per start state under a fixed policy."""
    policy = values_policy
    S = sub.n_states
    pmat = sub.transition[np.arange(S), policy]
    bmat = sub.weight[np.arange(S), policy]  # (S, L)
    return np.linalg.solve(np.eye(S) - discount * pmat, bmat)


def optimal_lambda_subgradient(model: WeaklyCoupledModel,
                               dist: InitialDistribution,
                               config: SubgradientConfig | None = None,
                               lam0=None):
    """Minimize the weighted Lagrangian bound over lam >= 0.

    The objective is piecewise linear in lam; a subgradient at lam is
    b/(1-beta) minus the weighted expected discounted consumption under
    the lam-optimal policies (computed by exact linear solves, ties to
    the lowest action). Keeps the best iterate. Returns (bound, trace).
    """
    dist.validate(model)
    if config is None:
        config = SubgradientConfig()
    L = model.n_links
    lam = (np.zeros(L) if lam0 is None
           else np.atleast_1d(np.asarray(lam0, dtype=np.float64)).copy())
    if lam.shape != (L,):
        raise ConfigError("lam0 must have one entry per linking constraint")
    steps = config.steps()
    beta = model.discount

    best_val = np.inf
    best_lam = lam.copy()
    trace = []
    for k in range(config.max_iters):
        bound = lagrangian_bound(model, lam)
        val = _weighted_value(model, dist, bound)
        trace.append(val)
        if val < best_val:
            best_val = val
            best_lam = lam.copy()
        g = model.budget / (1.0 - beta)
        for n, sub in enumerate(model.subproblems):
            usage = _expected_discounted_usage(sub, beta, bound.policies[n])
            g = g - dist.marginal(model, n) @ usage
        if np.max(np.abs(g)) <= config.stop_tol:
            break
        lam = np.maximum(0.0, lam - steps[k] * g)
    return lagrangian_bound(model, best_lam), np.asarray(trace)


# ---------------------------------------------------------------------------
# approximate linear program over the joint admissible pairs


@dataclass
class AlpBound:
    """Separable bound from the joint-pair LP; weakly tighter in the
    weighted objective than any Lagrangian price."""

    theta: float
    tables: list[np.ndarray]
    objective: float

    def value(self, x) -> float:
        return self.theta + sum(float(self.tables[n][x[n]])
                                for n in range(len(self.tables)))

    def penalty(self) -> SeparablePenalty:
        return SeparablePenalty(theta=self.theta,
                                tables=[t.copy() for t in self.tables],
                                mu_init=None, label="alp")


def alp_bound(model: WeaklyCoupledModel, dist: InitialDistribution,
              max_pairs: int = 2 * 10**5) -> AlpBound:
    """Solve the separable-approximation LP over all admissible joint pairs.

    min theta + sum_n v_n'H^n subject to, for every joint state x and
    admissible a: theta (1 - beta) + sum_n [H^n(x^n) - beta P_n H^n] >= R(x, a).
    All variables are free; the enumeration guard bounds the row count.
    """
    dist.validate(model)
    beta = model.discount
    space = build_joint_space(model, max_pairs=max_pairs)
    sizes = model.state_sizes
    h_offset = np.concatenate(([0], np.cumsum(sizes))) + 1
    n_cols = 1 + int(sum(sizes))

    c = np.zeros(n_cols)
    c[0] = 1.0
    for n in range(model.n_subproblems):
        c[h_offset[n]:h_offset[n + 1]] = dist.marginal(model, n)

    P = space.n_pairs
    a_mat = np.zeros((P, n_cols))
    a_mat[:, 0] = 1.0 - beta
    for n, sub in enumerate(model.subproblems):
        xs = space.comp_states[space.pair_state, n]
        acts = space.pair_actions[:, n]
        block = np.zeros((P, sizes[n]))
        block[np.arange(P), xs] = 1.0
        block -= beta * sub.transition[xs, acts]
        a_mat[:, h_offset[n]:h_offset[n + 1]] += block

    lp = LinearProgram(c=c, a=a_mat, senses=[">="] * P,
                       rhs=space.pair_reward.copy(),
                       lower=np.full(n_cols, -np.inf))
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise NumericalError(f"approximate LP did not solve: {sol.status}")
    tables = [sol.z[h_offset[n]:h_offset[n + 1]].copy()
              for n in range(model.n_subproblems)]
    return AlpBound(theta=float(sol.z[0]), tables=tables,
                    objective=float(sol.objective))


# ---------------------------------------------------------------------------
# greedy policy and tightness certificate


@dataclass
class GreedyPolicy:
    """One-step lookahead on a separable penalty, tabulated over the joint
    space. Callable on joint state tuples; ties go to the lowest action."""

    model: WeaklyCoupledModel
    table: np.ndarray  # (K, N) int32

    def __call__(self, x) -> tuple[int, ...]:
        return tuple(int(a) for a in self.table[state_index(self.model, x)])


def greedy_policy(model: WeaklyCoupledModel, penalty,
                  max_pairs: int = 2 * 10**5) -> GreedyPolicy:
    space = build_joint_space(model, max_pairs=max_pairs)
    q = space.pair_reward + model.discount * pair_expected_values(model, penalty, space)
    K = space.n_states
    table = np.empty((K, model.n_subproblems), dtype=np.int32)
    for k in range(K):
        lo, hi = space.offsets[k], space.offsets[k + 1]
        best = lo + int(np.argmax(q[lo:hi]))
        table[k] = space.pair_actions[best]
    return GreedyPolicy(model=model, table=table)


@dataclass
class TightnessCertificate:
    passed: bool
    checked_states: list[tuple[int, ...]]
    failures: list[dict]


def lagrangian_tightness_certificate(model: WeaklyCoupledModel,
                                     bound: LagrangianBound, x0,
                                     tol: float = 1e-8) -> TightnessCertificate:
    """Check whether the Lagrangian bound is provably tight from x0.

    Follows the greedy policy induced by the bound's tables and, on every
    joint state reachable under it, requires (i) zero priced slack,
    lam'(b - sum_n B^n) = 0, and (ii) each chosen component action to
    attain the per-subproblem priced maximum. Both together certify that
    the bound equals the optimal value on the reachable set; any failure
    is reported with its state and kind.
    """
    pol = greedy_policy(model, bound.penalty())
    lam, beta = bound.lam, model.discount
    ev_tables = [sub.transition @ bound.tables[n]
                 for n, sub in enumerate(model.subproblems)]
    lam_b = float(lam @ model.budget)

    seen = set()
    frontier = [tuple(int(v) for v in x0)]
    failures = []
    checked = []
    while frontier:
        x = frontier.pop()
        if x in seen:
            continue
        seen.add(x)
        checked.append(x)
        a = pol(x)
        used = np.zeros(model.n_links)
        for n, sub in enumerate(model.subproblems):
            used += sub.weight[x[n], a[n]]
        slack = float(lam @ (model.budget - used))
        if abs(slack) > tol * (1.0 + abs(lam_b)):
            failures.append({"state": x, "kind": "slackness",
                             "detail": f"priced slack {slack:.6g} nonzero"})
        for n, sub in enumerate(model.subproblems):
            acts = sub.action_sets[x[n]]
            qs = np.array([sub.reward[x[n], av] - float(lam @ sub.weight[x[n], av])
                           + beta * ev_tables[n][x[n], av] for av in acts])
            best = float(qs.max())
            mine = float(qs[acts.index(a[n])])
            if mine < best - tol * (1.0 + abs(best)):
                failures.append({
                    "state": x, "kind": "argmax",
                    "detail": (f"component {n} plays {a[n]} worth {mine:.6g}, "
                               f"priced maximum is {best:.6g}"),
                })
        # expand along the support of the greedy transition
        supports = [np.flatnonzero(model.subproblems[n].transition[x[n], a[n]] > 1e-12)
                    for n in range(model.n_subproblems)]
        grid = [tuple()]
        for sup in supports:
            grid = [g + (int(s),) for g in grid for s in sup]
        for nxt in grid:
            if nxt not in seen:
                frontier.append(nxt)
        if len(seen) > 10**5:
            raise NumericalError("reachable set too large for the certificate")
    checked.sort()
    return TightnessCertificate(passed=not failures,
                                checked_states=checked, failures=failures)
