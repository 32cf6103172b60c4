"""Relaxed-inner upper bounds that avoid the joint-space scenario DP.

The exact scenario inner problem couples subproblems through joint
admissibility. Pricing the per-period linking constraints with
multipliers mu_t >= 0 decouples it: each subproblem solves its own
scenario DP with priced integrand g - mu_t'w, and

    value(mu) = sum_n W_n(mu) + sum_t mu_t'b - (tau+1)(1-beta) theta

dominates the exact inner maximum for every mu. Minimizing over mu by
projected subgradient (or exactly, via a trajectory LP on small
scenarios) recovers the practical bound; adding H(x0) and averaging over
scenarios estimates an upper bound on the optimal value.

For a Lagrangian penalty with price lam, the constant path mu_t = lam
makes every per-subproblem priced integrand max out at zero, so the
scenario value is exactly zero there; warm-starting at that path is both
the natural initial iterate and the reason truncated bounds chain
monotonically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import relaxed_eval, relaxed_minimize_kernel
from .errors import ConfigError, GuardError, NumericalError
from .inforelax import default_tau_cap, draw_scenario
from .lagrangian import SubgradientConfig
from .lp import LinearProgram, solve_lp
from .model import (BoundEstimate, Scenario, WeaklyCoupledModel,
                    scenario_seed)
from .penalty import SubproblemPairs, build_subproblem_pairs, joint_value


@dataclass
class RelaxedResult:
    """One evaluation of the priced decoupled inner problem."""

    value: float                   # includes the multiplier and theta terms
    subgradient: np.ndarray        # (tau+1, L), rows b - consumed weights
    actions: np.ndarray            # (tau+1, N) maximizing per-subproblem actions
    mu: np.ndarray = field(repr=False)  # (tau+1, L) multipliers evaluated


class RelaxedEvaluator:
    """Caches the per-subproblem pair enumeration for one penalty and
    prices scenarios through the compiled decoupled DPs."""

    def __init__(self, model: WeaklyCoupledModel, penalty):
        self.model = model
        self.penalty = penalty
        self.pairs: SubproblemPairs = build_subproblem_pairs(model, penalty)
        if self.pairs.pair_w.shape[1] != model.n_links:
            raise ConfigError("pair weights inconsistent with the model")

    def _prepare(self, scenario: Scenario, x0, horizon: int | None):
        tau = scenario.tau if horizon is None else int(horizon)
        if horizon is not None and not (0 <= horizon <= scenario.tau):
            raise ConfigError("horizon must lie in [0, scenario.tau]")
        next_row = self.pairs.next_rows(scenario.uniforms, tau)
        x0_locals = np.asarray(x0, dtype=np.int64)
        if x0_locals.shape != (self.model.n_subproblems,):
            raise ConfigError("x0 must list one state per subproblem")
        beta = self.model.discount
        const = -(tau + 1) * (1.0 - beta) * self.pairs.theta
        return tau, next_row, x0_locals, const

    def mu0(self, n_periods: int) -> np.ndarray:
        """Initial multiplier path: the penalty's hint on every period,
        or zeros when it has none."""
        L = self.model.n_links
        hint = getattr(self.penalty, "mu_init", None)
        if hint is None:
            return np.zeros((n_periods, L))
        return np.tile(np.asarray(hint, dtype=np.float64), (n_periods, 1))

    def evaluate(self, scenario: Scenario, x0, mu,
                 horizon: int | None = None) -> RelaxedResult:
        tau, next_row, x0_locals, const = self._prepare(scenario, x0, horizon)
        mu = np.ascontiguousarray(mu, dtype=np.float64)
        if mu.shape != (tau + 1, self.model.n_links):
            raise ConfigError("mu must have shape (horizon+1, n_links)")
        if np.any(mu < 0):
            raise ConfigError("mu must be nonnegative")
        val, sg, chosen = relaxed_eval(
            self.pairs.pair_g, self.pairs.pair_w, self.pairs.row_offsets,
            next_row, mu, self.pairs.first_row, x0_locals,
            self.model.budget, const)
        actions = self.pairs.pair_action[chosen].astype(np.int64)
        return RelaxedResult(value=float(val), subgradient=sg,
                             actions=actions, mu=mu)

    def minimize(self, scenario: Scenario, x0,
                 mu0: np.ndarray | None = None,
                 config: SubgradientConfig | None = None,
                 horizon: int | None = None):
        """Projected subgradient minimization over mu >= 0.

        Returns (best value, best mu, trace of iterate values). The best
        iterate is kept, so the result never exceeds the value at mu0.
        """
        if config is None:
            config = SubgradientConfig()
        tau, next_row, x0_locals, const = self._prepare(scenario, x0, horizon)
        if mu0 is None:
            mu0 = self.mu0(tau + 1)
        mu0 = np.ascontiguousarray(mu0, dtype=np.float64)
        if mu0.shape != (tau + 1, self.model.n_links):
            raise ConfigError("mu0 must have shape (horizon+1, n_links)")
        if np.any(mu0 < 0):
            raise ConfigError("mu0 must be nonnegative")
        best, best_mu, trace = relaxed_minimize_kernel(
            self.pairs.pair_g, self.pairs.pair_w, self.pairs.row_offsets,
            next_row, self.pairs.first_row, x0_locals,
            self.model.budget, const, mu0, config.steps(), config.stop_tol)
        return float(best), best_mu, trace


def relaxed_inner_eval(model: WeaklyCoupledModel, penalty, scenario: Scenario,
                       x0, mu) -> RelaxedResult:
    """One-shot priced evaluation (builds the enumeration each call)."""
    return RelaxedEvaluator(model, penalty).evaluate(scenario, x0, mu)


def minimize_mu(model: WeaklyCoupledModel, penalty, scenario: Scenario, x0,
                mu0: np.ndarray | None = None,
                config: SubgradientConfig | None = None):
    return RelaxedEvaluator(model, penalty).minimize(scenario, x0, mu0, config)


# ---------------------------------------------------------------------------
# Monte Carlo estimators


def _finalize(model, penalty, vals, seed, tau_cap) -> BoundEstimate:
    n = vals.shape[0]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    bias = (model.discount ** (tau_cap + 1) * 2.0 * penalty.sup_abs()
            / (1.0 - model.discount))
    return BoundEstimate(value=mean, se=se, n_samples=n, seed=seed,
                         bias_bound=bias, samples=vals)


def estimate_practical_bound(model: WeaklyCoupledModel, penalty, x0,
                             n_scenarios: int, seed: int,
                             config: SubgradientConfig | None = None,
                             tau_cap: int | None = None) -> BoundEstimate:
    """Average of H(x0) plus the mu-minimized decoupled inner value."""
    if n_scenarios < 1:
        raise ConfigError("n_scenarios must be positive")
    if tau_cap is None:
        tau_cap = default_tau_cap(model.discount)
    ev = RelaxedEvaluator(model, penalty)
    h0 = joint_value(model, penalty, x0)
    vals = np.empty(n_scenarios)
    for i in range(n_scenarios):
        sc = draw_scenario(model, scenario_seed(seed, i), tau_cap)
        best, _, _ = ev.minimize(sc, x0, config=config)
        vals[i] = h0 + best
    return _finalize(model, penalty, vals, seed, tau_cap)


def truncation_chain(model: WeaklyCoupledModel, penalty, x0, horizons,
                     n_scenarios: int, seed: int,
                     config: SubgradientConfig | None = None,
                     tau_cap: int | None = None) -> list[BoundEstimate]:
    """Practical bounds truncated at each horizon in ascending order.

    Per scenario the inner sum stops at min(tau, T). Horizons are
    processed per scenario from shortest to longest, warm-starting each
    minimization with the previous best multiplier path extended by the
    penalty's hint rows; with a Lagrangian penalty the appended periods
    contribute exactly zero at the hint, so the per-scenario values (and
    hence the estimates) are nonincreasing in T up to solver roundoff.
    """
    horizons = [int(t) for t in horizons]
    if not horizons or any(t < 0 for t in horizons):
        raise ConfigError("horizons must be nonnegative")
    if horizons != sorted(horizons):
        raise ConfigError("horizons must be ascending")
    if n_scenarios < 1:
        raise ConfigError("n_scenarios must be positive")
    if tau_cap is None:
        tau_cap = default_tau_cap(model.discount)
    ev = RelaxedEvaluator(model, penalty)
    h0 = joint_value(model, penalty, x0)
    L = model.n_links
    hint = getattr(penalty, "mu_init", None)
    hint = (np.zeros(L) if hint is None
            else np.asarray(hint, dtype=np.float64))

    vals = np.empty((n_scenarios, len(horizons)))
    for i in range(n_scenarios):
        sc = draw_scenario(model, scenario_seed(seed, i), tau_cap)
        prev_h = -1
        prev_mu = np.zeros((0, L))
        prev_val = 0.0
        for j, T in enumerate(horizons):
            h = min(sc.tau, T)
            if h == prev_h:
                vals[i, j] = prev_val
                continue
            ext = np.tile(hint, (h - prev_h, 1))
            mu0 = np.vstack([prev_mu, ext]) if prev_mu.size else ext
            best, best_mu, _ = ev.minimize(sc, x0, mu0=mu0, config=config,
                                           horizon=h)
            prev_h, prev_mu, prev_val = h, best_mu, h0 + best
            vals[i, j] = prev_val
    return [_finalize(model, penalty, vals[:, j], seed, tau_cap)
            for j in range(len(horizons))]


def estimate_truncated_bound(model: WeaklyCoupledModel, penalty, x0,
                             horizon: int, n_scenarios: int, seed: int,
                             config: SubgradientConfig | None = None,
                             tau_cap: int | None = None) -> BoundEstimate:
    """Practical bound with the inner sum stopped at min(tau, horizon)."""
    return truncation_chain(model, penalty, x0, [horizon], n_scenarios, seed,
                            config=config, tau_cap=tau_cap)[0]


# ---------------------------------------------------------------------------
# exact oracle on small scenarios: trajectory LP


@dataclass
class InnerLpResult:
    value: float                      # min over mu of the decoupled value
    mu: np.ndarray                    # (tau+1, L) optimal multiplier path
    path_weights: list                # per subproblem: (paths, weight) duals
    n_paths: int
    primal_objective: float = 0.0     # raw LP objective (before theta shift)
    dual_objective: float = 0.0       # matching dual value


def inner_lp_oracle(model: WeaklyCoupledModel, penalty, scenario: Scenario,
                    x0, max_paths: int = 10**5) -> InnerLpResult:
    """Exact min_mu of the decoupled scenario value, by linear programming.

    Enumerates every per-subproblem trajectory along the scenario's
    deterministic transitions (guarded by max_paths) and solves

        min sum_n y_n + sum_t mu_t'b  s.t.  y_n >= g(w) - mu'W(w)  for
        every trajectory w of subproblem n,  mu >= 0.

    The row duals form, per subproblem, a probability distribution over
    trajectories whose expected per-period weights respect the budget:
    the primal face of the same relaxation. Mainly a test oracle; cost is
    exponential in the horizon.
    """
    pairs = build_subproblem_pairs(model, penalty)
    tau = scenario.tau
    L = model.n_links
    next_row = pairs.next_rows(scenario.uniforms, tau)
    x0_locals = np.asarray(x0, dtype=np.int64)
    N = model.n_subproblems

    # count trajectories first so the guard fires before any blow-up
    R = pairs.row_offsets.shape[0] - 1
    counts = np.ones(R, dtype=np.int64)
    for t in range(tau, -1, -1):
        nxt_counts = np.zeros(R, dtype=np.int64)
        for r in range(R):
            total = 0
            for p in range(pairs.row_offsets[r], pairs.row_offsets[r + 1]):
                total += counts[next_row[t, p]] if t < tau else 1
            nxt_counts[r] = total
        counts = nxt_counts
    start_rows = [int(pairs.first_row[n] + x0_locals[n]) for n in range(N)]
    n_paths = int(sum(counts[r] for r in start_rows))
    if n_paths > max_paths:
        raise GuardError(f"trajectory enumeration needs {n_paths} paths")

    def walk(n):
        out = []

        def rec(t, r, acc):
            for p in range(pairs.row_offsets[r], pairs.row_offsets[r + 1]):
                acc.append(p)
                if t == tau:
                    out.append(list(acc))
                else:
                    rec(t + 1, int(next_row[t, p]), acc)
                acc.pop()

        rec(0, start_rows[n], [])
        return out

    # columns: y_1..y_N then mu flattened period-major
    n_cols = N + (tau + 1) * L
    c = np.zeros(n_cols)
    c[:N] = 1.0
    for t in range(tau + 1):
        c[N + t * L:N + (t + 1) * L] = model.budget
    rows, rhs = [], []
    paths_per_sub = []
    for n in range(N):
        paths = walk(n)
        paths_per_sub.append(paths)
        for path in paths:
            row = np.zeros(n_cols)
            row[n] = 1.0
            g_sum = 0.0
            for t, p in enumerate(path):
                row[N + t * L:N + (t + 1) * L] = pairs.pair_w[p]
                g_sum += pairs.pair_g[p]
            rows.append(row)
            rhs.append(g_sum)

    lower = np.zeros(n_cols)
    lower[:N] = -np.inf
    lp = LinearProgram(c=c, a=np.asarray(rows), senses=[">="] * len(rows),
                       rhs=np.asarray(rhs), lower=lower)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise NumericalError(f"trajectory LP did not solve: {sol.status}")

    const = -(tau + 1) * (1.0 - model.discount) * pairs.theta
    mu = np.maximum(sol.z[N:].reshape(tau + 1, L), 0.0)
    weights, k = [], 0
    for n in range(N):
        m = len(paths_per_sub[n])
        weights.append((paths_per_sub[n], sol.row_duals[k:k + m].copy()))
        k += m
    return InnerLpResult(value=float(sol.objective) + const, mu=mu,
                         path_weights=weights, n_paths=n_paths,
                         primal_objective=float(sol.objective),
                         dual_objective=float(sol.dual_objective))


# ---------------------------------------------------------------------------
# worst-case gap certificates


@dataclass
class GapCertificate:
    gamma: np.ndarray              # per-subproblem integrand spread
    gamma_max: float
    factor: float                  # ((L-1) beta + L + 1) / (1 - beta)^2
    gap_bound: float               # factor * gamma_max


def gap_certificate(model: WeaklyCoupledModel, penalty) -> GapCertificate:
    """Worst-case excess of the decoupled bound over the exact inner bound.

    gamma_n spreads the per-subproblem integrand R + beta E[h] - h over
    that subproblem's admissible pairs; the certified gap is
    ((L-1) beta + L + 1) / (1-beta)^2 times the largest spread.
    """
    pairs = build_subproblem_pairs(model, penalty)
    gamma = np.empty(model.n_subproblems)
    for n in range(model.n_subproblems):
        sl = pairs.pair_slices[n]
        g = pairs.pair_g[sl]
        gamma[n] = float(g.max() - g.min())
    beta, L = model.discount, model.n_links
    factor = ((L - 1) * beta + L + 1) / (1.0 - beta) ** 2
    gmax = float(gamma.max())
    return GapCertificate(gamma=gamma, gamma_max=gmax, factor=factor,
                          gap_bound=factor * gmax)


@dataclass
class UniformGammaReport:
    c: float                       # price-uniform reward scale
    cap: float                     # 4 c / (1 - beta)
    gamma_max: float
    within: bool


def uniform_gamma_check(model: WeaklyCoupledModel, bound) -> UniformGammaReport:
    """Scale-based cap on the integrand spreads of a Lagrangian penalty.

    c is the largest admissible |reward| or priced |reward|; every
    spread gamma_n of the price-optimal tables is guaranteed to stay
    within 4c / (1 - beta). Reported 'within' should always hold; a
    False value indicates a broken solve.
    """
    lam = bound.lam
    c = 0.0
    for sub in model.subproblems:
        for x, a in sub.admissible_pairs():
            r = float(sub.reward[x, a])
            priced = r - float(lam @ sub.weight[x, a])
            c = max(c, abs(r), abs(priced))
    cert = gap_certificate(model, bound.penalty())
    cap = 4.0 * c / (1.0 - model.discount)
    return UniformGammaReport(c=c, cap=cap, gamma_max=cert.gamma_max,
                              within=bool(cert.gamma_max <= cap + 1e-9))
