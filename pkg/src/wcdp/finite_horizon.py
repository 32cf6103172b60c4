"""Finite-horizon, undiscounted variant with time-varying data.

Periods run t = 0..T with terminal value zero after T. Transitions,
rewards, weights, and budgets may all depend on the period; per-state
action sets are fixed. Everything mirrors the stationary case: a price
path lam_t >= 0 buys a separable upper bound, scenarios fix the horizon
at T and draw one uniform per (subproblem, period), and the inner
problem is solved exactly over joint states or decoupled through
per-period multipliers. Sizes here are assumed tiny (short horizons),
so the dynamic programs are plain numpy.

Arrays are stored with length T+1 along the period axis; the transition
tensor's last slab is never used (there is no period T -> T+1 move) but
is kept so every per-period field has the same leading shape.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GuardError, NumericalError
from .lagrangian import SubgradientConfig
from .model import BoundEstimate, project_uniforms, scenario_seed

FH_SCHEMA = "wcdp-fh-v1"

_FH_STATE_GUARD = 10**5
_FH_PAIR_GUARD = 2 * 10**5


@dataclass
class FhSubproblem:
    """One component MDP with per-period tensors.

    transition[t, x, a, x'] moves period t -> t+1 (slab t = T unused);
    reward[t, x, a] and weight[t, x, a, :] apply within period t.
    """

    transition: np.ndarray  # (T+1, S, A, S)
    reward: np.ndarray      # (T+1, S, A)
    weight: np.ndarray      # (T+1, S, A, L)
    action_sets: list[tuple[int, ...]]

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.action_sets = [tuple(int(a) for a in acts) for acts in self.action_sets]

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[2]

    def admissible_pairs(self):
        for x, acts in enumerate(self.action_sets):
            for a in acts:
                yield x, a


@dataclass
class FhModel:
    horizon: int                 # last decision period T
    budget: np.ndarray           # (T+1, L)
    subproblems: list[FhSubproblem]

    def __post_init__(self):
        self.budget = np.asarray(self.budget, dtype=np.float64)
        if self.budget.ndim == 1:
            self.budget = self.budget[:, None]

    @property
    def n_subproblems(self) -> int:
        return len(self.subproblems)

    @property
    def n_links(self) -> int:
        return self.budget.shape[1]

    @property
    def state_sizes(self) -> tuple[int, ...]:
        return tuple(sub.n_states for sub in self.subproblems)

    @property
    def joint_state_count(self) -> int:
        out = 1
        for s in self.state_sizes:
            out *= s
        return out


def validate_fh_model(model: FhModel, tol: float = 1e-9):
    T = model.horizon
    if T < 0:
        raise ConfigError("horizon must be nonnegative")
    L = model.n_links
    if model.budget.shape != (T + 1, L):
        raise ConfigError("budget must have shape (horizon+1, n_links)")
    if model.n_subproblems == 0:
        raise ConfigError("at least one subproblem required")
    for n, sub in enumerate(model.subproblems):
        S, A = sub.n_states, sub.n_actions
        if sub.transition.shape != (T + 1, S, A, S):
            raise ConfigError(f"subproblem {n}: transition must be (T+1, S, A, S)")
        if sub.reward.shape != (T + 1, S, A):
            raise ConfigError(f"subproblem {n}: reward must be (T+1, S, A)")
        if sub.weight.shape != (T + 1, S, A, L):
            raise ConfigError(f"subproblem {n}: weight must be (T+1, S, A, {L})")
        if len(sub.action_sets) != S:
            raise ConfigError(f"subproblem {n}: one action set per state required")
        for x, acts in enumerate(sub.action_sets):
            if len(acts) == 0 or len(set(acts)) != len(acts):
                raise ConfigError(f"subproblem {n}: bad action set at state {x}")
            for a in acts:
                if not (0 <= a < A):
                    raise ConfigError(f"subproblem {n}: action {a} out of range")
                for t in range(T):  # slab T is unused
                    row = sub.transition[t, x, a]
                    if np.any(row < -1e-12) or abs(row.sum() - 1.0) > tol:
                        raise ConfigError(
                            f"subproblem {n}: bad transition row at (t={t},{x},{a})"
                        )
        if not np.all(np.isfinite(sub.reward)) or not np.all(np.isfinite(sub.weight)):
            raise ConfigError(f"subproblem {n}: rewards and weights must be finite")
    if model.joint_state_count > _FH_STATE_GUARD:
        raise GuardError("joint space too large for the finite-horizon solver")
    # every (period, joint state) needs an admissible action
    for t in range(T + 1):
        for x in itertools.product(*(range(s) for s in model.state_sizes)):
            if not _fh_feasible(model, t, x):
                raise ConfigError(f"no admissible joint action at t={t}, x={x}")


def _fh_feasible(model: FhModel, t: int, x) -> bool:
    subs = model.subproblems
    for a in itertools.product(*(subs[n].action_sets[x[n]]
                                 for n in range(model.n_subproblems))):
        w = sum(subs[n].weight[t, x[n], a[n]] for n in range(model.n_subproblems))
        if np.all(w <= model.budget[t] + 1e-9):
            return True
    return False


# ---------------------------------------------------------------------------
# JSON round trip


def fh_model_to_dict(model: FhModel) -> dict:
    return {
        "schema": FH_SCHEMA,
        "horizon": int(model.horizon),
        "budget": model.budget.tolist(),
        "subproblems": [
            {
                "transition": sub.transition.tolist(),
                "reward": sub.reward.tolist(),
                "weight": sub.weight.tolist(),
                "action_sets": [list(acts) for acts in sub.action_sets],
            }
            for sub in model.subproblems
        ],
    }


def fh_model_from_dict(d: dict) -> FhModel:
    if not isinstance(d, dict):
        raise ConfigError("model must be a JSON object")
    if d.get("schema") != FH_SCHEMA:
        raise ConfigError(f"unsupported model schema: {d.get('schema')!r}")
    unknown = set(d) - {"schema", "horizon", "budget", "subproblems"}
    if unknown:
        raise ConfigError(f"unknown model fields: {sorted(unknown)}")
    try:
        subs = [
            FhSubproblem(
                transition=np.asarray(s["transition"], dtype=np.float64),
                reward=np.asarray(s["reward"], dtype=np.float64),
                weight=np.asarray(s["weight"], dtype=np.float64),
                action_sets=[tuple(acts) for acts in s["action_sets"]],
            )
            for s in d["subproblems"]
        ]
        model = FhModel(horizon=int(d["horizon"]),
                        budget=np.asarray(d["budget"], dtype=np.float64),
                        subproblems=subs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed model: {exc}") from exc
    validate_fh_model(model)
    return model


def save_fh_model(model: FhModel, path: str):
    with open(path, "w") as fh:
        json.dump(fh_model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_fh_model(path: str) -> FhModel:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return fh_model_from_dict(d)


def fh_model_fingerprint(model: FhModel) -> str:
    text = json.dumps(fh_model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# joint enumeration per period


class _FhJointSpace:
    """Per-period CSR enumerations of joint states and admissible actions."""

    def __init__(self, model: FhModel):
        self.model = model
        sizes = model.state_sizes
        self.sizes = sizes
        self.states = list(itertools.product(*(range(s) for s in sizes)))
        self.radix = np.ones(len(sizes), dtype=np.int64)
        for n in range(len(sizes) - 2, -1, -1):
            self.radix[n] = self.radix[n + 1] * sizes[n + 1]
        N = model.n_subproblems
        T = model.horizon
        self.offsets, self.pair_state, self.pair_actions = [], [], []
        self.pair_reward, self.pair_weight = [], []
        for t in range(T + 1):
            offs = [0]
            pstate, pact = [], []
            for k, x in enumerate(self.states):
                found = 0
                for a in itertools.product(*(model.subproblems[n].action_sets[x[n]]
                                             for n in range(N))):
                    w = sum(model.subproblems[n].weight[t, x[n], a[n]]
                            for n in range(N))
                    if np.all(w <= model.budget[t] + 1e-9):
                        pstate.append(k)
                        pact.append(a)
                        found += 1
                if found == 0:
                    raise ConfigError(f"no admissible joint action at t={t}, x={x}")
                offs.append(offs[-1] + found)
                if offs[-1] > _FH_PAIR_GUARD:
                    raise GuardError("joint enumeration too large")
            pact = np.asarray(pact, dtype=np.int64)
            pstate = np.asarray(pstate, dtype=np.int64)
            r = np.zeros(len(pstate))
            w = np.zeros((len(pstate), model.n_links))
            for n, sub in enumerate(model.subproblems):
                xs = np.asarray([self.states[k][n] for k in pstate])
                r += sub.reward[t, xs, pact[:, n]]
                w += sub.weight[t, xs, pact[:, n]]
            self.offsets.append(np.asarray(offs, dtype=np.int64))
            self.pair_state.append(pstate)
            self.pair_actions.append(pact)
            self.pair_reward.append(r)
            self.pair_weight.append(w)

    def state_index(self, x) -> int:
        return int(sum(int(x[n]) * int(self.radix[n]) for n in range(len(x))))

    def expected_next(self, t: int, values_next: np.ndarray) -> np.ndarray:
        """E[v(x') | pair] for the period-t pairs; values_next is flat (K,)."""
        pstate, pact = self.pair_state[t], self.pair_actions[t]
        ev = np.zeros(len(pstate))
        table = values_next.reshape(self.sizes)
        for p in range(len(pstate)):
            x = self.states[pstate[p]]
            v = table
            for n, sub in enumerate(self.model.subproblems):
                v = np.tensordot(sub.transition[t, x[n], pact[p, n]], v, axes=(0, 0))
            ev[p] = float(v)
        return ev

    def scenario_next(self, t: int, uniforms: np.ndarray) -> np.ndarray:
        """Deterministic next joint index per period-t pair; uniforms is (N,)."""
        pstate, pact = self.pair_state[t], self.pair_actions[t]
        out = np.zeros(len(pstate), dtype=np.int64)
        for n, sub in enumerate(self.model.subproblems):
            xs = np.asarray([self.states[k][n] for k in pstate])
            cdf = np.cumsum(sub.transition[t, xs, pact[:, n]], axis=1)
            comp = (cdf <= uniforms[n]).sum(axis=1)
            np.clip(comp, 0, sub.n_states - 1, out=comp)
            out += comp * int(self.radix[n])
        return out


# ---------------------------------------------------------------------------
# exact value


@dataclass
class FhSolution:
    values: np.ndarray     # (T+2, K), last row zero
    policy: np.ndarray     # (T+1, K, N)

    def value(self, space_or_model, x) -> float:
        if isinstance(space_or_model, FhModel):
            radix = np.ones(len(space_or_model.state_sizes), dtype=np.int64)
            sizes = space_or_model.state_sizes
            for n in range(len(sizes) - 2, -1, -1):
                radix[n] = radix[n + 1] * sizes[n + 1]
            k = int(sum(int(x[n]) * int(radix[n]) for n in range(len(x))))
        else:
            k = space_or_model.state_index(x)
        return float(self.values[0, k])


def fh_value(model: FhModel) -> FhSolution:
    """Exact optimal values by backward induction over joint states."""
    validate_fh_model(model)
    space = _FhJointSpace(model)
    T = model.horizon
    K = len(space.states)
    N = model.n_subproblems
    values = np.zeros((T + 2, K))
    policy = np.zeros((T + 1, K, N), dtype=np.int64)
    for t in range(T, -1, -1):
        q = space.pair_reward[t].copy()
        if t < T:
            q += space.expected_next(t, values[t + 1])
        offs = space.offsets[t]
        for k in range(K):
            lo, hi = int(offs[k]), int(offs[k + 1])
            best = lo + int(np.argmax(q[lo:hi]))
            values[t, k] = q[best]
            policy[t, k] = space.pair_actions[t][best]
    return FhSolution(values=values, policy=policy)


# ---------------------------------------------------------------------------
# price path bounds


@dataclass
class FhSeparablePenalty:
    """H_t(x) = theta[t] + sum_n tables[n][t, x^n], with row T+1 zero.

    The zero terminal row is what makes the integrand sums telescope, so
    it is enforced rather than assumed.
    """

    theta: np.ndarray               # (T+2,)
    tables: list[np.ndarray]        # per n: (T+2, S_n)
    mu_init: np.ndarray | None = None  # (T+1, L)
    label: str = "fh-separable"

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.tables = [np.asarray(t, dtype=np.float64) for t in self.tables]
        if abs(float(self.theta[-1])) > 1e-12 or any(
                np.any(np.abs(t[-1]) > 1e-12) for t in self.tables):
            raise ConfigError("terminal penalty row must be zero")

    def value(self, t: int, x) -> float:
        return float(self.theta[t]) + sum(float(self.tables[n][t, x[n]])
                                          for n in range(len(self.tables)))

    def sup_abs(self) -> float:
        out = float(np.max(np.abs(self.theta)))
        for tab in self.tables:
            out += float(np.max(np.abs(tab)))
        return out


@dataclass
class FhJointPenalty:
    """H_t as explicit tables over joint states (mixed-radix order),
    row T+1 zero. Only the scenario-exact evaluator accepts these."""

    sizes: tuple[int, ...]
    values: np.ndarray              # (T+2, K)
    label: str = "fh-joint"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.sizes = tuple(int(s) for s in self.sizes)
        if np.any(np.abs(self.values[-1]) > 1e-12):
            raise ConfigError("terminal penalty row must be zero")

    def value(self, t: int, x) -> float:
        k = 0
        for n, s in enumerate(self.sizes):
            k = k * s + int(x[n])
        return float(self.values[t, k])


@dataclass
class FhLagrangianBound:
    lam: np.ndarray                 # (T+1, L)
    theta: np.ndarray               # (T+2,), theta[t] = sum_{s>=t} lam_s'b_s
    tables: list[np.ndarray]        # per n: (T+2, S_n)
    policies: list[np.ndarray] = field(repr=False)  # per n: (T+1, S_n)

    def value(self, x) -> float:
        return float(self.theta[0]) + sum(float(self.tables[n][0, x[n]])
                                          for n in range(len(self.tables)))

    def penalty(self) -> FhSeparablePenalty:
        return FhSeparablePenalty(theta=self.theta.copy(),
                                  tables=[t.copy() for t in self.tables],
                                  mu_init=self.lam.copy(), label="fh-lagrangian")


def fh_lagrangian(model: FhModel, lam) -> FhLagrangianBound:
    """Separable bound from a price path: per-subproblem backward induction
    on rewards R_t - lam_t'B_t over the full action sets."""
    T = model.horizon
    L = model.n_links
    lam = np.asarray(lam, dtype=np.float64).reshape(T + 1, L)
    if np.any(lam < 0):
        raise ConfigError("lam must be nonnegative")
    theta = np.zeros(T + 2)
    for t in range(T, -1, -1):
        theta[t] = theta[t + 1] + float(lam[t] @ model.budget[t])
    tables, policies = [], []
    for sub in model.subproblems:
        S = sub.n_states
        tab = np.zeros((T + 2, S))
        pol = np.zeros((T + 1, S), dtype=np.int64)
        for t in range(T, -1, -1):
            priced = sub.reward[t] - sub.weight[t] @ lam[t]  # (S, A)
            for x, acts in enumerate(sub.action_sets):
                qs = [priced[x, a] + (sub.transition[t, x, a] @ tab[t + 1]
                                      if t < T else 0.0)
                      for a in acts]
                j = int(np.argmax(qs))
                tab[t, x] = qs[j]
                pol[t, x] = acts[j]
        tables.append(tab)
        policies.append(pol)
    return FhLagrangianBound(lam=lam, theta=theta, tables=tables,
                             policies=policies)


def fh_lambda_search(model: FhModel, x0,
                     config: SubgradientConfig | None = None,
                     lam0=None):
    """Minimize the price-path bound at x0 by projected subgradient.

    The exact subgradient row for period t is b_t minus the expected
    weight consumed at t under the price-optimal per-subproblem policies,
    with state marginals propagated forward from x0. Keeps the best
    iterate; returns (bound, trace). Exact gradients settle quickly, so
    the default budget is much smaller than the generic one.
    """
    if config is None:
        config = SubgradientConfig(max_iters=400)
    T = model.horizon
    L = model.n_links
    lam = (np.zeros((T + 1, L)) if lam0 is None
           else np.asarray(lam0, dtype=np.float64).reshape(T + 1, L).copy())
    steps = config.steps()
    best_val = np.inf
    best_lam = lam.copy()
    trace = []
    for k in range(config.max_iters):
        bound = fh_lagrangian(model, lam)
        val = bound.value(x0)
        trace.append(val)
        if val < best_val:
            best_val = val
            best_lam = lam.copy()
        g = model.budget.copy()  # (T+1, L)
        for n, sub in enumerate(model.subproblems):
            m = np.zeros(sub.n_states)
            m[x0[n]] = 1.0
            for t in range(T + 1):
                pol = bound.policies[n][t]
                xs = np.arange(sub.n_states)
                g[t] -= m @ sub.weight[t, xs, pol]
                if t < T:
                    m = m @ sub.transition[t, xs, pol]
        if np.max(np.abs(g)) <= config.stop_tol:
            break
        lam = np.maximum(0.0, lam - steps[k] * g)
    return fh_lagrangian(model, best_lam), np.asarray(trace)


# ---------------------------------------------------------------------------
# scenario bounds


def _fh_uniforms(model: FhModel, seed: int) -> np.ndarray:
    T = model.horizon
    if T == 0:
        return np.zeros((model.n_subproblems, 0))
    return project_uniforms(seed, model.n_subproblems, T - 1)  # (N, T)


def _fh_joint_integrand(model: FhModel, penalty: FhSeparablePenalty,
                        space: _FhJointSpace, t: int) -> np.ndarray:
    """R_t + E[H_{t+1} | x, a] - H_t(x) for the period-t pairs."""
    T = model.horizon
    h_t = np.asarray([penalty.value(t, x) for x in space.states])
    g = space.pair_reward[t].copy()
    if t < T:
        h_next = np.asarray([penalty.value(t + 1, x) for x in space.states])
        g += space.expected_next(t, h_next)
    return g - h_t[space.pair_state[t]]


def fh_info_bound(model: FhModel, penalty: FhSeparablePenalty, x0,
                  n_scenarios: int, seed: int) -> BoundEstimate:
    """Scenario-exact upper bound: H_0(x0) plus the average maximal
    integrand sum over the joint inner DP along sampled uniforms."""
    if n_scenarios < 1:
        raise ConfigError("n_scenarios must be positive")
    space = _FhJointSpace(model)
    T = model.horizon
    K = len(space.states)
    gs = [_fh_joint_integrand(model, penalty, space, t) for t in range(T + 1)]
    h0 = penalty.value(0, x0)
    k0 = space.state_index(x0)
    vals = np.empty(n_scenarios)
    for i in range(n_scenarios):
        u = _fh_uniforms(model, scenario_seed(seed, i))
        w_next = np.zeros(K)
        for t in range(T, -1, -1):
            q = gs[t].copy()
            if t < T:
                q += w_next[space.scenario_next(t, u[:, t])]
            w_cur = np.empty(K)
            offs = space.offsets[t]
            for k in range(K):
                lo, hi = int(offs[k]), int(offs[k + 1])
                w_cur[k] = q[lo:hi].max()
            w_next = w_cur
        vals[i] = h0 + w_next[k0]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_scenarios)) if n_scenarios > 1 else 0.0
    return BoundEstimate(value=mean, se=se, n_samples=n_scenarios, seed=seed,
                         bias_bound=0.0, samples=vals)


class FhRelaxedEvaluator:
    """Decoupled per-subproblem scenario DPs under a multiplier path."""

    def __init__(self, model: FhModel, penalty: FhSeparablePenalty):
        self.model = model
        self.penalty = penalty
        T = model.horizon
        # static pair layout per subproblem; per-period integrand and weights
        self.layout = []
        for n, sub in enumerate(model.subproblems):
            pairs = list(sub.admissible_pairs())
            offs = [0]
            for x, acts in enumerate(sub.action_sets):
                offs.append(offs[-1] + len(acts))
            P = len(pairs)
            g = np.zeros((T + 1, P))
            w = np.zeros((T + 1, P, model.n_links))
            tab = penalty.tables[n]
            for t in range(T + 1):
                for p, (x, a) in enumerate(pairs):
                    e_next = (sub.transition[t, x, a] @ tab[t + 1]) if t < T else 0.0
                    g[t, p] = sub.reward[t, x, a] + e_next - tab[t, x]
                    w[t, p] = sub.weight[t, x, a]
            cdf = np.zeros((T + 1, P, sub.n_states))
            for t in range(T):
                for p, (x, a) in enumerate(pairs):
                    cdf[t, p] = np.cumsum(sub.transition[t, x, a])
            self.layout.append((pairs, np.asarray(offs, dtype=np.int64), g, w, cdf))
        # theta telescopes: sum_t (theta[t+1] - theta[t]) = -theta[0]
        self.const = -float(penalty.theta[0])

    def evaluate(self, uniforms: np.ndarray, x0, mu: np.ndarray):
        """Returns (value, subgradient (T+1, L), actions (T+1, N))."""
        model = self.model
        T = model.horizon
        L = model.n_links
        mu = np.asarray(mu, dtype=np.float64).reshape(T + 1, L)
        if np.any(mu < 0):
            raise ConfigError("mu must be nonnegative")
        total = self.const + float((mu * model.budget).sum())
        N = model.n_subproblems
        actions = np.zeros((T + 1, N), dtype=np.int64)
        consumed = np.zeros((T + 1, L))
        for n in range(N):
            pairs, offs, g, w, cdf = self.layout[n]
            S = model.subproblems[n].n_states
            w_next = np.zeros(S)
            arg = np.zeros((T + 1, S), dtype=np.int64)
            for t in range(T, -1, -1):
                q = g[t] - w[t] @ mu[t]
                if t < T:
                    nxt = (cdf[t] <= uniforms[n, t]).sum(axis=1)
                    np.clip(nxt, 0, S - 1, out=nxt)
                    q = q + w_next[nxt]
                w_cur = np.empty(S)
                for x in range(S):
                    lo, hi = int(offs[x]), int(offs[x + 1])
                    j = lo + int(np.argmax(q[lo:hi]))
                    w_cur[x] = q[j]
                    arg[t, x] = j
                w_next = w_cur
            x = int(x0[n])
            total += w_next[x]
            for t in range(T + 1):
                p = int(arg[t, x])
                actions[t, n] = pairs[p][1]
                consumed[t] += w[t, p]
                if t < T:
                    nxt = int((cdf[t, p] <= uniforms[n, t]).sum())
                    x = min(nxt, S - 1)
        return total, model.budget - consumed, actions

    def minimize(self, uniforms: np.ndarray, x0,
                 mu0: np.ndarray | None = None,
                 config: SubgradientConfig | None = None):
        # any multiplier path is a valid bound, so the default iteration
        # budget favors throughput; starting at the penalty's own price
        # path already matches the price bound before the first step
        if config is None:
            config = SubgradientConfig(max_iters=150)
        T = self.model.horizon
        L = self.model.n_links
        if mu0 is None:
            hint = self.penalty.mu_init
            mu0 = (np.zeros((T + 1, L)) if hint is None
                   else np.asarray(hint, dtype=np.float64).reshape(T + 1, L))
        mu = np.asarray(mu0, dtype=np.float64).copy()
        steps = config.steps()
        best = np.inf
        best_mu = mu.copy()
        trace = []
        for k in range(config.max_iters):
            val, sg, _ = self.evaluate(uniforms, x0, mu)
            trace.append(val)
            if val < best:
                best = val
                best_mu = mu.copy()
            if np.max(np.abs(sg)) <= config.stop_tol:
                break
            mu = np.maximum(0.0, mu - steps[k] * sg)
        return best, best_mu, np.asarray(trace)


def fh_practical_bound(model: FhModel, penalty: FhSeparablePenalty, x0,
                       n_scenarios: int, seed: int,
                       config: SubgradientConfig | None = None) -> BoundEstimate:
    """Decoupled upper bound: H_0(x0) plus the mu-minimized per-subproblem
    scenario DP values, averaged over scenarios."""
    if n_scenarios < 1:
        raise ConfigError("n_scenarios must be positive")
    ev = FhRelaxedEvaluator(model, penalty)
    h0 = penalty.value(0, x0)
    vals = np.empty(n_scenarios)
    for i in range(n_scenarios):
        u = _fh_uniforms(model, scenario_seed(seed, i))
        best, _, _ = ev.minimize(u, x0, config=config)
        vals[i] = h0 + best
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_scenarios)) if n_scenarios > 1 else 0.0
    return BoundEstimate(value=mean, se=se, n_samples=n_scenarios, seed=seed,
                         bias_bound=0.0, samples=vals)


@dataclass
class FhGapCertificate:
    gamma: np.ndarray          # (N,) summed per-period integrand spreads
    gamma_max: float
    factor: float              # 1 + L (T+1)
    gap_bound: float


def fh_gap_certificate(model: FhModel, penalty: FhSeparablePenalty) -> FhGapCertificate:
    """Worst-case excess of the decoupled bound over the scenario-exact one:
    (1 + L (T+1)) times the largest summed integrand spread."""
    T = model.horizon
    gamma = np.zeros(model.n_subproblems)
    for n, sub in enumerate(model.subproblems):
        tab = penalty.tables[n]
        for t in range(T + 1):
            vals = []
            for x, a in sub.admissible_pairs():
                e_next = (sub.transition[t, x, a] @ tab[t + 1]) if t < T else 0.0
                vals.append(sub.reward[t, x, a] + e_next - tab[t, x])
            gamma[n] += max(vals) - min(vals)
    factor = 1.0 + model.n_links * (model.horizon + 1)
    gmax = float(gamma.max())
    return FhGapCertificate(gamma=gamma, gamma_max=gmax, factor=factor,
                            gap_bound=factor * gmax)


def random_fh_model(n_subproblems: int, n_states: int, n_actions: int,
                    horizon: int, n_links: int, seed: int) -> FhModel:
    """Random time-varying instance, feasible by construction.

    Per-period budgets are 1 per link and action 0 weighs at most
    1/(2N) in every period, mirroring the stationary generator. The
    terminal transition slab is never used; it is filled uniformly to
    keep the arrays stochastic.
    """
    rng = np.random.default_rng(seed)
    T = horizon
    subs = []
    full = [tuple(range(n_actions))] * n_states
    for _ in range(n_subproblems):
        trans = rng.random((T + 1, n_states, n_actions, n_states)) + 0.05
        trans /= trans.sum(axis=3, keepdims=True)
        weight = rng.uniform(0.0, 1.0, (T + 1, n_states, n_actions, n_links))
        weight[:, :, 0, :] = rng.uniform(0.0, 0.5 / n_subproblems,
                                         (T + 1, n_states, n_links))
        subs.append(FhSubproblem(
            transition=trans,
            reward=rng.uniform(0.0, 1.0, (T + 1, n_states, n_actions)),
            weight=weight,
            action_sets=full))
    model = FhModel(horizon=T, budget=np.ones((T + 1, n_links)),
                    subproblems=subs)
    validate_fh_model(model)
    return model
