"""Weakly coupled dynamic program models and joint-space machinery.

A model couples N independent finite subproblem MDPs through linking
constraints on the joint action: at joint state x = (x^1,...,x^N) the
action a = (a^1,...,a^N) is admissible when each component a^n lies in
the subproblem's per-state action set and the summed consumption
sum_n B^n(x^n, a^n) stays within the budget vector b (componentwise).
Rewards add across subproblems and the objective is expected discounted
reward over an infinite horizon with discount factor in (0, 1).

Conventions:
  - transition[x, a, x'] is the probability of moving x -> x' under a
  - reward[x, a] is the one-period reward
  - weight[x, a] is the L-vector consumed by (x, a)
  - joint states are indexed in mixed-radix order, last component fastest
  - scenario uniforms come from counter-based streams so that the value
    for (seed, project n, period t) never depends on evaluation order
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GuardError, NumericalError

MODEL_SCHEMA = "wcdp-v1"

# Enumeration guards. Requests above these sizes are refused rather than
# silently attempted; callers can lower but not raise them per call.
JOINT_STATE_GUARD = 10**6
POLICY_TABLE_GUARD = 65536
DENSE_SOLVE_LIMIT = 2048

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# data containers


@dataclass
class Subproblem:
    """One component MDP: tensors over (state, action [, next-state])."""

    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray      # (S, A)
    weight: np.ndarray      # (S, A, L)
    action_sets: list[tuple[int, ...]]  # admissible actions per state

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.action_sets = [tuple(int(a) for a in acts) for acts in self.action_sets]

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def admissible_pairs(self):
        """Yield (state, action) over the per-state action sets, in order."""
        for x, acts in enumerate(self.action_sets):
            for a in acts:
                yield x, a

    def cdf(self) -> np.ndarray:
        """Cumulative transition rows, used by the inverse-CDF transition map."""
        return np.cumsum(self.transition, axis=-1)


@dataclass
class WeaklyCoupledModel:
    discount: float
    budget: np.ndarray  # (L,)
    subproblems: list[Subproblem]
    # Optional per-project action usable in every state with weight at most
    # budget / N componentwise; certifies joint feasibility when the joint
    # space is too large to check exhaustively.
    null_actions: list[int] | None = None

    def __post_init__(self):
        self.budget = np.atleast_1d(np.asarray(self.budget, dtype=np.float64))

    @property
    def n_subproblems(self) -> int:
        return len(self.subproblems)

    @property
    def n_links(self) -> int:
        return self.budget.shape[0]

    @property
    def state_sizes(self) -> tuple[int, ...]:
        return tuple(sub.n_states for sub in self.subproblems)

    @property
    def joint_state_count(self) -> int:
        out = 1
        for s in self.state_sizes:
            out *= s
        return out

    def reward_sup(self) -> float:
        """max |reward| over admissible per-subproblem pairs, summed across projects."""
        total = 0.0
        for sub in self.subproblems:
            vals = [abs(float(sub.reward[x, a])) for x, a in sub.admissible_pairs()]
            total += max(vals) if vals else 0.0
        return total


@dataclass
class InitialDistribution:
    """Either product-form marginals or an explicit joint table."""

    marginals: list[np.ndarray] | None = None
    joint: np.ndarray | None = None  # flat over joint states, mixed-radix order

    def __post_init__(self):
        if (self.marginals is None) == (self.joint is None):
            raise ConfigError("exactly one of marginals / joint must be given")
        if self.marginals is not None:
            self.marginals = [np.asarray(m, dtype=np.float64) for m in self.marginals]
        else:
            self.joint = np.asarray(self.joint, dtype=np.float64)

    @staticmethod
    def uniform(model: WeaklyCoupledModel) -> "InitialDistribution":
        return InitialDistribution(
            marginals=[np.full(s, 1.0 / s) for s in model.state_sizes]
        )

    @staticmethod
    def point(model: WeaklyCoupledModel, x0) -> "InitialDistribution":
        margs = []
        for n, s in enumerate(model.state_sizes):
            m = np.zeros(s)
            m[x0[n]] = 1.0
            margs.append(m)
        return InitialDistribution(marginals=margs)

    def marginal(self, model: WeaklyCoupledModel, n: int) -> np.ndarray:
        if self.marginals is not None:
            return self.marginals[n]
        sizes = model.state_sizes
        table = self.joint.reshape(sizes)
        axes = tuple(i for i in range(len(sizes)) if i != n)
        return table.sum(axis=axes)

    def validate(self, model: WeaklyCoupledModel, tol: float = 1e-9):
        if self.marginals is not None:
            if len(self.marginals) != model.n_subproblems:
                raise ConfigError("one marginal per subproblem required")
            for n, m in enumerate(self.marginals):
                if m.shape != (model.state_sizes[n],):
                    raise ConfigError(f"marginal {n} has wrong length")
                if np.any(m < -tol) or abs(m.sum() - 1.0) > tol:
                    raise ConfigError(f"marginal {n} is not a distribution")
        else:
            if self.joint.shape != (model.joint_state_count,):
                raise ConfigError("joint table has wrong length")
            if np.any(self.joint < -tol) or abs(self.joint.sum() - 1.0) > tol:
                raise ConfigError("joint table is not a distribution")


@dataclass
class Scenario:
    """A sampled random horizon plus the uniforms that drive transitions.

    uniforms[n, t-1] drives the transition of project n from period t-1
    to period t, for t = 1..tau+1 (one spare column beyond the horizon).
    """

    tau: int
    uniforms: np.ndarray  # (N, tau + 1)
    seed: int

    def __post_init__(self):
        self.uniforms = np.asarray(self.uniforms, dtype=np.float64)
        if self.uniforms.ndim != 2 or self.uniforms.shape[1] != self.tau + 1:
            raise ConfigError("uniforms must have shape (n_subproblems, tau + 1)")


@dataclass
class BoundEstimate:
    """Monte Carlo estimate with its standard error and provenance."""

    value: float
    se: float
    n_samples: int
    seed: int
    bias_bound: float = 0.0
    samples: np.ndarray | None = field(default=None, repr=False)


@dataclass
class JointSolution:
    values: np.ndarray          # (K,) over joint states
    policy: np.ndarray          # (K, N) action indices
    bellman_residual: float
    iterations: int


# ---------------------------------------------------------------------------
# joint state indexing


def state_radix(model: WeaklyCoupledModel) -> np.ndarray:
    """Mixed-radix weights: joint index = sum_n radix[n] * x^n (last fastest)."""
    sizes = model.state_sizes
    radix = np.ones(len(sizes), dtype=np.int64)
    for n in range(len(sizes) - 2, -1, -1):
        radix[n] = radix[n + 1] * sizes[n + 1]
    return radix


def state_index(model: WeaklyCoupledModel, x) -> int:
    radix = state_radix(model)
    return int(sum(int(x[n]) * int(radix[n]) for n in range(model.n_subproblems)))


def state_tuple(model: WeaklyCoupledModel, idx: int) -> tuple[int, ...]:
    sizes = model.state_sizes
    out = []
    for n in range(len(sizes) - 1, -1, -1):
        out.append(idx % sizes[n])
        idx //= sizes[n]
    return tuple(reversed(out))


def enumerate_joint_states(model: WeaklyCoupledModel):
    """All joint state tuples in mixed-radix order."""
    return itertools.product(*(range(s) for s in model.state_sizes))


# ---------------------------------------------------------------------------
# validation


def validate_model(model: WeaklyCoupledModel, tol: float = 1e-9,
                   feasibility: str = "auto"):
    """Check shapes, stochasticity, and joint feasibility.

    feasibility: 'auto' checks every joint state exhaustively when the
    joint space has at most 10^4 states and otherwise requires declared
    null actions; 'exhaustive' forces the full check; 'skip' checks
    only the local structure.
    """
    if not (0.0 < model.discount < 1.0):
        raise ConfigError("discount must lie strictly between 0 and 1")
    if model.budget.ndim != 1:
        raise ConfigError("budget must be a vector")
    L = model.n_links
    if model.n_subproblems == 0:
        raise ConfigError("at least one subproblem required")
    for n, sub in enumerate(model.subproblems):
        S, A = sub.n_states, sub.n_actions
        if sub.transition.shape != (S, A, S):
            raise ConfigError(f"subproblem {n}: transition must be (S, A, S)")
        if sub.reward.shape != (S, A):
            raise ConfigError(f"subproblem {n}: reward must be (S, A)")
        if sub.weight.shape != (S, A, L):
            raise ConfigError(f"subproblem {n}: weight must be (S, A, {L})")
        if len(sub.action_sets) != S:
            raise ConfigError(f"subproblem {n}: one action set per state required")
        for x, acts in enumerate(sub.action_sets):
            if len(acts) == 0:
                raise ConfigError(f"subproblem {n}: empty action set at state {x}")
            if len(set(acts)) != len(acts):
                raise ConfigError(f"subproblem {n}: duplicate action at state {x}")
            for a in acts:
                if not (0 <= a < A):
                    raise ConfigError(f"subproblem {n}: action {a} out of range")
                row = sub.transition[x, a]
                if np.any(row < -1e-12):
                    raise ConfigError(f"subproblem {n}: negative probability at ({x},{a})")
                if abs(row.sum() - 1.0) > tol:
                    raise ConfigError(
                        f"subproblem {n}: transition row ({x},{a}) sums to {row.sum():.12g}"
                    )
        if not np.all(np.isfinite(sub.reward)) or not np.all(np.isfinite(sub.weight)):
            raise ConfigError(f"subproblem {n}: rewards and weights must be finite")

    if feasibility == "skip":
        return
    if feasibility not in ("auto", "exhaustive"):
        raise ConfigError("feasibility must be auto, exhaustive, or skip")

    K = model.joint_state_count
    if feasibility == "exhaustive" or K <= 10**4:
        if K > JOINT_STATE_GUARD:
            raise GuardError(f"joint space too large to enumerate ({K} states)")
        for x in enumerate_joint_states(model):
            if not _has_feasible_action(model, x):
                raise ConfigError(f"no admissible joint action at state {x}")
    else:
        if model.null_actions is None:
            raise GuardError(
                "joint space too large for exhaustive feasibility check; "
                "declare null_actions or pass feasibility='skip'"
            )
        if len(model.null_actions) != model.n_subproblems:
            raise ConfigError("one null action per subproblem required")
        share = model.budget / model.n_subproblems
        for n, (sub, a0) in enumerate(zip(model.subproblems, model.null_actions)):
            for x, acts in enumerate(sub.action_sets):
                if a0 not in acts:
                    raise ConfigError(f"null action {a0} not admissible at ({n},{x})")
                if np.any(sub.weight[x, a0] > share + tol):
                    raise ConfigError(
                        f"null action weight exceeds budget/N at ({n},{x})"
                    )


def _has_feasible_action(model: WeaklyCoupledModel, x) -> bool:
    for a in itertools.product(*(model.subproblems[n].action_sets[x[n]]
                                 for n in range(model.n_subproblems))):
        w = sum(model.subproblems[n].weight[x[n], a[n]]
                for n in range(model.n_subproblems))
        if np.all(w <= model.budget + 1e-9):
            return True
    return False


def feasible_joint_actions(model: WeaklyCoupledModel, x) -> list[tuple[int, ...]]:
    """Admissible joint actions at x, in lexicographic order."""
    out = []
    subs = model.subproblems
    N = model.n_subproblems
    for a in itertools.product(*(subs[n].action_sets[x[n]] for n in range(N))):
        w = subs[0].weight[x[0], a[0]].copy()
        for n in range(1, N):
            w += subs[n].weight[x[n], a[n]]
        if np.all(w <= model.budget + 1e-9):
            out.append(a)
    return out


# ---------------------------------------------------------------------------
# joint space enumeration (states x admissible actions, flattened)


@dataclass
class JointSpace:
    """Flattened enumeration of joint states and their admissible actions.

    Pairs are grouped by state (CSR layout): the pairs of state k occupy
    positions offsets[k]..offsets[k+1]. Within a state, actions appear in
    lexicographic order, so the first maximum in a scan is the lowest
    action tuple.
    """

    model: WeaklyCoupledModel
    sizes: tuple[int, ...]
    radix: np.ndarray
    comp_states: np.ndarray    # (K, N) int32
    offsets: np.ndarray        # (K+1,) int64
    pair_state: np.ndarray     # (P,) int64
    pair_actions: np.ndarray   # (P, N) int32
    pair_reward: np.ndarray    # (P,)
    pair_weight: np.ndarray    # (P, L)
    pair_cdf_rows: list        # per n: (P, S_n) cumulative transition rows

    @property
    def n_states(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_pairs(self) -> int:
        return self.pair_state.shape[0]


def build_joint_space(model: WeaklyCoupledModel, max_pairs: int = 2 * 10**5) -> JointSpace:
    K = model.joint_state_count
    if K > JOINT_STATE_GUARD:
        raise GuardError(f"joint space too large ({K} states)")
    N = model.n_subproblems
    sizes = model.state_sizes
    radix = state_radix(model)

    comp_states = np.empty((K, N), dtype=np.int32)
    offsets = np.zeros(K + 1, dtype=np.int64)
    states_list = list(enumerate_joint_states(model))
    pair_state, pair_actions = [], []
    for k, x in enumerate(states_list):
        comp_states[k] = x
        acts = feasible_joint_actions(model, x)
        if not acts:
            raise ConfigError(f"no admissible joint action at state {x}")
        offsets[k + 1] = offsets[k] + len(acts)
        if offsets[k + 1] > max_pairs:
            raise GuardError(f"joint enumeration exceeds {max_pairs} state-action pairs")
        for a in acts:
            pair_state.append(k)
            pair_actions.append(a)

    pair_state = np.asarray(pair_state, dtype=np.int64)
    pair_actions = np.asarray(pair_actions, dtype=np.int32)
    P = pair_state.shape[0]
    pair_reward = np.zeros(P)
    pair_weight = np.zeros((P, model.n_links))
    pair_cdf_rows = []
    for n, sub in enumerate(model.subproblems):
        xs = comp_states[pair_state, n]
        acts = pair_actions[:, n]
        pair_reward += sub.reward[xs, acts]
        pair_weight += sub.weight[xs, acts]
        pair_cdf_rows.append(np.ascontiguousarray(sub.cdf()[xs, acts]))

    return JointSpace(model, sizes, radix, comp_states, offsets, pair_state,
                      pair_actions, pair_reward, pair_weight, pair_cdf_rows)


def scenario_next_states(space: JointSpace, uniforms: np.ndarray,
                         n_periods: int) -> np.ndarray:
    """Deterministic next joint state per (period, pair) under the scenario.

    Row t maps each pair through the inverse-CDF transition driven by
    uniforms[:, t]; returns an (n_periods, P) int64 array of joint indices.
    """
    P = space.n_pairs
    out = np.zeros((n_periods, P), dtype=np.int64)
    for n in range(len(space.sizes)):
        rows = space.pair_cdf_rows[n]  # (P, S_n)
        S = space.sizes[n]
        u = uniforms[n, :n_periods]
        # counts of cdf entries <= u give the first index with cdf > u
        comp = (rows[None, :, :] <= u[:, None, None]).sum(axis=2)
        np.clip(comp, 0, S - 1, out=comp)
        out += comp.astype(np.int64) * int(space.radix[n])
    return out


# ---------------------------------------------------------------------------
# randomness: counter-based streams


def _philox(seed: int, counter_block: int) -> np.random.Generator:
    if not (0 <= seed <= _MASK64):
        raise ConfigError("seed must be a 64-bit unsigned integer")
    bitgen = np.random.Philox(key=seed, counter=[0, 0, counter_block & _MASK64, 0])
    return np.random.Generator(bitgen)


def scenario_seed(master_seed: int, index: int) -> int:
    """Stable per-scenario seed derived from (master seed, index)."""
    g = np.random.Generator(np.random.Philox(key=[master_seed & _MASK64,
                                                  index & _MASK64]))
    return int(g.integers(0, 2**63))


def project_uniforms(seed: int, n_subproblems: int, horizon: int) -> np.ndarray:
    """Uniforms u[n, t] for t = 1..horizon+1, one counter block per project."""
    u = np.empty((n_subproblems, horizon + 1))
    for n in range(n_subproblems):
        u[n] = _philox(seed, n + 1).random(horizon + 1)
    return u


def meta_stream(seed: int) -> np.random.Generator:
    """Stream for scenario-level draws (the random horizon), block 0."""
    return _philox(seed, 0)


def sample_scenario(model: WeaklyCoupledModel, seed: int, horizon: int) -> Scenario:
    """Scenario with a fixed horizon; uniforms cover periods 1..horizon+1."""
    if horizon < 0:
        raise ConfigError("horizon must be nonnegative")
    return Scenario(tau=horizon,
                    uniforms=project_uniforms(seed, model.n_subproblems, horizon),
                    seed=seed)


def deterministic_transition(model: WeaklyCoupledModel, n: int, x: int, a: int,
                             u: float) -> int:
    """Inverse-CDF transition: smallest x' whose cumulative probability exceeds u."""
    cdf = np.cumsum(model.subproblems[n].transition[x, a])
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(cdf) - 1)


# ---------------------------------------------------------------------------
# joint value iteration


def _action_profiles(model: WeaklyCoupledModel):
    """All per-subproblem action-index tuples (lexicographic order)."""
    return list(itertools.product(*(range(sub.n_actions) for sub in model.subproblems)))


def joint_value_iteration(model: WeaklyCoupledModel, tol: float | None = None,
                          max_iterations: int = 100000) -> JointSolution:
    """Optimal joint values by value iteration with an exact final polish.

    Sweeps run over action profiles with feasibility masks; once the sweep
    residual drops below tol the greedy policy is evaluated exactly
    (dense linear solve, when the space is small enough) which leaves a
    residual near machine precision. Greedy ties break toward the
    lexicographically smallest action tuple.
    """
    K = model.joint_state_count
    if K > JOINT_STATE_GUARD:
        raise GuardError(f"joint space too large ({K} states)")
    beta = model.discount
    if tol is None:
        tol = 1e-9 * max(1.0, model.reward_sup())

    profiles = _action_profiles(model)
    n_prof = len(profiles)
    if n_prof * K > 5 * 10**7:
        raise GuardError("profile enumeration too large for value iteration")
    sizes = model.state_sizes
    N = model.n_subproblems
    comp = np.empty((K, N), dtype=np.int64)
    for n in range(N):
        reps = int(np.prod(sizes[n + 1:], dtype=np.int64)) if n + 1 < N else 1
        tiles = int(np.prod(sizes[:n], dtype=np.int64)) if n > 0 else 1
        comp[:, n] = np.tile(np.repeat(np.arange(sizes[n]), reps), tiles)

    # feasibility mask and per-profile rewards
    masks = np.zeros((n_prof, K), dtype=bool)
    rewards = np.zeros((n_prof, K))
    for j, prof in enumerate(profiles):
        ok = np.ones(K, dtype=bool)
        w = np.zeros((K, model.n_links))
        r = np.zeros(K)
        for n, sub in enumerate(model.subproblems):
            allowed = np.zeros(sub.n_states, dtype=bool)
            for x, acts in enumerate(sub.action_sets):
                allowed[x] = prof[n] in acts
            ok &= allowed[comp[:, n]]
            w += sub.weight[comp[:, n], prof[n]]
            r += sub.reward[comp[:, n], prof[n]]
        ok &= np.all(w <= model.budget + 1e-9, axis=1)
        masks[j] = ok
        rewards[j] = r
    if not np.all(masks.any(axis=0)):
        raise ConfigError("some joint state has no admissible action")

    def expected_values(v: np.ndarray, prof) -> np.ndarray:
        # contract each state axis with its transition row for this profile
        ev = v.reshape(sizes)
        for n, sub in enumerate(model.subproblems):
            m = sub.transition[:, prof[n], :]  # (S_n, S_n), rows = current state
            ev = np.moveaxis(np.tensordot(m, ev, axes=(1, n)), 0, n)
        return ev.reshape(-1)

    def sweep(v: np.ndarray):
        best = np.full(K, -np.inf)
        arg = np.full(K, -1, dtype=np.int64)
        for j, prof in enumerate(profiles):
            if not masks[j].any():
                continue
            q = rewards[j] + beta * expected_values(v, prof)
            upd = masks[j] & (q > best)
            best[upd] = q[upd]
            arg[upd] = j
        return best, arg

    v = np.zeros(K)
    iterations = 0
    while True:
        new, _ = sweep(v)
        iterations += 1
        residual = float(np.max(np.abs(new - v)))
        v = new
        if residual <= tol:
            break
        if iterations >= max_iterations:
            raise NumericalError("value iteration failed to converge")

    _, arg = sweep(v)

    if K <= DENSE_SOLVE_LIMIT:
        # exact evaluation of the greedy policy; keep it if it tightens the residual
        pmat = np.zeros((K, K))
        rvec = np.empty(K)
        for k in range(K):
            prof = profiles[arg[k]]
            row = np.ones(1)
            for n, sub in enumerate(model.subproblems):
                row = np.kron(row, sub.transition[comp[k, n], prof[n]])
            pmat[k] = row
            rvec[k] = rewards[arg[k]][k]
        v_pol = np.linalg.solve(np.eye(K) - beta * pmat, rvec)
        new, arg2 = sweep(v_pol)
        res_pol = float(np.max(np.abs(new - v_pol)))
        new_vi, _ = sweep(v)
        res_vi = float(np.max(np.abs(new_vi - v)))
        if res_pol <= res_vi:
            v, arg, residual = v_pol, arg2, res_pol
        else:
            residual = res_vi
    else:
        new, arg = sweep(v)
        residual = float(np.max(np.abs(new - v)))

    policy = np.asarray([profiles[j] for j in arg], dtype=np.int32)
    return JointSolution(values=v, policy=policy,
                         bellman_residual=residual, iterations=iterations)


# ---------------------------------------------------------------------------
# policy simulation


def simulate_policy(model: WeaklyCoupledModel, policy, x0, n_paths: int,
                    path_horizon: int, seed: int) -> BoundEstimate:
    """Mean discounted reward of a stationary policy from x0.

    policy maps a joint state tuple to a joint action tuple; it is
    tabulated once over the joint space and each path then runs fully
    vectorized. Raises NumericalError if the policy ever picks an
    inadmissible action. The reported bias_bound is the discounted tail
    beta^(H+1) * Rmax / (1 - beta) cut off by the finite horizon.
    """
    K = model.joint_state_count
    if K > POLICY_TABLE_GUARD:
        raise GuardError(f"joint space too large to tabulate a policy ({K} states)")
    if n_paths < 1 or path_horizon < 0:
        raise ConfigError("n_paths >= 1 and path_horizon >= 0 required")
    N = model.n_subproblems
    beta = model.discount

    act_table = np.empty((K, N), dtype=np.int32)
    r_table = np.empty(K)
    for k, x in enumerate(enumerate_joint_states(model)):
        a = tuple(policy(x))
        w = np.zeros(model.n_links)
        r = 0.0
        for n, sub in enumerate(model.subproblems):
            if a[n] not in sub.action_sets[x[n]]:
                raise NumericalError(f"policy picks inadmissible action {a} at {x}")
            w += sub.weight[x[n], a[n]]
            r += sub.reward[x[n], a[n]]
        if np.any(w > model.budget + 1e-9):
            raise NumericalError(f"policy violates the budget at {x}: {a}")
        act_table[k] = a
        r_table[k] = r

    cdfs = [sub.cdf() for sub in model.subproblems]
    radix = state_radix(model)
    x0_idx = state_index(model, x0)

    uniforms = np.empty((n_paths, N, path_horizon))
    for p in range(n_paths):
        path_seed = scenario_seed(seed, p)
        if path_horizon > 0:
            uniforms[p] = project_uniforms(path_seed, N, path_horizon - 1)

    states = np.full(n_paths, x0_idx, dtype=np.int64)
    comp = np.tile(np.asarray(x0, dtype=np.int64), (n_paths, 1))
    totals = np.zeros(n_paths)
    disc = 1.0
    for t in range(path_horizon + 1):
        totals += disc * r_table[states]
        disc *= beta
        if t == path_horizon:
            break
        acts = act_table[states]
        nxt = np.zeros(n_paths, dtype=np.int64)
        for n in range(N):
            rows = cdfs[n][comp[:, n], acts[:, n]]  # (paths, S_n)
            cn = (rows <= uniforms[:, n, t, None]).sum(axis=1)
            np.clip(cn, 0, model.state_sizes[n] - 1, out=cn)
            comp[:, n] = cn
            nxt += cn * int(radix[n])
        states = nxt

    rmax = model.reward_sup()
    bias = beta ** (path_horizon + 1) * rmax / (1.0 - beta)
    mean = float(totals.mean())
    se = float(totals.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    return BoundEstimate(value=mean, se=se, n_samples=n_paths, seed=seed,
                         bias_bound=bias, samples=totals)


# ---------------------------------------------------------------------------
# JSON serialization


def model_to_dict(model: WeaklyCoupledModel) -> dict:
    d = {
        "schema": MODEL_SCHEMA,
        "discount": float(model.discount),
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
    if model.null_actions is not None:
        d["null_actions"] = [int(a) for a in model.null_actions]
    return d


def model_from_dict(d: dict, feasibility: str = "auto") -> WeaklyCoupledModel:
    if not isinstance(d, dict):
        raise ConfigError("model must be a JSON object")
    if d.get("schema") != MODEL_SCHEMA:
        raise ConfigError(f"unsupported model schema: {d.get('schema')!r}")
    allowed = {"schema", "discount", "budget", "subproblems", "null_actions"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown model fields: {sorted(unknown)}")
    try:
        subs = [
            Subproblem(
                transition=np.asarray(s["transition"], dtype=np.float64),
                reward=np.asarray(s["reward"], dtype=np.float64),
                weight=np.asarray(s["weight"], dtype=np.float64),
                action_sets=[tuple(acts) for acts in s["action_sets"]],
            )
            for s in d["subproblems"]
        ]
        model = WeaklyCoupledModel(
            discount=float(d["discount"]),
            budget=np.asarray(d["budget"], dtype=np.float64),
            subproblems=subs,
            null_actions=d.get("null_actions"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed model: {exc}") from exc
    validate_model(model, feasibility=feasibility)
    return model


def save_model(model: WeaklyCoupledModel, path: str):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str, feasibility: str = "auto") -> WeaklyCoupledModel:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return model_from_dict(d, feasibility=feasibility)


def model_fingerprint(model: WeaklyCoupledModel) -> str:
    """SHA-256 of the canonical JSON encoding."""
    text = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def random_weakly_coupled(n_subproblems: int, n_states: int, n_actions: int,
                          n_links: int, discount: float, seed: int,
                          feasibility: str = "auto") -> WeaklyCoupledModel:
    """Random dense instance that is feasible by construction.

    Budgets are 1 per link and action 0 carries weight at most
    1/(2N), so the all-zeros profile fits under the budget from every
    joint state. Rewards and remaining weights are uniform on [0, 1).
    """
    rng = np.random.default_rng(seed)
    subs = []
    full = [tuple(range(n_actions))] * n_states
    for _ in range(n_subproblems):
        trans = rng.random((n_states, n_actions, n_states)) + 0.05
        trans /= trans.sum(axis=2, keepdims=True)
        weight = rng.uniform(0.0, 1.0, (n_states, n_actions, n_links))
        weight[:, 0, :] = rng.uniform(0.0, 0.5 / n_subproblems,
                                      (n_states, n_links))
        subs.append(Subproblem(transition=trans,
                               reward=rng.uniform(0.0, 1.0, (n_states, n_actions)),
                               weight=weight,
                               action_sets=full))
    model = WeaklyCoupledModel(discount=discount, budget=np.ones(n_links),
                               subproblems=subs, null_actions=[0] * n_subproblems)
    validate_model(model, feasibility=feasibility)
    return model
