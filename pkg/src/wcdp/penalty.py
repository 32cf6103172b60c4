"""Value-function containers used to build information-relaxation penalties.

A penalty is any bounded function H over joint states; the inner problems
only ever need H(x) and the exact one-step expectations E[H(x')|x,a].
Two representations are supported: separable (theta + sum of per-subproblem
tables, the form produced by Lagrangian and ALP relaxations) and an
explicit table over the joint space (the form produced by exact solves).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import GuardError
from .model import (JointSpace, WeaklyCoupledModel, state_radix)


@dataclass
class SeparablePenalty:
    """H(x) = theta + sum_n tables[n][x^n]."""

    theta: float
    tables: list[np.ndarray]
    mu_init: np.ndarray | None = None  # multiplier hint for relaxed inner problems
    label: str = "separable"

    def __post_init__(self):
        self.tables = [np.asarray(t, dtype=np.float64) for t in self.tables]
        if self.mu_init is not None:
            self.mu_init = np.asarray(self.mu_init, dtype=np.float64)

    def value(self, x) -> float:
        return self.theta + sum(float(self.tables[n][x[n]]) for n in range(len(self.tables)))

    def sup_abs(self) -> float:
        """An upper bound on max |H| over joint states."""
        return abs(self.theta) + sum(float(np.max(np.abs(t))) for t in self.tables)

    def expected_tables(self, model: WeaklyCoupledModel) -> list[np.ndarray]:
        """Per-subproblem E[h_n(x')|x,a] tables of shape (S, A)."""
        out = []
        for n, sub in enumerate(model.subproblems):
            out.append(sub.transition @ self.tables[n])
        return out


@dataclass
class JointTablePenalty:
    """H given as a flat table over joint states (mixed-radix order)."""

    values: np.ndarray
    label: str = "joint-table"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def joint_value(model: WeaklyCoupledModel, penalty, x) -> float:
    """H(x) for either penalty representation."""
    if isinstance(penalty, SeparablePenalty):
        return penalty.value(x)
    radix = state_radix(model)
    idx = int(sum(int(x[n]) * int(radix[n]) for n in range(model.n_subproblems)))
    return float(penalty.values[idx])


def penalty_state_values(model: WeaklyCoupledModel, penalty,
                         space: JointSpace) -> np.ndarray:
    """H over all joint states, flat in mixed-radix order."""
    if isinstance(penalty, JointTablePenalty):
        if penalty.values.shape[0] != space.n_states:
            raise ValueError("joint penalty table has wrong length")
        return penalty.values
    h = np.full(space.n_states, penalty.theta)
    for n, t in enumerate(penalty.tables):
        h += t[space.comp_states[:, n]]
    return h


def pair_expected_values(model: WeaklyCoupledModel, penalty,
                         space: JointSpace) -> np.ndarray:
    """E[H(x')|x,a] for every admissible pair of the joint space."""
    if isinstance(penalty, SeparablePenalty):
        eh = np.full(space.n_pairs, penalty.theta)
        for n, sub in enumerate(model.subproblems):
            table = sub.transition @ penalty.tables[n]  # (S, A)
            xs = space.comp_states[space.pair_state, n]
            eh += table[xs, space.pair_actions[:, n]]
        return eh
    # explicit joint table: contract the value tensor profile by profile
    sizes = space.sizes
    n_profiles = 1
    for sub in model.subproblems:
        n_profiles *= sub.n_actions
    if n_profiles * space.n_states > 2 * 10**6:
        raise GuardError("joint-table penalty expectation too large to enumerate")
    v = penalty.values.reshape(sizes)
    arad = np.ones(model.n_subproblems, dtype=np.int64)
    for n in range(model.n_subproblems - 2, -1, -1):
        arad[n] = arad[n + 1] * model.subproblems[n + 1].n_actions
    ev_profiles = np.empty((n_profiles, space.n_states))
    for j, prof in enumerate(itertools.product(
            *(range(sub.n_actions) for sub in model.subproblems))):
        ev = v
        for n, sub in enumerate(model.subproblems):
            mtx = sub.transition[:, prof[n], :]
            ev = np.moveaxis(np.tensordot(mtx, ev, axes=(1, n)), 0, n)
        ev_profiles[j] = ev.reshape(-1)
    prof_of_pair = (space.pair_actions.astype(np.int64) * arad).sum(axis=1)
    return ev_profiles[prof_of_pair, space.pair_state]


def pair_integrand(model: WeaklyCoupledModel, penalty, space: JointSpace) -> np.ndarray:
    """One-period improvement terms R + beta E[H] - H per admissible pair.

    The per-scenario inner objective is the sum of these terms along the
    controlled trajectory; a nonpositive maximum certifies H as a
    supersolution.
    """
    beta = model.discount
    h = penalty_state_values(model, penalty, space)
    eh = pair_expected_values(model, penalty, space)
    return space.pair_reward + beta * eh - h[space.pair_state]


@dataclass
class SubproblemPairs:
    """Flattened per-subproblem (state, action) enumeration for relaxed DPs.

    Rows index (subproblem, state) pairs globally: row(n, x) =
    first_row[n] + x. Pairs of one row are contiguous (CSR offsets), in
    action-set order.
    """

    model: WeaklyCoupledModel
    first_row: np.ndarray       # (N+1,)
    row_offsets: np.ndarray     # (R+1,) pair ranges per row
    pair_g: np.ndarray          # (P2,) integrand R^n + beta E[h_n] - h_n
    pair_w: np.ndarray          # (P2, L)
    pair_action: np.ndarray     # (P2,) action index
    pair_cdf: list              # per n: (P2_n, S_n) cumulative rows
    pair_slices: list           # per n: slice into the flat pair arrays
    theta: float

    def next_rows(self, uniforms: np.ndarray, n_periods: int) -> np.ndarray:
        """Absolute next-row index per (period, pair) under the scenario."""
        out = np.zeros((n_periods, self.pair_g.shape[0]), dtype=np.int64)
        for n in range(self.model.n_subproblems):
            sl = self.pair_slices[n]
            rows = self.pair_cdf[n]
            S = self.model.subproblems[n].n_states
            u = uniforms[n, :n_periods]
            comp = (rows[None, :, :] <= u[:, None, None]).sum(axis=2)
            np.clip(comp, 0, S - 1, out=comp)
            out[:, sl] = comp + int(self.first_row[n])
        return out


def build_subproblem_pairs(model: WeaklyCoupledModel,
                           penalty: SeparablePenalty) -> SubproblemPairs:
    beta = model.discount
    first_row = np.zeros(model.n_subproblems + 1, dtype=np.int64)
    for n, sub in enumerate(model.subproblems):
        first_row[n + 1] = first_row[n] + sub.n_states

    offsets = [0]
    g_parts, w_parts, act_parts, cdf_parts, slices = [], [], [], [], []
    pos = 0
    for n, sub in enumerate(model.subproblems):
        eh = sub.transition @ penalty.tables[n]  # (S, A)
        h = penalty.tables[n]
        start = pos
        cdf = sub.cdf()
        rows = []
        for x, acts in enumerate(sub.action_sets):
            for a in acts:
                g_parts.append(sub.reward[x, a] + beta * eh[x, a] - h[x])
                w_parts.append(sub.weight[x, a])
                act_parts.append(a)
                rows.append(cdf[x, a])
                pos += 1
            offsets.append(pos)
        cdf_parts.append(np.asarray(rows))
        slices.append(slice(start, pos))

    return SubproblemPairs(
        model=model,
        first_row=first_row,
        row_offsets=np.asarray(offsets, dtype=np.int64),
        pair_g=np.asarray(g_parts, dtype=np.float64),
        pair_w=np.asarray(w_parts, dtype=np.float64).reshape(pos, model.n_links),
        pair_action=np.asarray(act_parts, dtype=np.int64),
        pair_cdf=cdf_parts,
        pair_slices=slices,
        theta=penalty.theta,
    )
