"""Dense linear programming by two-phase primal simplex with Bland's rule.

Solves  min c'z  subject to  A z (<=, >=, =) rhs  and box bounds on z.
Small dense problems only; no sparsity, no scaling. Bland's pivoting rule
guarantees termination under degeneracy at the cost of speed, which is
acceptable at the sizes used here (hundreds of rows).

Reported row duals are the nonnegative complementarity multipliers: for
both <= and >= rows the multiplier is >= 0 and vanishes on slack rows;
for = rows it is the signed sensitivity of the optimum to the rhs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

_PIVOT_TOL = 1e-10
_MAX_ITERS = 200000


@dataclass
class LinearProgram:
    c: np.ndarray
    a: np.ndarray
    senses: list[str]
    rhs: np.ndarray
    lower: np.ndarray | None = None  # default 0
    upper: np.ndarray | None = None  # default +inf

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        self.rhs = np.atleast_1d(np.asarray(self.rhs, dtype=np.float64))
        n = self.c.shape[0]
        if self.lower is None:
            self.lower = np.zeros(n)
        else:
            self.lower = np.asarray(self.lower, dtype=np.float64)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        else:
            self.upper = np.asarray(self.upper, dtype=np.float64)
        m = self.rhs.shape[0]
        if self.a.shape != (m, n):
            raise ValueError(f"A must be {(m, n)}, got {self.a.shape}")
        if len(self.senses) != m:
            raise ValueError("one sense per row required")
        for s in self.senses:
            if s not in ("<=", ">=", "="):
                raise ValueError(f"unknown sense {s!r}")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class LpSolution:
    status: str                      # optimal | infeasible | unbounded
    z: np.ndarray | None
    objective: float | None
    row_duals: np.ndarray | None
    dual_objective: float | None
    iterations: int
    residuals: dict = field(default_factory=dict)


def _pivot(tab: np.ndarray, cost: np.ndarray, basis: np.ndarray, row: int, col: int):
    piv = tab[row, col]
    tab[row] /= piv
    for i in range(tab.shape[0]):
        if i != row and tab[i, col] != 0.0:
            tab[i] -= tab[i, col] * tab[row]
    if cost[col] != 0.0:
        cost -= cost[col] * tab[row, :-1]
    basis[row] = col


def _iterate(tab: np.ndarray, cost: np.ndarray, basis: np.ndarray,
             allowed: np.ndarray) -> tuple[str, int]:
    """Run simplex iterations with Bland's rule until optimal or unbounded."""
    iters = 0
    n = tab.shape[1] - 1
    while True:
        entering = -1
        for j in range(n):
            if allowed[j] and cost[j] < -_PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return "optimal", iters
        col = tab[:, entering]
        best_ratio, leave = np.inf, -1
        for i in range(tab.shape[0]):
            if col[i] > _PIVOT_TOL:
                ratio = tab[i, -1] / col[i]
                if ratio < best_ratio - _PIVOT_TOL or (
                    abs(ratio - best_ratio) <= _PIVOT_TOL
                    and (leave < 0 or basis[i] < basis[leave])
                ):
                    best_ratio, leave = min(ratio, best_ratio), i
        if leave < 0:
            return "unbounded", iters
        _pivot(tab, cost, basis, leave, entering)
        iters += 1
        if iters > _MAX_ITERS:
            raise NumericalError("simplex iteration limit exceeded")


def _price_out(cost_full: np.ndarray, tab: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Reduced-cost row for the current basis."""
    cost = cost_full.astype(np.float64).copy()
    for i, j in enumerate(basis):
        if cost[j] != 0.0:
            cost -= cost[j] * tab[i, :-1]
    return cost


def solve_lp(lp: LinearProgram) -> LpSolution:
    m, n = lp.a.shape

    # --- to standard form ----------------------------------------------------
    # variable substitutions: shift finite lower bounds, flip upper-only vars,
    # split free vars; finite upper bounds (post-shift) become extra <= rows.
    cols = []
    std_c: list[float] = []
    offset = 0.0
    a_cols = []          # (std col, sign, original col)
    extra_rows = []      # (std col, bound value)

    def new_col(cval: float) -> int:
        std_c.append(cval)
        return len(std_c) - 1

    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            idx = new_col(lp.c[j])
            cols.append(("shift", idx, lo))
            offset += lp.c[j] * lo
            a_cols.append((idx, 1.0, j))
            if np.isfinite(hi):
                extra_rows.append((idx, hi - lo))
        elif np.isfinite(hi):
            idx = new_col(-lp.c[j])
            cols.append(("flip", idx, hi))
            offset += lp.c[j] * hi
            a_cols.append((idx, -1.0, j))
        else:
            ip = new_col(lp.c[j])
            im = new_col(-lp.c[j])
            cols.append(("free", ip, im))
            a_cols.append((ip, 1.0, j))
            a_cols.append((im, -1.0, j))

    n_struct = len(std_c)
    m_all = m + len(extra_rows)
    amat = np.zeros((m_all, n_struct))
    bvec = np.zeros(m_all)
    senses = list(lp.senses) + ["<="] * len(extra_rows)

    for idx, sign, j in a_cols:
        amat[:m, idx] += sign * lp.a[:, j]
    bvec[:m] = lp.rhs
    for j in range(n):
        kind = cols[j]
        if kind[0] in ("shift", "flip") and kind[2] != 0.0:
            bvec[:m] -= lp.a[:, j] * kind[2]
    for i, (idx, ub) in enumerate(extra_rows):
        amat[m + i, idx] = 1.0
        bvec[m + i] = ub

    # slack / surplus columns
    slack_cols = np.full(m_all, -1, dtype=np.int64)
    count = 0
    for i, s in enumerate(senses):
        if s in ("<=", ">="):
            slack_cols[i] = n_struct + count
            count += 1
    a_std = np.zeros((m_all, n_struct + count))
    a_std[:, :n_struct] = amat
    for i, s in enumerate(senses):
        if s == "<=":
            a_std[i, slack_cols[i]] = 1.0
        elif s == ">=":
            a_std[i, slack_cols[i]] = -1.0
    c_std = np.concatenate([np.asarray(std_c, dtype=np.float64), np.zeros(count)])

    # normalize rhs >= 0, remembering applied row signs
    row_sign = np.ones(m_all)
    neg = bvec < 0
    row_sign[neg] = -1.0
    a_std[neg] *= -1.0
    b_std = bvec * row_sign

    n_std = a_std.shape[1]
    rhs_scale = 1.0 + (float(np.max(np.abs(lp.rhs))) if m else 0.0)
    feas_tol = 1e-8 * rhs_scale

    # --- phase 1 ---------------------------------------------------------
    basis = np.full(m_all, -1, dtype=np.int64)
    need_art = []
    for i in range(m_all):
        j = slack_cols[i]
        if j >= 0 and a_std[i, j] == 1.0:
            basis[i] = j
        else:
            need_art.append(i)
    n_art = len(need_art)
    tab = np.zeros((m_all, n_std + n_art + 1))
    tab[:, :n_std] = a_std
    tab[:, -1] = b_std
    for k, i in enumerate(need_art):
        tab[i, n_std + k] = 1.0
        basis[i] = n_std + k

    kept_rows = np.arange(m_all)
    total_iters = 0
    if n_art > 0:
        cost1_full = np.zeros(n_std + n_art)
        cost1_full[n_std:] = 1.0
        cost1 = _price_out(cost1_full, tab, basis)
        allowed = np.ones(n_std + n_art, dtype=bool)
        _, iters = _iterate(tab, cost1, basis, allowed)
        total_iters += iters
        art_sum = sum(tab[i, -1] for i, j in enumerate(basis) if j >= n_std)
        if art_sum > feas_tol:
            return LpSolution("infeasible", None, None, None, None, total_iters)
        # drive remaining (degenerate) artificials out of the basis
        drop = []
        for i in range(len(basis)):
            if basis[i] >= n_std:
                piv_col = -1
                for j in range(n_std):
                    if abs(tab[i, j]) > _PIVOT_TOL:
                        piv_col = j
                        break
                if piv_col >= 0:
                    dummy = np.zeros(tab.shape[1] - 1)
                    _pivot(tab, dummy, basis, i, piv_col)
                else:
                    drop.append(i)  # redundant row
        if drop:
            keep = np.asarray([i for i in range(len(basis)) if i not in set(drop)],
                              dtype=np.int64)
            tab = tab[keep]
            basis = basis[keep]
            kept_rows = kept_rows[keep]

    # --- phase 2 ---------------------------------------------------------
    allowed = np.zeros(tab.shape[1] - 1, dtype=bool)
    allowed[:n_std] = True
    cost2 = _price_out(np.concatenate([c_std, np.zeros(tab.shape[1] - 1 - n_std)]),
                       tab, basis)
    status, iters = _iterate(tab, cost2, basis, allowed)
    total_iters += iters
    if status == "unbounded":
        return LpSolution("unbounded", None, None, None, None, total_iters)

    # --- recover primal ----------------------------------------------------
    x_std = np.zeros(n_std)
    for i, j in enumerate(basis):
        if j < n_std:
            x_std[j] = tab[i, -1]
    z = np.zeros(n)
    for j in range(n):
        kind = cols[j]
        if kind[0] == "shift":
            z[j] = kind[2] + x_std[kind[1]]
        elif kind[0] == "flip":
            z[j] = kind[2] - x_std[kind[1]]
        else:
            z[j] = x_std[kind[1]] - x_std[kind[2]]
    objective = float(c_std @ x_std + offset)

    # --- duals: solve B'y = c_B on the kept stdform rows --------------------
    bmat = a_std[kept_rows][:, basis]
    try:
        y_kept = np.linalg.solve(bmat.T, c_std[basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular basis when extracting duals: {exc}") from exc
    y = np.zeros(m_all)
    y[kept_rows] = y_kept
    dual_objective = float(b_std[kept_rows] @ y_kept + offset)

    eta = row_sign * y  # sensitivity w.r.t. the unflipped stdform rhs
    row_duals = np.empty(m)
    for i in range(m):
        row_duals[i] = -eta[i] if lp.senses[i] == "<=" else eta[i]

    # --- certify -------------------------------------------------------------
    act = lp.a @ z if m else np.zeros(0)
    viol = 0.0
    for i in range(m):
        if lp.senses[i] == "<=":
            viol = max(viol, act[i] - lp.rhs[i])
        elif lp.senses[i] == ">=":
            viol = max(viol, lp.rhs[i] - act[i])
        else:
            viol = max(viol, abs(act[i] - lp.rhs[i]))
    fin_lo = np.isfinite(lp.lower)
    fin_hi = np.isfinite(lp.upper)
    if fin_lo.any():
        viol = max(viol, float(np.max(lp.lower[fin_lo] - z[fin_lo])))
    if fin_hi.any():
        viol = max(viol, float(np.max(z[fin_hi] - lp.upper[fin_hi])))
    gap = abs(objective - dual_objective)
    cs = 0.0
    for i in range(m):
        if lp.senses[i] != "=":
            cs = max(cs, abs(row_duals[i]) * abs(act[i] - lp.rhs[i]))
    resid = {"feasibility": viol, "duality_gap": gap,
             "complementary_slackness": cs}

    if viol > feas_tol:
        raise NumericalError(f"LP feasibility residual {viol:.3e} exceeds tolerance")
    if gap > 1e-7 * (1.0 + abs(objective)):
        raise NumericalError(f"LP duality gap {gap:.3e} exceeds tolerance")
    if cs > 1e-7 * (1.0 + abs(objective)):
        raise NumericalError(f"LP complementary slackness {cs:.3e} exceeds tolerance")

    return LpSolution("optimal", z, objective, row_duals, dual_objective,
                      total_iters, resid)
