"""Compiled inner-problem dynamic programs.

These loops run once per scenario (and once per subgradient iteration for
the relaxed problem), so they are kept in nopython numba. All arrays are
plain contiguous float64/int64; shapes follow the CSR layouts built in
model.JointSpace and penalty.SubproblemPairs.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def joint_inner_backward(g, offsets, next_state, x0, n_periods):
    """Max total integrand over admissible action paths, exact over joint states.

    g: (P,) per-pair integrand; offsets: (K+1,) CSR by state;
    next_state: (n_periods-1, P) deterministic next joint state;
    returns (value, chosen pair per period along the optimal path).
    """
    K = offsets.shape[0] - 1
    tau = n_periods - 1
    w_next = np.zeros(K)
    arg = np.empty((n_periods, K), dtype=np.int64)
    for t in range(tau, -1, -1):
        w_cur = np.empty(K)
        for k in range(K):
            best = -1.0e300
            bestp = -1
            for p in range(offsets[k], offsets[k + 1]):
                v = g[p]
                if t < tau:
                    v += w_next[next_state[t, p]]
                if v > best:
                    best = v
                    bestp = p
            w_cur[k] = best
            arg[t, k] = bestp
        w_next = w_cur
    chosen = np.empty(n_periods, dtype=np.int64)
    k = x0
    for t in range(n_periods):
        p = arg[t, k]
        chosen[t] = p
        if t < tau:
            k = next_state[t, p]
    return w_next[x0], chosen


@njit(cache=True)
def relaxed_backward(g, w, row_offsets, next_row, mu, first_row, x0_locals):
    """Per-subproblem relaxed DPs under multiplier path mu.

    Maximizes sum_t [g - mu_t'w] independently per subproblem along the
    scenario's deterministic transitions. Rows index (subproblem, state)
    globally; returns (sum of subproblem values from the start states,
    chosen pair per (period, subproblem)).
    """
    n_periods, L = mu.shape
    T = n_periods - 1
    R = row_offsets.shape[0] - 1
    w_next = np.zeros(R)
    arg = np.empty((n_periods, R), dtype=np.int64)
    for t in range(T, -1, -1):
        w_cur = np.empty(R)
        for r in range(R):
            best = -1.0e300
            bestp = -1
            for p in range(row_offsets[r], row_offsets[r + 1]):
                v = g[p]
                for l in range(L):
                    v -= mu[t, l] * w[p, l]
                if t < T:
                    v += w_next[next_row[t, p]]
                if v > best:
                    best = v
                    bestp = p
            w_cur[r] = best
            arg[t, r] = bestp
        w_next = w_cur
    N = x0_locals.shape[0]
    chosen = np.empty((n_periods, N), dtype=np.int64)
    total = 0.0
    for n in range(N):
        r = first_row[n] + x0_locals[n]
        total += w_next[r]
        for t in range(n_periods):
            p = arg[t, r]
            chosen[t, n] = p
            if t < T:
                r = next_row[t, p]
    return total, chosen


@njit(cache=True)
def relaxed_eval(g, w, row_offsets, next_row, mu, first_row, x0_locals,
                 b_vec, const_term):
    """Relaxed inner value, trajectory choices, and a subgradient in mu.

    value = sum_n DP_n + sum_t mu_t'b + const_term;
    subgradient rows are b minus the weights consumed along the maximizing
    per-subproblem trajectories.
    """
    total, chosen = relaxed_backward(g, w, row_offsets, next_row, mu,
                                     first_row, x0_locals)
    n_periods, L = mu.shape
    N = x0_locals.shape[0]
    val = total + const_term
    sg = np.empty((n_periods, L))
    for t in range(n_periods):
        for l in range(L):
            s = b_vec[l]
            val += mu[t, l] * b_vec[l]
            for n in range(N):
                s -= w[chosen[t, n], l]
            sg[t, l] = s
    return val, sg, chosen


@njit(cache=True)
def relaxed_minimize_kernel(g, w, row_offsets, next_row, first_row, x0_locals,
                            b_vec, const_term, mu0, steps, stop_tol):
    """Projected subgradient descent over mu >= 0, best iterate kept.

    steps[k] is the step applied after evaluating iterate k; the trace
    holds the raw objective at each evaluated iterate.
    """
    n_periods, L = mu0.shape
    mu = mu0.copy()
    best_mu = mu0.copy()
    max_iters = steps.shape[0]
    trace = np.empty(max_iters)
    best = 1.0e300
    n_done = 0
    for k in range(max_iters):
        val, sg, _ = relaxed_eval(g, w, row_offsets, next_row, mu, first_row,
                                  x0_locals, b_vec, const_term)
        trace[k] = val
        n_done = k + 1
        if val < best:
            best = val
            best_mu[:] = mu
        gmax = 0.0
        for t in range(n_periods):
            for l in range(L):
                a = abs(sg[t, l])
                if a > gmax:
                    gmax = a
        if gmax <= stop_tol:
            break
        s = steps[k]
        for t in range(n_periods):
            for l in range(L):
                v = mu[t, l] - s * sg[t, l]
                mu[t, l] = v if v > 0.0 else 0.0
    return best, best_mu, trace[:n_done]
