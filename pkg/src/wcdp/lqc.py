"""Constrained linear-quadratic benchmark (a minimization problem).

N scalar subsystems x_{t+1} = a x_t + b u_t + w_t with independent
Gaussian noise; the cost is control energy r u^2 each period plus a
terminal state cost q x_T^2, and the linking constraint requires the
total energy sum_n u_n^2 to reach at least budget_t every period
(actuators that must dissipate a minimum combined effort). Prices
lam_t in [0, min r - 0.001) subtract from the control cost and leave a
diagonal Riccati recursion per coordinate, giving a lower bound

    J(lam) = sum_n k_0^n x_0^n^2 + sum_t sum_n k_{t+1}^n sigma_n^2
             + sum_t lam_t budget_t.

Scenario lower bounds fix the noise path, subtract the quadratic
penalty built from the price-optimal value function, and solve the
deterministic inner problem with per-period multipliers mu_t by an
affine-quadratic backward recursion per coordinate. The policy side
projects the priced linear feedback radially onto the energy sphere
whenever it falls short, with the unconstrained run on the same noise
as a control variate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .model import BoundEstimate

_MASK64 = (1 << 64) - 1
_PRICE_MARGIN = 1e-3

LQC_CSV_HEADER = ["N", "b", "T", "proj_value", "proj_se", "unconstrained",
                  "lag_bound", "info_bound", "info_se", "gap1", "gap2",
                  "seed"]


@dataclass
class LqcModel:
    horizon: int            # controls at t = 0..T-1, terminal cost at T
    a: np.ndarray           # (N,) state gains
    b: np.ndarray           # (N,) control gains
    q: np.ndarray           # (N,) terminal state costs
    r: np.ndarray           # (N,) control costs
    sigma2: np.ndarray      # (N,) noise variances
    x0: np.ndarray          # (N,)
    budget: np.ndarray      # (T,) minimum total control energy per period

    def __post_init__(self):
        for name in ("a", "b", "q", "r", "sigma2", "x0", "budget"):
            setattr(self, name, np.atleast_1d(
                np.asarray(getattr(self, name), dtype=np.float64)))
        if self.budget.shape == (1,) and self.horizon != 1:
            self.budget = np.full(self.horizon, float(self.budget[0]))

    @property
    def n_coords(self) -> int:
        return self.a.shape[0]

    def price_cap(self) -> float:
        return float(self.r.min()) - _PRICE_MARGIN


def validate_lqc(model: LqcModel):
    N = model.n_coords
    if model.horizon < 1:
        raise ConfigError("horizon must be at least 1")
    for name in ("a", "b", "q", "r", "sigma2", "x0"):
        if getattr(model, name).shape != (N,):
            raise ConfigError(f"{name} must have one entry per coordinate")
    if model.budget.shape != (model.horizon,):
        raise ConfigError("budget must have one entry per control period")
    if np.any(model.q < 0) or np.any(model.sigma2 < 0) or np.any(model.budget < 0):
        raise ConfigError("q, sigma2, and budget must be nonnegative")
    if np.any(model.r <= _PRICE_MARGIN):
        raise ConfigError("control costs must exceed the price margin")
    if np.any(model.b == 0.0):
        raise ConfigError("control gains must be nonzero")


def generate_lqc(n_coords: int, horizon: int, budget: float,
                 seed: int) -> LqcModel:
    rng = np.random.default_rng(seed)
    model = LqcModel(
        horizon=horizon,
        a=rng.uniform(0.6, 1.3, n_coords),
        b=rng.uniform(0.5, 1.5, n_coords),
        q=rng.uniform(0.5, 2.0, n_coords),
        r=np.ones(n_coords),
        sigma2=rng.uniform(0.1, 0.5, n_coords),
        x0=rng.uniform(-1.0, 1.0, n_coords),
        budget=np.full(horizon, float(budget)),
    )
    validate_lqc(model)
    return model


# ---------------------------------------------------------------------------
# priced Riccati recursion


def riccati(model: LqcModel, lam) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate cost-to-go coefficients and feedback gains.

    Returns (k, gains): k[n, t] such that the priced cost-to-go is
    k x^2 plus constants, with k[:, T] = q; gains g[n, t] give the
    priced-optimal control u = -g x. Prices must stay below every r.
    """
    T = model.horizon
    lam = np.asarray(lam, dtype=np.float64).reshape(T)
    if np.any(lam < 0) or np.any(lam > model.price_cap() + 1e-12):
        raise ConfigError("lam must lie in [0, min r - margin]")
    N = model.n_coords
    k = np.zeros((N, T + 1))
    g = np.zeros((N, T))
    k[:, T] = model.q
    for t in range(T - 1, -1, -1):
        rt = model.r - lam[t]
        den = model.b ** 2 * k[:, t + 1] + rt
        k[:, t] = model.a ** 2 * k[:, t + 1] * rt / den
        g[:, t] = model.a * model.b * k[:, t + 1] / den
    return k, g


def _riccati_scalar(a, b, q, r, horizon, lam):
    """Reference scalar loop; the vectorized recursion must match it."""
    ks = [0.0] * (horizon + 1)
    ks[horizon] = q
    for t in range(horizon - 1, -1, -1):
        rt = r - lam[t]
        ks[t] = a * a * ks[t + 1] * rt / (b * b * ks[t + 1] + rt)
    return ks


def lqc_bound_value(model: LqcModel, lam, k: np.ndarray | None = None) -> float:
    """Lower bound J(lam) at the model's start state."""
    T = model.horizon
    lam = np.asarray(lam, dtype=np.float64).reshape(T)
    if k is None:
        k, _ = riccati(model, lam)
    total = float(k[:, 0] @ (model.x0 ** 2))
    for t in range(T):
        total += float(k[:, t + 1] @ model.sigma2)
        total += float(lam[t] * model.budget[t])
    return total


def lqc_lambda_search(model: LqcModel, max_iters: int = 300,
                      s0: float = 0.2, kappa: float = 30.0,
                      lam0=None):
    """Maximize the concave price bound by projected gradient ascent.

    The exact gradient entry for period t is budget_t - E[sum_n u_t^2]
    under the priced closed loop, with second moments propagated by
    m_{t+1} = (a - b g_t)^2 m_t + sigma^2. Returns (lam, value, trace).
    """
    T = model.horizon
    cap = model.price_cap()
    if cap < 0:
        raise ConfigError("price cap is negative; increase control costs")
    lam = (np.zeros(T) if lam0 is None
           else np.asarray(lam0, dtype=np.float64).reshape(T).copy())
    best_val = -np.inf
    best_lam = lam.copy()
    trace = []
    for it in range(max_iters):
        k, g = riccati(model, lam)
        val = lqc_bound_value(model, lam, k=k)
        trace.append(val)
        if val > best_val:
            best_val = val
            best_lam = lam.copy()
        m = model.x0 ** 2
        grad = np.empty(T)
        for t in range(T):
            usage = float((g[:, t] ** 2) @ m)
            grad[t] = model.budget[t] - usage
            m = (model.a - model.b * g[:, t]) ** 2 * m + model.sigma2
        step = s0 / (1.0 + it / kappa)
        lam = np.clip(lam + step * grad, 0.0, cap)
    return best_lam, best_val, np.asarray(trace)


# ---------------------------------------------------------------------------
# policy side: radial projection onto the energy sphere


def lqc_noise(model: LqcModel, seed: int, path: int) -> np.ndarray:
    """Noise draws w[t, n] for one path, from a counter-based stream."""
    gen = np.random.Generator(np.random.Philox(key=[seed & _MASK64,
                                                    path & _MASK64]))
    return gen.standard_normal((model.horizon, model.n_coords)) \
        * np.sqrt(model.sigma2)


def _project_energy(u: np.ndarray, floor: float) -> np.ndarray:
    """Radially rescale u up to the sphere sum u^2 = floor when short."""
    s = float(u @ u)
    if s >= floor:
        return u
    if s == 0.0:
        return np.full(u.shape, np.sqrt(floor / u.shape[0]))
    return u * np.sqrt(floor / s)


def projection_policy_value(model: LqcModel, lam, n_paths: int,
                            seed: int) -> BoundEstimate:
    """Expected cost of the projected priced feedback, with the
    unconstrained run on the same noise as a control variate.

    Each path simulates (i) u = -g x projected onto the energy sphere
    and (ii) the unpriced, unconstrained feedback; the reported sample
    is cost_i - (cost_ii - J(0)), which is unbiased for the policy cost
    and exactly J(0) path by path when the budget is zero.
    """
    if n_paths < 1:
        raise ConfigError("n_paths must be positive")
    T = model.horizon
    _, g_pol = riccati(model, np.asarray(lam, dtype=np.float64).reshape(T))
    _, g_unc = riccati(model, np.zeros(T))
    j0 = lqc_bound_value(model, np.zeros(T))
    samples = np.empty(n_paths)
    for p in range(n_paths):
        w = lqc_noise(model, seed, p)
        x_p = model.x0.copy()
        x_u = model.x0.copy()
        cost_p = 0.0
        cost_u = 0.0
        for t in range(T):
            u_p = _project_energy(-g_pol[:, t] * x_p, float(model.budget[t]))
            u_u = -g_unc[:, t] * x_u
            cost_p += float(model.r @ (u_p ** 2))
            cost_u += float(model.r @ (u_u ** 2))
            x_p = model.a * x_p + model.b * u_p + w[t]
            x_u = model.a * x_u + model.b * u_u + w[t]
        cost_p += float(model.q @ (x_p ** 2))
        cost_u += float(model.q @ (x_u ** 2))
        samples[p] = cost_p - (cost_u - j0)
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    return BoundEstimate(value=mean, se=se, n_samples=n_paths, seed=seed,
                         bias_bound=0.0, samples=samples)


# ---------------------------------------------------------------------------
# scenario lower bound: penalized deterministic inner problem


def relaxed_objective(model: LqcModel, k: np.ndarray, mu, w: np.ndarray,
                      u: np.ndarray) -> float:
    """Direct forward evaluation of the penalized relaxed inner objective.

    k is the (N, T+1) coefficient table whose quadratic defines the
    penalty; mu prices the energy floors. Quadratic in u, so it doubles
    as the ground truth for the backward recursion in tests.
    """
    T = model.horizon
    mu = np.asarray(mu, dtype=np.float64).reshape(T)
    u = np.asarray(u, dtype=np.float64).reshape(T, model.n_coords)
    x = model.x0.copy()
    total = 0.0
    for t in range(T):
        drift = model.a * x + model.b * u[t]
        total += float((model.r - mu[t]) @ (u[t] ** 2))
        total += float(mu[t] * model.budget[t])
        # penalty: -2 drift'K w - w'K w + tr(K Sigma), diagonal K
        kk = k[:, t + 1]
        total += float(-2.0 * (drift * kk) @ w[t]
                       - (kk * w[t]) @ w[t]
                       + kk @ model.sigma2)
        x = drift + w[t]
    total += float(model.q @ (x ** 2))
    return total


def lqc_relaxed_inner(model: LqcModel, k: np.ndarray, mu,
                      w: np.ndarray):
    """Exact minimum of the penalized inner problem at fixed mu.

    Backward affine-quadratic recursion per coordinate (value
    alpha x^2 + beta x + gamma), then a forward pass for the minimizing
    controls. Returns (value, controls (T, N), gradient in mu (T,)).
    """
    T = model.horizon
    N = model.n_coords
    mu = np.asarray(mu, dtype=np.float64).reshape(T)
    if np.any(mu < 0) or np.any(mu > model.price_cap() + 1e-12):
        raise ConfigError("mu must lie in [0, min r - margin]")
    a, b = model.a, model.b
    alphas = np.zeros((T + 1, N))
    betas = np.zeros((T + 1, N))
    gammas = np.zeros((T + 1, N))
    alphas[T] = model.q
    for t in range(T - 1, -1, -1):
        al, be, ga = alphas[t + 1], betas[t + 1], gammas[t + 1]
        kk = k[:, t + 1]
        rt = model.r - mu[t]
        d = rt + al * b ** 2
        # linear coefficient of u at fixed x: 2 al a b x + b c1
        c1 = 2.0 * al * w[t] + be - 2.0 * kk * w[t]
        alphas[t] = al * a ** 2 * rt / d
        betas[t] = a * c1 * rt / d
        gammas[t] = (al * w[t] ** 2 + be * w[t] - kk * w[t] ** 2
                     + kk * model.sigma2 + ga
                     - (b ** 2) * c1 ** 2 / (4.0 * d)
                     + mu[t] * model.budget[t] / N)
    value = float(alphas[0] @ (model.x0 ** 2) + betas[0] @ model.x0
                  + gammas[0].sum())
    controls = np.empty((T, N))
    grad = np.empty(T)
    x = model.x0.copy()
    for t in range(T):
        al, be = alphas[t + 1], betas[t + 1]
        kk = k[:, t + 1]
        rt = model.r - mu[t]
        d = rt + al * b ** 2
        c1 = 2.0 * al * w[t] + be - 2.0 * kk * w[t]
        u = -(2.0 * al * a * b * x + b * c1) / (2.0 * d)
        controls[t] = u
        grad[t] = model.budget[t] - float(u @ u)
        x = model.a * x + model.b * u + w[t]
    return value, controls, grad


def lqc_inner_ascent(model: LqcModel, k: np.ndarray, w: np.ndarray,
                     mu0, max_iters: int = 80, tol: float = 1e-3,
                     s0: float = 0.3, kappa: float = 15.0):
    """Maximize the relaxed inner value over the multiplier box.

    Projected gradient ascent with normalized steps and the best iterate
    kept; stops early once 15 iterations stop improving by tol. Any mu
    yields a valid scenario lower bound, so accuracy here affects only
    tightness, never validity. Returns (value, mu).
    """
    cap = model.price_cap()
    mu = np.clip(np.asarray(mu0, dtype=np.float64).reshape(model.horizon),
                 0.0, cap)
    best = -np.inf
    best_mu = mu.copy()
    history = []
    for it in range(max_iters):
        val, _, grad = lqc_relaxed_inner(model, k, mu, w)
        if val > best:
            best = val
            best_mu = mu.copy()
        history.append(best)
        if len(history) > 15 and best - history[-16] < tol:
            break
        gn = float(np.max(np.abs(grad)))
        if gn < 1e-14:
            break
        step = s0 * cap / (1.0 + it / kappa)
        mu = np.clip(mu + step * grad / gn, 0.0, cap)
    return best, best_mu


def estimate_lqc_info_bound(model: LqcModel, lam, n_scenarios: int,
                            seed: int, max_iters: int = 80,
                            tol: float = 1e-3) -> BoundEstimate:
    """Average scenario lower bound with the priced penalty.

    Starting the multiplier ascent at the constant price path makes
    every sample at least J(lam) (that start evaluates to exactly
    J(lam) regardless of the noise), so the estimate dominates the
    price bound by construction.
    """
    if n_scenarios < 1:
        raise ConfigError("n_scenarios must be positive")
    T = model.horizon
    lam = np.asarray(lam, dtype=np.float64).reshape(T)
    k, _ = riccati(model, lam)
    samples = np.empty(n_scenarios)
    for i in range(n_scenarios):
        w = lqc_noise(model, seed, i)
        val, _ = lqc_inner_ascent(model, k, w, lam, max_iters=max_iters,
                                  tol=tol)
        samples[i] = val
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / np.sqrt(n_scenarios)) if n_scenarios > 1 else 0.0
    return BoundEstimate(value=mean, se=se, n_samples=n_scenarios, seed=seed,
                         bias_bound=0.0, samples=samples)


# ---------------------------------------------------------------------------
# benchmark table


def lqc_row(n_coords: int, budget: float, horizon: int, seed: int,
            n_paths: int = 1000, n_scenarios: int = 500) -> dict:
    model = generate_lqc(n_coords, horizon, budget, seed)
    lam, lag, _ = lqc_lambda_search(model)
    unc = lqc_bound_value(model, np.zeros(horizon))
    pol = projection_policy_value(model, lam, n_paths=n_paths, seed=seed)
    info = estimate_lqc_info_bound(model, lam, n_scenarios=n_scenarios,
                                   seed=seed)
    gap1 = _ratio(pol.value - info.value, pol.value)
    gap2 = _ratio(info.value - lag, pol.value - lag)
    return {
        "N": n_coords,
        "b": budget,
        "T": horizon,
        "proj_value": pol.value,
        "proj_se": pol.se,
        "unconstrained": unc,
        "lag_bound": lag,
        "info_bound": info.value,
        "info_se": info.se,
        "gap1": gap1,
        "gap2": gap2,
        "seed": seed,
    }


def _ratio(num: float, den: float):
    if abs(den) < 1e-9 * max(1.0, abs(num)):
        return "n/a"
    return num / den


def run_lqc_table(coord_counts, budgets, horizon: int, seed: int,
                  n_paths: int = 1000, n_scenarios: int = 500,
                  row_runner=None) -> list[dict]:
    """Rows for every (coords, budget) combination, in listed order."""
    specs = []
    i = 0
    for n in coord_counts:
        for budget in budgets:
            specs.append((n, budget, seed + i))
            i += 1
    thunks = [
        (lambda n=n, bb=bb, s=s: lqc_row(n, bb, horizon, s, n_paths=n_paths,
                                         n_scenarios=n_scenarios))
        for n, bb, s in specs
    ]
    if row_runner is None:
        return [t() for t in thunks]
    return list(row_runner(thunks))


def write_lqc_csv(rows: list[dict], path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LQC_CSV_HEADER)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in LQC_CSV_HEADER])


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")
