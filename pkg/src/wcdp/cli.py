"""Config-driven experiment runner.

Two subcommands:

  wcdp run --config cfg.json --out DIR [--threads K] [--seed S]
  wcdp compare RUNDIR [RUNDIR ...] [--out DIR]

``run`` loads or generates a model, computes the quantities the mode
asks for, and writes ``results.csv`` plus ``manifest.json`` into the
output directory. Scalar modes share one results schema

    quantity,anchor,value,se,n_samples,seed

with values formatted to 12 significant digits, so identical configs
and seeds reproduce the file byte for byte. Table modes (bandit-table,
lqc-table) write their benchmark CSVs instead. ``compare`` reads
several run directories for the same model and checks the bound
orderings with three-standard-error slack.

Exit codes: 0 ok, 2 configuration error, 3 guard violation,
4 numerical failure (including ordering violations in compare).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .errors import ConfigError, GuardError, NumericalError
from .model import (InitialDistribution, WeaklyCoupledModel,
                    joint_value_iteration, load_model, model_fingerprint,
                    random_weakly_coupled, state_tuple)
from .penalty import JointTablePenalty
from .lagrangian import (SubgradientConfig, alp_bound, optimal_lambda_lp)
from .inforelax import estimate_info_bound
from .practical import estimate_practical_bound, truncation_chain
from .finite_horizon import (fh_info_bound, fh_lambda_search,
                             fh_model_fingerprint, fh_practical_bound,
                             fh_value, load_fh_model, random_fh_model)
from .bandit import generate_bandit, run_bandit_table, write_bandit_csv
from .lqc import run_lqc_table, write_lqc_csv

RESULTS_HEADER = ["quantity", "anchor", "value", "se", "n_samples", "seed"]

_COMMON_KEYS = {"mode", "out", "seed"}
_MODE_KEYS = {
    "exact": {"model", "generator", "x0"},
    "lagrangian": {"model", "generator", "x0", "dist"},
    "alp": {"model", "generator", "x0", "dist", "max_pairs"},
    "info": {"model", "generator", "x0", "dist", "penalty", "n_scenarios",
             "tau_cap", "max_pairs"},
    "practical": {"model", "generator", "x0", "dist", "penalty",
                  "n_scenarios", "tau_cap", "truncation", "subgradient"},
    "finite-horizon": {"model", "generator", "x0", "n_scenarios",
                       "subgradient"},
    "bandit-table": {"arm_counts", "discounts", "n_scenarios", "n_paths",
                     "n_states"},
    "lqc-table": {"coord_counts", "budgets", "horizon", "n_paths",
                  "n_scenarios"},
}
_STOCHASTIC_MODES = {"info", "practical", "finite-horizon", "bandit-table",
                     "lqc-table"}

_GENERATOR_KEYS = {
    "random": {"n_subproblems", "n_states", "n_actions", "n_links",
               "discount", "seed"},
    "bandit": {"n_arms", "n_states", "discount", "seed"},
    "fh-random": {"n_subproblems", "n_states", "n_actions", "horizon",
                  "n_links", "seed"},
}


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    mode = cfg.get("mode")
    if mode not in _MODE_KEYS:
        raise ConfigError(f"unknown or missing mode: {mode!r}")
    allowed = _COMMON_KEYS | _MODE_KEYS[mode]
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys for mode {mode}: {unknown}")
    if mode in _STOCHASTIC_MODES and cfg.get("seed") is None:
        raise ConfigError(f"mode {mode} requires a seed")
    return cfg


def _build_model(cfg: dict, finite: bool = False):
    has_file = "model" in cfg
    has_gen = "generator" in cfg
    if has_file == has_gen:
        raise ConfigError("exactly one of model / generator must be given")
    if has_file:
        loader = load_fh_model if finite else load_model
        return loader(cfg["model"])
    gen = cfg["generator"]
    if not isinstance(gen, dict) or "kind" not in gen:
        raise ConfigError("generator must be an object with a kind")
    kind = gen["kind"]
    if kind not in _GENERATOR_KEYS:
        raise ConfigError(f"unknown generator kind: {kind!r}")
    if finite != (kind == "fh-random"):
        raise ConfigError(f"generator {kind} does not fit mode")
    params = {k: v for k, v in gen.items() if k != "kind"}
    missing = _GENERATOR_KEYS[kind] - set(params)
    extra = set(params) - _GENERATOR_KEYS[kind]
    if missing or extra:
        raise ConfigError(f"generator {kind}: missing {sorted(missing)}, "
                          f"unknown {sorted(extra)}")
    if kind == "random":
        return random_weakly_coupled(**params)
    if kind == "bandit":
        model, _ = generate_bandit(**params)
        return model
    return random_fh_model(**params)


def _parse_x0(cfg: dict, model, required: bool = False):
    if "x0" not in cfg:
        if required:
            raise ConfigError("this mode requires x0")
        return None
    x0 = tuple(int(v) for v in cfg["x0"])
    sizes = model.state_sizes
    if len(x0) != len(sizes):
        raise ConfigError("x0 must have one entry per subproblem")
    for n, v in enumerate(x0):
        if not 0 <= v < sizes[n]:
            raise ConfigError(f"x0[{n}] out of range")
    return x0


def _parse_dist(cfg: dict, model, x0) -> InitialDistribution:
    spec = cfg.get("dist")
    if spec is None:
        if x0 is None:
            raise ConfigError("need dist or x0")
        return InitialDistribution.point(model, x0)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("dist must be an object with a kind")
    kind = spec["kind"]
    extra = set(spec) - {"kind", "x0"}
    if extra:
        raise ConfigError(f"unknown dist keys: {sorted(extra)}")
    if kind == "uniform":
        return InitialDistribution.uniform(model)
    if kind == "point":
        pt = spec.get("x0", x0)
        if pt is None:
            raise ConfigError("point dist needs x0")
        return InitialDistribution.point(model, tuple(int(v) for v in pt))
    raise ConfigError(f"unknown dist kind: {kind!r}")


def _parse_subgradient(cfg: dict) -> SubgradientConfig | None:
    spec = cfg.get("subgradient")
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("subgradient must be an object")
    try:
        return SubgradientConfig(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad subgradient parameters: {exc}") from exc


def _positive_int(cfg: dict, key: str) -> int:
    if key not in cfg:
        raise ConfigError(f"missing {key}")
    v = cfg[key]
    if not isinstance(v, int) or v < 1:
        raise ConfigError(f"{key} must be a positive integer")
    return v


def _penalty_from(cfg: dict, model, dist, allow_joint: bool):
    choice = cfg.get("penalty", "lagrangian")
    if choice == "lagrangian":
        bound, _ = optimal_lambda_lp(model, dist)
        return bound.penalty()
    if choice == "alp":
        return alp_bound(model, dist,
                         **_opt_kwargs(cfg, ["max_pairs"])).penalty()
    if choice == "exact-joint" and allow_joint:
        sol = joint_value_iteration(model)
        return JointTablePenalty(values=sol.values)
    raise ConfigError(f"unsupported penalty choice: {choice!r}")


def _opt_kwargs(cfg: dict, keys) -> dict:
    return {k: cfg[k] for k in keys if k in cfg}


class _Results:
    """Accumulates uniform result rows and writes them deterministically."""

    def __init__(self):
        self.rows = []

    def add(self, quantity: str, anchor, value: float, se: float = 0.0,
            n_samples: int = 1, seed=""):
        self.rows.append([quantity, str(anchor), _g(value), _g(se),
                          str(int(n_samples)), "" if seed == "" else str(int(seed))])

    def write(self, path: str):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(RESULTS_HEADER) + "\n")
            for row in self.rows:
                fh.write(",".join(_csv_quote(c) for c in row) + "\n")


def _g(v) -> str:
    return format(float(v), ".12g")


def _csv_quote(cell: str) -> str:
    if "," in cell or '"' in cell:
        return '"' + cell.replace('"', '""') + '"'
    return cell


# ---------------------------------------------------------------------------
# run modes


def _run_exact(cfg, res: _Results):
    model = _build_model(cfg)
    sol = joint_value_iteration(model)
    x0 = _parse_x0(cfg, model)
    if model.joint_state_count <= 1024:
        for k in range(model.joint_state_count):
            res.add("exact_value", state_tuple(model, k), sol.values[k])
    elif x0 is None:
        raise ConfigError("x0 required when the joint space is large")
    if x0 is not None:
        from .model import state_index
        res.add("exact_value_x0", x0, sol.values[state_index(model, x0)])
    res.add("bellman_residual", "model", sol.bellman_residual)
    return model_fingerprint(model)


def _run_lagrangian(cfg, res: _Results):
    model = _build_model(cfg)
    x0 = _parse_x0(cfg, model)
    dist = _parse_dist(cfg, model, x0)
    bound, lp = optimal_lambda_lp(model, dist)
    res.add("lagrangian_objective", "dist", lp.objective)
    for i, v in enumerate(bound.lam):
        res.add("lambda_star", f"l{i}", v)
    if x0 is not None:
        res.add("lagrangian_bound", x0, bound.value(x0))
    return model_fingerprint(model)


def _run_alp(cfg, res: _Results):
    model = _build_model(cfg)
    x0 = _parse_x0(cfg, model)
    dist = _parse_dist(cfg, model, x0)
    bound = alp_bound(model, dist, **_opt_kwargs(cfg, ["max_pairs"]))
    res.add("alp_objective", "dist", bound.objective)
    if x0 is not None:
        res.add("alp_bound", x0, bound.value(x0))
    return model_fingerprint(model)


def _run_info(cfg, res: _Results, seed: int):
    model = _build_model(cfg)
    x0 = _parse_x0(cfg, model, required=True)
    dist = _parse_dist(cfg, model, x0)
    penalty = _penalty_from(cfg, model, dist, allow_joint=True)
    est = estimate_info_bound(model, penalty, x0,
                              _positive_int(cfg, "n_scenarios"), seed,
                              **_opt_kwargs(cfg, ["tau_cap", "max_pairs"]))
    res.add("info_bound", x0, est.value, est.se, est.n_samples, est.seed)
    res.add("info_bias_bound", x0, est.bias_bound)
    from .penalty import joint_value
    res.add("penalty_value", x0, joint_value(model, penalty, x0))
    return model_fingerprint(model)


def _run_practical(cfg, res: _Results, seed: int):
    model = _build_model(cfg)
    x0 = _parse_x0(cfg, model, required=True)
    dist = _parse_dist(cfg, model, x0)
    penalty = _penalty_from(cfg, model, dist, allow_joint=False)
    n = _positive_int(cfg, "n_scenarios")
    sg = _parse_subgradient(cfg)
    horizons = cfg.get("truncation")
    if horizons is None:
        est = estimate_practical_bound(model, penalty, x0, n, seed, config=sg,
                                       **_opt_kwargs(cfg, ["tau_cap"]))
        res.add("practical_bound", x0, est.value, est.se, est.n_samples,
                est.seed)
    else:
        chain = truncation_chain(model, penalty, x0, horizons, n, seed,
                                 config=sg, **_opt_kwargs(cfg, ["tau_cap"]))
        for h, est in zip(horizons, chain):
            res.add(f"practical_bound_T{h}", x0, est.value, est.se,
                    est.n_samples, est.seed)
        est = chain[-1]
        res.add("practical_bound", x0, est.value, est.se, est.n_samples,
                est.seed)
    res.add("practical_bias_bound", x0, est.bias_bound)
    return model_fingerprint(model)


def _run_finite_horizon(cfg, res: _Results, seed: int):
    model = _build_model(cfg, finite=True)
    x0 = _parse_x0(cfg, model, required=True)
    n = _positive_int(cfg, "n_scenarios")
    sol = fh_value(model)
    res.add("fh_exact", x0, sol.value(model, x0))
    bound, _ = fh_lambda_search(model, x0, config=_parse_subgradient(cfg))
    res.add("fh_lagrangian", x0, bound.value(x0))
    penalty = bound.penalty()
    info = fh_info_bound(model, penalty, x0, n, seed)
    res.add("fh_info", x0, info.value, info.se, info.n_samples, info.seed)
    prac = fh_practical_bound(model, penalty, x0, n, seed)
    res.add("fh_practical", x0, prac.value, prac.se, prac.n_samples,
            prac.seed)
    return fh_model_fingerprint(model)


def _table_runner(threads: int):
    if threads <= 1:
        return None

    def runner(thunks):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda t: t(), thunks))

    return runner


def _run_bandit_table(cfg, out_dir: str, seed: int, threads: int):
    rows = run_bandit_table(
        cfg.get("arm_counts", [2, 5]),
        cfg.get("discounts", [0.9]),
        seed,
        n_scenarios=cfg.get("n_scenarios", 500),
        n_paths=cfg.get("n_paths", 500),
        n_states=cfg.get("n_states", 4),
        row_runner=_table_runner(threads),
    )
    write_bandit_csv(rows, os.path.join(out_dir, "results.csv"))


def _run_lqc_table(cfg, out_dir: str, seed: int, threads: int):
    rows = run_lqc_table(
        cfg.get("coord_counts", [1, 2]),
        cfg.get("budgets", [1.0]),
        horizon=cfg.get("horizon", 5),
        seed=seed,
        n_paths=cfg.get("n_paths", 1000),
        n_scenarios=cfg.get("n_scenarios", 500),
        row_runner=_table_runner(threads),
    )
    write_lqc_csv(rows, os.path.join(out_dir, "results.csv"))


def run_experiment(cfg: dict, out_dir: str, threads: int = 1) -> dict:
    """Execute one configured run; returns the manifest dictionary."""
    os.makedirs(out_dir, exist_ok=True)
    mode = cfg["mode"]
    seed = cfg.get("seed")
    t0 = time.time()
    res = _Results()
    fingerprint = None
    if mode == "exact":
        fingerprint = _run_exact(cfg, res)
    elif mode == "lagrangian":
        fingerprint = _run_lagrangian(cfg, res)
    elif mode == "alp":
        fingerprint = _run_alp(cfg, res)
    elif mode == "info":
        fingerprint = _run_info(cfg, res, seed)
    elif mode == "practical":
        fingerprint = _run_practical(cfg, res, seed)
    elif mode == "finite-horizon":
        fingerprint = _run_finite_horizon(cfg, res, seed)
    elif mode == "bandit-table":
        _run_bandit_table(cfg, out_dir, seed, threads)
    elif mode == "lqc-table":
        _run_lqc_table(cfg, out_dir, seed, threads)
    if res.rows:
        res.write(os.path.join(out_dir, "results.csv"))
    manifest = {
        "mode": mode,
        "config": cfg,
        "seed": seed,
        "threads": threads,
        "model_fingerprint": fingerprint,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "package": __version__,
        },
        "wall_clock_s": round(time.time() - t0, 3),
        "results": "results.csv",
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# compare

# ordering checks: lhs quantity must not exceed rhs quantity (same anchor)
_ORDERINGS = [
    ("exact_value", "info_bound"),
    ("exact_value", "alp_bound"),
    ("exact_value", "lagrangian_bound"),
    ("info_bound", "practical_bound"),
    ("info_bound", "lagrangian_bound"),
    ("practical_bound", "lagrangian_bound"),
    ("alp_objective", "lagrangian_objective"),
    ("fh_exact", "fh_info"),
    ("fh_info", "fh_practical"),
    ("fh_practical", "fh_lagrangian"),
]


def _load_run(path: str):
    """Returns (fingerprint, rows) for a run directory or results file."""
    if os.path.isdir(path):
        results = os.path.join(path, "results.csv")
        manifest = os.path.join(path, "manifest.json")
    else:
        results = path
        manifest = os.path.join(os.path.dirname(path) or ".", "manifest.json")
    try:
        with open(manifest) as fh:
            fingerprint = json.load(fh).get("model_fingerprint")
    except OSError as exc:
        raise ConfigError(f"cannot read manifest for {path}: {exc}") from exc
    if fingerprint is None:
        raise ConfigError(f"{path} has no model fingerprint; "
                          "table runs cannot be compared")
    rows = []
    try:
        with open(results, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != RESULTS_HEADER:
                raise ConfigError(f"{results} is not a scalar results file")
            for rec in reader:
                if rec["se"] == "":
                    raise ConfigError(f"{results}: row without a standard "
                                      "error is not comparable")
                rows.append({
                    "quantity": rec["quantity"],
                    "anchor": rec["anchor"],
                    "value": float(rec["value"]),
                    "se": float(rec["se"]),
                })
    except OSError as exc:
        raise ConfigError(f"cannot read results for {path}: {exc}") from exc
    return fingerprint, rows


def compare_runs(paths) -> tuple[list[dict], bool]:
    """Check bound orderings across runs; returns (report rows, all_ok)."""
    if not paths:
        raise ConfigError("compare needs at least one run")
    fingerprints = []
    rows = []
    for p in paths:
        fp, rs = _load_run(p)
        fingerprints.append(fp)
        rows.extend(rs)
    if len(set(fingerprints)) > 1:
        raise ConfigError("model fingerprints differ between runs")
    by_quantity = {}
    for r in rows:
        by_quantity.setdefault(r["quantity"], []).append(r)
    report = []
    all_ok = True
    for lo_q, hi_q in _ORDERINGS:
        for lo in by_quantity.get(lo_q, []):
            for hi in by_quantity.get(hi_q, []):
                if lo["anchor"] != hi["anchor"] and "dist" not in (lo["anchor"], hi["anchor"]):
                    continue
                slack = 3.0 * (lo["se"] + hi["se"]) + 1e-9 * (1 + abs(hi["value"]))
                gap = hi["value"] - lo["value"]
                ok = gap >= -slack
                tie = abs(gap) <= slack
                all_ok &= ok
                report.append({
                    "check": f"{lo_q} <= {hi_q}",
                    "anchor": lo["anchor"],
                    "lhs": lo["value"],
                    "rhs": hi["value"],
                    "slack": slack,
                    "status": "FAIL" if not ok else ("TIE" if tie else "PASS"),
                })
    return report, all_ok


def _write_compare(report, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "compare.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["check", "anchor", "lhs", "rhs", "slack", "status"])
        for r in report:
            writer.writerow([r["check"], r["anchor"], _g(r["lhs"]),
                             _g(r["rhs"]), _g(r["slack"]), r["status"]])


# ---------------------------------------------------------------------------
# entry point


def _error_record(out_dir: str | None, exc: Exception):
    record = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "error.json"), "w") as fh:
                json.dump(record, fh, indent=1)
                fh.write("\n")
        except OSError:
            pass


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, GuardError):
        return 3
    return 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wcdp",
        description="Bound lattice runner for weakly coupled dynamic programs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured experiment")
    p_run.add_argument("--config", required=True, help="JSON config path")
    p_run.add_argument("--out", help="output directory (or config key out)")
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker threads for table rows")
    p_run.add_argument("--seed", type=int, help="override the config seed")

    p_cmp = sub.add_parser("compare", help="check bound orderings across runs")
    p_cmp.add_argument("runs", nargs="+", help="run directories or results files")
    p_cmp.add_argument("--out", help="directory for compare.csv")

    args = parser.parse_args(argv)
    out_dir = getattr(args, "out", None)
    try:
        if args.command == "run":
            cfg = _load_config(args.config)
            out_dir = args.out or cfg.get("out")
            if not out_dir:
                raise ConfigError("no output directory (use --out or config)")
            if args.seed is not None:
                cfg["seed"] = args.seed
            manifest = run_experiment(cfg, out_dir, threads=args.threads)
            print(f"ok: {cfg['mode']} -> {out_dir} "
                  f"({manifest['wall_clock_s']}s)")
            return 0
        report, all_ok = compare_runs(args.runs)
        if out_dir:
            _write_compare(report, out_dir)
        if not report:
            print("no comparable quantity pairs found")
            return 0
        for r in report:
            print(f"{r['status']:4s} {r['check']} @ {r['anchor']}: "
                  f"{r['lhs']:.6g} vs {r['rhs']:.6g} (slack {r['slack']:.3g})")
        if not all_ok:
            raise NumericalError("bound ordering violated beyond slack")
        return 0
    except (ConfigError, GuardError, NumericalError) as exc:
        _error_record(out_dir, exc)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
