"""End-to-end checks of the command line runner."""

import json
import os

from wcdp.cli import main
from wcdp.finite_horizon import save_fh_model
from wcdp.model import save_model

from conftest import three_state_example


def _write_cfg(tmp_path, name, cfg):
    path = os.path.join(tmp_path, name)
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    return path


def _golden_file(tmp_path):
    path = os.path.join(tmp_path, "model.json")
    save_model(three_state_example(), path)
    return path


def _run(tmp_path, name, cfg, threads=None):
    cfg_path = _write_cfg(tmp_path, name + ".json", cfg)
    out = os.path.join(tmp_path, name)
    argv = ["run", "--config", cfg_path, "--out", out]
    if threads:
        argv += ["--threads", str(threads)]
    rc = main(argv)
    return rc, out


def _read_results(out):
    import csv
    with open(os.path.join(out, "results.csv"), newline="") as fh:
        return list(csv.DictReader(fh))


def _values(rows, quantity):
    return [float(r["value"]) for r in rows if r["quantity"] == quantity]


def test_exact_mode(tmp_path):
    tmp = str(tmp_path)
    rc, out = _run(tmp, "exact", {"mode": "exact",
                                  "model": _golden_file(tmp),
                                  "x0": [0]})
    assert rc == 0
    rows = _read_results(out)
    vals = _values(rows, "exact_value")
    assert max(abs(v - w) for v, w in zip(vals, [18.0, 0.0, 20.0])) < 1e-8
    assert abs(_values(rows, "exact_value_x0")[0] - 18.0) < 1e-8
    assert _values(rows, "bellman_residual")[0] < 1e-9
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["mode"] == "exact"
    assert manifest["model_fingerprint"]


def test_rerun_byte_identical(tmp_path):
    tmp = str(tmp_path)
    model = _golden_file(tmp)
    cfg = {"mode": "info", "model": model, "x0": [0], "penalty": "lagrangian",
           "n_scenarios": 40, "seed": 7}
    rc1, out1 = _run(tmp, "a", cfg)
    rc2, out2 = _run(tmp, "b", cfg)
    assert rc1 == rc2 == 0
    with open(os.path.join(out1, "results.csv"), "rb") as fh:
        blob1 = fh.read()
    with open(os.path.join(out2, "results.csv"), "rb") as fh:
        blob2 = fh.read()
    assert blob1 == blob2


def test_lagrangian_and_alp_modes(tmp_path):
    tmp = str(tmp_path)
    model = _golden_file(tmp)
    rc, out = _run(tmp, "lag", {"mode": "lagrangian", "model": model,
                                "x0": [0], "dist": {"kind": "uniform"}})
    assert rc == 0
    rows = _read_results(out)
    assert abs(_values(rows, "lagrangian_objective")[0] - 60.0) < 1e-7
    assert abs(_values(rows, "lambda_star")[0] - 6.0) < 1e-7

    rc, out = _run(tmp, "alp", {"mode": "alp", "model": model, "x0": [0],
                                "dist": {"kind": "uniform"}})
    assert rc == 0
    rows = _read_results(out)
    assert abs(_values(rows, "alp_bound")[0] - 18.0) < 1e-7


def test_practical_truncation_rows(tmp_path):
    tmp = str(tmp_path)
    cfg = {"mode": "practical", "model": _golden_file(tmp), "x0": [0],
           "n_scenarios": 30, "seed": 11, "truncation": [0, 3],
           "subgradient": {"max_iters": 60}}
    rc, out = _run(tmp, "prac", cfg)
    assert rc == 0
    rows = _read_results(out)
    t0 = _values(rows, "practical_bound_T0")[0]
    t3 = _values(rows, "practical_bound_T3")[0]
    final = _values(rows, "practical_bound")[0]
    assert t3 <= t0 + 1e-9
    assert final == t3
    assert _values(rows, "practical_bias_bound")[0] >= 0.0


def test_compare_orderings_pass(tmp_path):
    tmp = str(tmp_path)
    model = _golden_file(tmp)
    _, out_exact = _run(tmp, "cexact", {"mode": "exact", "model": model,
                                        "x0": [0]})
    _, out_lag = _run(tmp, "clag", {"mode": "lagrangian", "model": model,
                                    "x0": [0]})
    _, out_info = _run(tmp, "cinfo", {"mode": "info", "model": model,
                                      "x0": [0], "n_scenarios": 60,
                                      "seed": 3})
    cmp_out = os.path.join(tmp, "cmp")
    rc = main(["compare", out_exact, out_lag, out_info, "--out", cmp_out])
    assert rc == 0
    with open(os.path.join(cmp_out, "compare.csv")) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "check,anchor,lhs,rhs,slack,status"
    assert len(lines) > 1
    assert all(line.rsplit(",", 1)[1] in {"PASS", "TIE"} for line in lines[1:])


def test_compare_detects_violation(tmp_path):
    tmp = str(tmp_path)
    model = _golden_file(tmp)
    _, out_exact = _run(tmp, "vexact", {"mode": "exact", "model": model,
                                        "x0": [0]})
    _, out_lag = _run(tmp, "vlag", {"mode": "lagrangian", "model": model,
                                    "x0": [0]})
    # corrupt the price bound so it sits below the exact value
    results = os.path.join(out_lag, "results.csv")
    with open(results) as fh:
        lines = fh.read().splitlines()
    lines = ['lagrangian_bound,"(0,)",1,0,1,'
             if line.startswith("lagrangian_bound,") else line
             for line in lines]
    with open(results, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    rc = main(["compare", out_exact, out_lag])
    assert rc == 4


def test_compare_fingerprint_mismatch(tmp_path):
    tmp = str(tmp_path)
    _, out_a = _run(tmp, "fa", {"mode": "exact", "model": _golden_file(tmp),
                                "x0": [0]})
    other = os.path.join(tmp, "other.json")
    save_model(three_state_example(reward_scale=3), other)
    _, out_b = _run(tmp, "fb", {"mode": "exact", "model": other, "x0": [0]})
    assert main(["compare", out_a, out_b]) == 2


def test_compare_rejects_table_runs(tmp_path):
    tmp = str(tmp_path)
    rc, out = _run(tmp, "tbl", {"mode": "bandit-table", "arm_counts": [2],
                                "discounts": [0.9], "n_scenarios": 10,
                                "n_paths": 10, "n_states": 3, "seed": 5})
    assert rc == 0
    assert main(["compare", out]) == 2


def test_config_errors_exit_two(tmp_path):
    tmp = str(tmp_path)
    model = _golden_file(tmp)
    bad = [
        {"mode": "nope"},
        {"mode": "exact", "model": model, "dist": {"kind": "uniform"}},
        {"mode": "exact"},
        {"mode": "exact", "model": model,
         "generator": {"kind": "random"}},
        {"mode": "info", "model": model, "x0": [0], "n_scenarios": 10},
        {"mode": "info", "model": model, "x0": [0], "n_scenarios": 0,
         "seed": 1},
        {"mode": "exact", "model": model, "x0": [9]},
        {"mode": "lagrangian", "model": model,
         "dist": {"kind": "gaussian"}},
        {"mode": "practical", "model": model, "x0": [0], "n_scenarios": 5,
         "seed": 1, "subgradient": {"bogus": 3}},
        {"mode": "exact", "generator": {"kind": "bandit", "n_arms": 2}},
        {"mode": "exact", "generator": {"kind": "fh-random",
                                        "n_subproblems": 1, "n_states": 2,
                                        "n_actions": 2, "horizon": 1,
                                        "n_links": 1, "seed": 0}},
    ]
    for i, cfg in enumerate(bad):
        rc, out = _run(tmp, f"bad{i}", cfg)
        assert rc == 2, f"config {i} should fail: {cfg}"
        err = json.load(open(os.path.join(out, "error.json")))
        assert err["error"] == "ConfigError"
    # malformed JSON and a missing file also map to exit 2
    broken = os.path.join(tmp, "broken.json")
    with open(broken, "w") as fh:
        fh.write("{not json")
    assert main(["run", "--config", broken, "--out",
                 os.path.join(tmp, "broken_out")]) == 2
    assert main(["run", "--config", os.path.join(tmp, "missing.json"),
                 "--out", os.path.join(tmp, "missing_out")]) == 2
    # no output directory anywhere
    cfg_path = _write_cfg(tmp, "noout.json", {"mode": "exact",
                                              "model": model, "x0": [0]})
    assert main(["run", "--config", cfg_path]) == 2


def test_generator_modes(tmp_path):
    tmp = str(tmp_path)
    cfg = {"mode": "lagrangian", "x0": [0, 0],
           "generator": {"kind": "random", "n_subproblems": 2, "n_states": 3,
                         "n_actions": 2, "n_links": 1, "discount": 0.9,
                         "seed": 4}}
    rc, out = _run(tmp, "gen", cfg)
    assert rc == 0
    rows = _read_results(out)
    assert _values(rows, "lagrangian_bound")

    cfg = {"mode": "exact", "x0": [0, 0],
           "generator": {"kind": "bandit", "n_arms": 2, "n_states": 3,
                         "discount": 0.9, "seed": 4}}
    rc, out = _run(tmp, "genb", cfg)
    assert rc == 0
    assert _read_results(out)


def test_finite_horizon_mode(tmp_path):
    tmp = str(tmp_path)
    cfg = {"mode": "finite-horizon", "x0": [0, 0], "n_scenarios": 25,
           "seed": 9, "subgradient": {"max_iters": 80},
           "generator": {"kind": "fh-random", "n_subproblems": 2,
                         "n_states": 3, "n_actions": 2, "horizon": 3,
                         "n_links": 1, "seed": 2}}
    rc, out = _run(tmp, "fh", cfg)
    assert rc == 0
    rows = _read_results(out)
    exact = _values(rows, "fh_exact")[0]
    lag = _values(rows, "fh_lagrangian")[0]
    info = _values(rows, "fh_info")[0]
    prac = _values(rows, "fh_practical")[0]
    se_info = [float(r["se"]) for r in rows if r["quantity"] == "fh_info"][0]
    se_prac = [float(r["se"])
               for r in rows if r["quantity"] == "fh_practical"][0]
    assert exact <= info + 3 * se_info + 1e-9
    assert info <= prac + 3 * (se_info + se_prac) + 1e-9
    assert prac <= lag + 3 * se_prac + 1e-9
    # file-backed finite-horizon models load through the same path
    from wcdp.finite_horizon import random_fh_model
    fh_file = os.path.join(tmp, "fh.json")
    save_fh_model(random_fh_model(1, 2, 2, 2, 1, seed=0), fh_file)
    cfg = {"mode": "finite-horizon", "model": fh_file, "x0": [0],
           "n_scenarios": 10, "seed": 1}
    rc, _ = _run(tmp, "fhfile", cfg)
    assert rc == 0


def test_table_modes_and_threads(tmp_path):
    tmp = str(tmp_path)
    cfg = {"mode": "lqc-table", "coord_counts": [1], "budgets": [1.0],
           "horizon": 2, "n_paths": 40, "n_scenarios": 30, "seed": 6}
    rc, out = _run(tmp, "lqc1", cfg)
    assert rc == 0
    with open(os.path.join(out, "results.csv")) as fh:
        serial = fh.read()
    assert serial.splitlines()[0].startswith("N,b,T,")
    rc, out2 = _run(tmp, "lqc2", cfg, threads=2)
    assert rc == 0
    with open(os.path.join(out2, "results.csv")) as fh:
        assert fh.read() == serial


def test_seed_override_updates_manifest(tmp_path):
    tmp = str(tmp_path)
    cfg_path = _write_cfg(tmp, "seed.json",
                          {"mode": "info", "model": _golden_file(tmp),
                           "x0": [0], "n_scenarios": 15, "seed": 1})
    out = os.path.join(tmp, "seeded")
    assert main(["run", "--config", cfg_path, "--out", out,
                 "--seed", "42"]) == 0
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["seed"] == 42
    rows = _read_results(out)
    assert [r["seed"] for r in rows if r["quantity"] == "info_bound"] == ["42"]
