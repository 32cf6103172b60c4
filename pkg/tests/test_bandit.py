import numpy as np
import pytest

from wcdp.bandit import (BANDIT_CSV_HEADER, bandit_index_policy, bandit_row,
                         generate_bandit, run_bandit_table, write_bandit_csv)
from wcdp.errors import ConfigError
from wcdp.lagrangian import optimal_lambda_lp
from wcdp.model import (InitialDistribution, feasible_joint_actions,
                        validate_model)


def test_generate_bandit_structure():
    model, x0 = generate_bandit(3, 4, 0.9, seed=0)
    assert x0 == (0, 0, 0)
    assert model.n_links == 2
    assert np.allclose(model.budget, [1.0, -1.0])
    validate_model(model, feasibility="exhaustive")
    # exactly-one-active encoding: feasible profiles activate one arm
    for x in [(0, 0, 0), (1, 2, 3)]:
        for prof in feasible_joint_actions(model, x):
            assert sum(prof) == 1


def test_generate_bandit_rejects_tiny():
    with pytest.raises(ConfigError):
        generate_bandit(1, 4, 0.9, seed=0)
    with pytest.raises(ConfigError):
        generate_bandit(2, 1, 0.9, seed=0)


def test_index_policy_activates_best_advantage():
    model, x0 = generate_bandit(3, 3, 0.9, seed=2)
    dist = InitialDistribution.point(model, x0)
    bound, _ = optimal_lambda_lp(model, dist)
    pol = bandit_index_policy(model, bound)
    prof = pol(x0)
    assert sum(prof) == 1
    adv = [pol.advantage[n][x0[n]] for n in range(3)]
    assert prof[int(np.argmax(adv))] == 1


def test_bandit_row_orderings():
    row = bandit_row(3, 0.9, seed=1, n_scenarios=120, n_paths=150,
                     n_states=4)
    se = 3 * (row["policy_se"] + row["info_se"])
    assert row["policy_value"] <= row["info_bound"] + se + 1e-9
    assert row["info_bound"] <= row["lag_bound"] + 3 * row["info_se"] + 1e-9
    assert set(BANDIT_CSV_HEADER) <= set(row)


def test_run_bandit_table_row_seeds_and_order():
    rows = run_bandit_table([2, 3], [0.9], seed=5, n_scenarios=30,
                            n_paths=30, n_states=3)
    assert [r["N"] for r in rows] == [2, 3]
    assert [r["seed"] for r in rows] == [5, 6]
    # a permuting runner hook must not change which seeds go where
    rows_threaded = run_bandit_table([2, 3], [0.9], seed=5, n_scenarios=30,
                                     n_paths=30, n_states=3,
                                     row_runner=lambda ts: [t() for t in ts])
    for a, b in zip(rows, rows_threaded):
        assert a == b


def test_write_bandit_csv(tmp_path):
    rows = run_bandit_table([2], [0.9], seed=3, n_scenarios=20, n_paths=20,
                            n_states=3)
    p = tmp_path / "t.csv"
    write_bandit_csv(rows, str(p))
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(BANDIT_CSV_HEADER)
    assert len(lines) == 2
    cells = lines[1].split(",")
    assert cells[0] == "2" and cells[-1] == "3"
