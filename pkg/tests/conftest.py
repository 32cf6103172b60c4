import numpy as np
import pytest

from wcdp.model import (Subproblem, WeaklyCoupledModel, random_weakly_coupled)


def three_state_example(reward_scale: float = 2.0,
                        bonus: float = 4.0) -> WeaklyCoupledModel:
    """Single three-state subproblem with one binding budget row.

    State 0 drifts to the absorbing state 2 under action 0 and to the
    absorbing state 1 under action 1; state 1 pays reward_scale *
    (2 + bonus) for its priced action, state 2 pays reward_scale. The
    priced action weighs 2 in state 1 and 1 in state 2 against budget 1,
    so only state 2 can afford it.
    """
    c, l = reward_scale, bonus
    trans = np.zeros((3, 2, 3))
    trans[0, 0, 2] = 1.0
    trans[0, 1, 1] = 1.0
    trans[1, :, 1] = 1.0
    trans[2, :, 2] = 1.0
    reward = np.zeros((3, 2))
    reward[1, 1] = c * (2 + l)
    reward[2, 1] = c
    weight = np.zeros((3, 2, 1))
    weight[1, 1, 0] = 2.0
    weight[2, 1, 0] = 1.0
    sub = Subproblem(transition=trans, reward=reward, weight=weight,
                     action_sets=[(0, 1)] * 3)
    return WeaklyCoupledModel(discount=0.9, budget=np.array([1.0]),
                              subproblems=[sub])


# shape cycle for the seeded instance families: (subproblems, states,
# actions, links)
_SHAPES = [(2, 3, 2, 1), (3, 3, 2, 1), (2, 4, 3, 1), (3, 4, 2, 2),
           (2, 2, 2, 1), (1, 4, 3, 1), (3, 2, 3, 1), (2, 3, 3, 2)]


def seeded_instance(seed: int, discount: float = 0.9) -> WeaklyCoupledModel:
    n, s, a, links = _SHAPES[seed % len(_SHAPES)]
    return random_weakly_coupled(n, s, a, links, discount, seed,
                                 feasibility="exhaustive")


@pytest.fixture
def golden() -> WeaklyCoupledModel:
    return three_state_example()


@pytest.fixture
def small_random() -> WeaklyCoupledModel:
    return seeded_instance(1)
