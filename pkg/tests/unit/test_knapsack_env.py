import pytest

import numpy as np

from stepwise.utils.vm import OUTCOME_SOLVED, OUTCOME_BUDGET_EXHAUSTED, run_episode
from stepwise.utils.knapsack_env import (
    KNAPSACK_SCHEMA,
    KNAPSACK_OBS_WIDTH,
    KnapsackState,
    KnapsackEnv,
    new_knapsack_instance,
    knapsack_features,
    observe_knapsack,
    apply_knapsack_instruction,
    brute_force_optimum,
)
from stepwise.utils.teachers import RandomAgent

from ..utils import brute_force_knapsack, knapsack_aggregates_oracle


def _put(state):
    return apply_knapsack_instruction(state, KNAPSACK_SCHEMA, KNAPSACK_SCHEMA.make("Put"))


def _move(state, up):
    return apply_knapsack_instruction(state, KNAPSACK_SCHEMA, KNAPSACK_SCHEMA.make("MoveVar", up))


def test_observation_width():
    assert KNAPSACK_OBS_WIDTH == 14
    assert observe_knapsack(KnapsackState([0.5, 0.5], [1.0, 2.0])).shape == (14,)


def test_capacity_defaults_to_half_the_weight():
    assert KnapsackState([0.2, 0.4, 0.6], [1, 1, 1]).W == pytest.approx(0.6)


def test_sign_features_at_the_boundaries():
    state = KnapsackState([0.5, 0.5, 0.5], [1, 1, 1])
    assert knapsack_features(state)[:2].tolist() == [0, -1]

    for _ in range(5):
        _move(state, True)
    assert state.i == 3
    assert knapsack_features(state)[:2].tolist() == [1, 0]

    for _ in range(6):
        _move(state, False)
    assert state.i == -1
    assert knapsack_features(state)[:2].tolist() == [-1, -1]


def test_put_and_pop():
    state = KnapsackState([0.25, 0.5], [1.0, 3.0], W=0.5)
    _put(state)
    assert state.sol == frozenset([0])
    assert knapsack_features(state)[2] == 1.0
    _put(state)
    assert state.cur_w == pytest.approx(0.25)

    apply_knapsack_instruction(state, KNAPSACK_SCHEMA, KNAPSACK_SCHEMA.make("Pop"))
    assert state.sol == frozenset()
    assert state.cur_v == pytest.approx(0.0)
    assert state.best_v == pytest.approx(1.0)


def test_overweight_solutions_never_count():
    state = KnapsackState([0.4, 0.4], [1.0, 1.0], W=0.5)
    _put(state)
    _move(state, True)
    _, reward, _ = _put(state)
    assert state.cur_w > state.W
    assert reward == 0.0
    assert state.best_v == pytest.approx(1.0)
    assert knapsack_features(state)[3] == 0.0


def test_aggregates_match_oracle():
    rng = np.random.default_rng(3)
    actions = [a for a in KNAPSACK_SCHEMA.enumerate() if KNAPSACK_SCHEMA.name_of(a) in ("Put", "Pop", "MoveVar")]
    for _ in range(30):
        state = new_knapsack_instance(int(rng.integers(1, 7)), rng)
        for _ in range(40):
            apply_knapsack_instruction(state, KNAPSACK_SCHEMA, actions[rng.integers(len(actions))])
            expected = knapsack_aggregates_oracle(
                state.w.tolist(), state.val.tolist(), state.in_sol.tolist(), state.i,
                state.cur_v, state.cur_w, state.best_v, state.W,
            )
            assert knapsack_features(state)[4:].tolist() == expected


def test_rewards_sum_to_best_value():
    rng = np.random.default_rng(5)
    agent = RandomAgent(KNAPSACK_SCHEMA)
    for _ in range(20):
        env = KnapsackEnv(new_knapsack_instance(6, rng), budget=200)
        trace = run_episode(env, agent, 200, rng)
        assert all(r >= 0.0 for r in trace.rewards)
        assert trace.total_reward == pytest.approx(env.state.best_v)


def test_call_and_return():
    state = KnapsackState([0.5, 0.5], [1.0, 1.0])
    _put(state)
    _move(state, True)
    apply_knapsack_instruction(state, KNAPSACK_SCHEMA, KNAPSACK_SCHEMA.make("Knapsack"))
    assert state.depth == 1
    assert state.prev_action is None

    _, _, terminal = apply_knapsack_instruction(state, KNAPSACK_SCHEMA, KNAPSACK_SCHEMA.make("Return"))
    assert not terminal
    assert state.depth == 0
    assert state.i == 1
    assert state.sol == frozenset([0])
    assert state.prev_action == KNAPSACK_SCHEMA.make("Knapsack")


def test_return_at_depth_zero_ends_the_episode():
    env = KnapsackEnv(KnapsackState([0.5], [1.0]))
    env.step(KNAPSACK_SCHEMA.make("Return"))
    assert env.status == OUTCOME_SOLVED


def test_budget():
    env = KnapsackEnv(KnapsackState([0.5, 0.5], [1.0, 1.0]), budget=2)
    env.step(KNAPSACK_SCHEMA.make("MoveVar", True))
    assert not env.done
    env.step(KNAPSACK_SCHEMA.make("MoveVar", True))
    assert env.status == OUTCOME_BUDGET_EXHAUSTED


def test_single_item_never_fits():
    state = new_knapsack_instance(1, np.random.default_rng(0))
    assert brute_force_optimum(state.w, state.val, state.W) == 0.0


def test_brute_force_optimum_matches_bitmask_enumeration():
    rng = np.random.default_rng(8)
    for n in range(1, 9):
        state = new_knapsack_instance(n, rng)
        assert brute_force_optimum(state.w, state.val, state.W) == pytest.approx(
            brute_force_knapsack(state.w.tolist(), state.val.tolist(), state.W)
        )
