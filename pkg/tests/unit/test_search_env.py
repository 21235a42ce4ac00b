import pytest

import numpy as np

from stepwise.utils.constants import QUERY_MIXED, QUERY_MEMBER, QUERY_NON_MEMBER, MIXED_MEMBER_RATE
from stepwise.utils.vm import OUTCOME_SOLVED, OUTCOME_TERMINATED_WRONG, run_episode
from stepwise.utils.teachers import BinarySearchTeacher
from stepwise.utils.search_env import (
    SEARCH_SCHEMA,
    SEARCH_OBS_WIDTH,
    NOT_FOUND,
    SearchState,
    SearchEnv,
    new_search_instance,
    observe_search,
    apply_search_instruction,
    terminal_correct,
)

from ..utils import query_oracle


def test_observation_width():
    assert SEARCH_OBS_WIDTH == 115
    assert observe_search(SearchState([0, 2, 4], 3)).shape == (115,)


def test_reset_variables():
    state = SearchState([0, 2, 4, 6, 8], 4)
    assert state.variables == [0, 0, 4, 4]


def test_unsorted_array_rejected():
    with pytest.raises(ValueError):
        SearchState([2, 0, 4], 2)


def test_constant_array_query_blocks():
    state = SearchState([3, 3, 3], 3)
    obs = observe_search(state)
    for i in range(4):
        assert obs[68 + 3 * i: 68 + 3 * i + 3].tolist() == [0, 1, 0]


def test_query_block_matches_oracle():
    state = SearchState([1, 3, 5], 3)
    state.variables = [1, 0, 2, 2]
    obs = observe_search(state)
    assert obs[68:80].tolist() == query_oracle([1, 3, 5], 3, [1, 0, 2, 2]).tolist()
    assert obs[68:71].tolist() == [0, 1, 0]
    assert obs[71:74].tolist() == [0, 0, 1]
    assert obs[74:77].tolist() == [1, 0, 0]


def test_assign_mid_rounds_down():
    state = SearchState(2 * np.arange(6), 4)
    state.variables = [3, 0, 5, 5]
    apply_search_instruction(state, SEARCH_SCHEMA, SEARCH_SCHEMA.make("AssignMid", 0, 1, 2))
    assert state.variables[0] == 2


def test_found_on_the_query():
    env = SearchEnv(SearchState([0, 2, 4], 2))
    env.state.variables[0] = 1
    reward = env.step(SEARCH_SCHEMA.make("Found", 0))
    assert env.status == OUTCOME_SOLVED
    assert reward == pytest.approx(-0.01)


def test_wrong_found_is_penalized():
    env = SearchEnv(SearchState([0, 2, 4], 2))
    reward = env.step(SEARCH_SCHEMA.make("Found", 0))
    assert env.status == OUTCOME_TERMINATED_WRONG
    assert reward == pytest.approx(-0.01 - 3)


def test_wrong_not_found_is_penalized_with_custom_penalty():
    env = SearchEnv(SearchState([0, 2, 4], 4), penalty=1.0)
    reward = env.step(SEARCH_SCHEMA.make("NotFound"))
    assert env.status == OUTCOME_TERMINATED_WRONG
    assert reward == pytest.approx(-1.01)


def test_not_found_on_absent_query():
    state = SearchState([0, 2, 4], 3)
    _, reward, terminal = apply_search_instruction(state, SEARCH_SCHEMA, SEARCH_SCHEMA.make("NotFound"))
    assert terminal
    assert state.terminal_result == NOT_FOUND
    assert terminal_correct(state)
    assert reward == pytest.approx(-0.01)


def test_move_var_clamps():
    state = SearchState([0, 2, 4], 3)
    apply_search_instruction(state, SEARCH_SCHEMA, SEARCH_SCHEMA.make("MoveVar", 0, False))
    apply_search_instruction(state, SEARCH_SCHEMA, SEARCH_SCHEMA.make("MoveVar", 2, True))
    assert state.variables == [0, 0, 2, 2]
    assert state.prev_action == SEARCH_SCHEMA.make("MoveVar", 2, True)


def test_member_split():
    rng = np.random.default_rng(7)
    present = [new_search_instance(10, rng, QUERY_MIXED).query_present for _ in range(10000)]
    assert np.mean(present) == pytest.approx(MIXED_MEMBER_RATE, abs=0.015)


@pytest.mark.parametrize("n", [1, 2, 10])
def test_query_modes(n):
    rng = np.random.default_rng(n)
    for _ in range(200):
        member = new_search_instance(n, rng, QUERY_MEMBER)
        assert member.query_present
        assert member.A.tolist() == sorted(member.A.tolist())
        assert 0 <= member.A.min() and member.A.max() < n

        absent = new_search_instance(n, rng, QUERY_NON_MEMBER)
        assert not absent.query_present
        assert -1 <= absent.q <= n


def test_arrays_repeat_values():
    rng = np.random.default_rng(3)
    repeats = [len(set(new_search_instance(10, rng).A.tolist())) < 10 for _ in range(100)]
    assert np.mean(repeats) > 0.9


@pytest.mark.parametrize("n, low, high", [(10, 3.32, 4.49), (100, 9.95, 13.46)])
def test_mixed_sampler_binary_search_length(n, low, high):
    rng = np.random.default_rng(0)
    teacher = BinarySearchTeacher()
    lengths = [len(run_episode(SearchEnv(new_search_instance(n, rng)), teacher, 4 * n, rng, record=False))
               for _ in range(2000)]
    assert low < np.mean(lengths) < high


def test_unknown_query_mode():
    with pytest.raises(ValueError):
        new_search_instance(5, np.random.default_rng(0), "sometimes")
