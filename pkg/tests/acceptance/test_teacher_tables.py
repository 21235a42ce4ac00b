import pytest

import numpy as np

from stepwise.utils.constants import (
    INTERFACE_BUBBLE_INSERTION,
    INTERFACE_QUICK_SORT,
    INTERFACE_SEARCH,
    INTERFACE_KNAPSACK,
    QUERY_MODES,
)
from stepwise.utils.tasks import CapRule
from stepwise.utils.teachers import make_teacher
from stepwise.utils.knapsack_env import new_knapsack_instance, brute_force_optimum, KnapsackEnv
from stepwise.utils.vm import run_episode
from stepwise.utils.bench import evaluate, EvalReport

SEED = 7


def _rows(agent, interface, sizes, **kwargs):
    report = evaluate(make_teacher(agent), interface, sizes, episodes=100, seed=SEED, progress=False, **kwargs)
    return {row["size"]: row for row in report.rows}


@pytest.mark.slow
@pytest.mark.parametrize("agent, interface, expected, cap_rule, tolerance", [
    ("bubble", INTERFACE_BUBBLE_INSERTION, {10: 68.0, 20: 293.6, 100: 7527.0}, None, 0.05),
    ("insertion", INTERFACE_BUBBLE_INSERTION, {5: 13.7, 10: 53.4, 20: 208.6, 50: 1275.7}, None, 0.05),
    ("quicksort", INTERFACE_QUICK_SORT, {50: 788.8, 100: 1840.2}, None, 0.05),
    ("quicksort", INTERFACE_QUICK_SORT, {5: 27.4}, CapRule("n2", 10), 0.10),
])
def test_sorting_teacher_lengths(agent, interface, expected, cap_rule, tolerance):
    rows = _rows(agent, interface, sorted(expected), cap_rule=cap_rule)
    for n, mean in expected.items():
        assert rows[n]["solve_rate"] == 100.0, n
        assert rows[n]["mean_length"] == pytest.approx(mean, rel=tolerance), n


@pytest.mark.slow
@pytest.mark.parametrize("agent, interface", [
    ("bubble", INTERFACE_BUBBLE_INSERTION),
    ("insertion", INTERFACE_BUBBLE_INSERTION),
    ("quicksort", INTERFACE_QUICK_SORT),
])
def test_sorting_teachers_always_solve(agent, interface):
    rows = _rows(agent, interface, [5, 10, 20, 50, 100], cap_rule=CapRule("n2", 10))
    assert all(row["solve_rate"] == 100.0 for row in rows.values())

    # Quadratic teachers take close to a million steps per episode here.
    report = evaluate(make_teacher(agent), interface, [1000], episodes=3, seed=SEED, cap_rule=CapRule("n2", 10),
                      progress=False)
    assert report.rows[0]["solve_rate"] == 100.0


@pytest.mark.slow
def test_binary_search_lengths():
    rows = _rows("binary", INTERFACE_SEARCH, [10, 100, 1000])
    for n, mean in {10: 3.9, 100: 11.7, 1000: 21.8}.items():
        assert rows[n]["solve_rate"] == 100.0
        assert rows[n]["mean_length"] == pytest.approx(mean, rel=0.15), n


@pytest.mark.slow
def test_linear_search_length():
    rows = _rows("linear", INTERFACE_SEARCH, [100], cap_rule=CapRule("n2", 1))
    assert rows[100]["solve_rate"] == 100.0
    assert rows[100]["mean_length"] == pytest.approx(50.0, rel=0.15)


@pytest.mark.slow
def test_search_sensitivity_across_query_modes():
    reports = [
        evaluate(make_teacher("binary"), INTERFACE_SEARCH, [10, 100], episodes=100, seed=SEED, query_mode=mode,
                 progress=False)
        for mode in QUERY_MODES
    ]
    sensitivity = EvalReport.concat(reports).pivot("mean_length")
    assert sensitivity.shape == (3, 2)
    assert (EvalReport.concat(reports).to_frame()["solve_rate"] == 100.0).all()


@pytest.mark.slow
@pytest.mark.parametrize("n, multiplier, expected", [
    (4, 20, 1.25),
    (8, 20, 2.47),
    (20, 20, 5.94),
    (10, 100, 3.43),
])
def test_dfs_knapsack_values(n, multiplier, expected):
    rows = _rows("dfs", INTERFACE_KNAPSACK, [n], cap_rule=CapRule("multiplier", multiplier))
    assert rows[n]["mean_value"] == pytest.approx(expected, rel=0.10)


@pytest.mark.slow
def test_unlimited_dfs_matches_brute_force():
    rng = np.random.default_rng(SEED)
    teacher = make_teacher("dfs")
    for n in range(1, 13):
        for _ in range(100):
            state = new_knapsack_instance(n, rng)
            w, val, W = state.w.copy(), state.val.copy(), state.W
            run_episode(KnapsackEnv(state), teacher, 10 ** 7, rng, record=False)
            assert state.best_v == pytest.approx(brute_force_optimum(w, val, W), abs=1e-12)


@pytest.mark.slow
def test_selection_teacher_lengths():
    rows = _rows("selection", "full-view", [10, 20])
    assert rows[10]["mean_length"] == pytest.approx(6.8, rel=0.10)
    assert rows[20]["mean_length"] == pytest.approx(16.6, rel=0.10)
    assert all(row["solve_rate"] == 100.0 for row in rows.values())
