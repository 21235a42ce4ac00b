import pytest

from stepwise.utils.constants import INTERFACE_BUBBLE_INSERTION, INTERFACE_FULL_VIEW
from stepwise.utils.config import TrainConfig
from stepwise.utils.policy import PolicyAgent
from stepwise.utils.bench import evaluate
from stepwise.utils.training import train_bc, train_rl


def _best_policy(result):
    if result.best is not None:
        _, policy_state, baseline_state, _ = result.best
        result.policy.load_state_dict(policy_state)
        if baseline_state is not None:
            result.baseline.load_state_dict(baseline_state)
    return result.policy


def _solve_rates(policy, interface, sizes, episodes, seed=11):
    report = evaluate(PolicyAgent(policy), interface, sizes, episodes=episodes, seed=seed, progress=False)
    return {row["size"]: row["solve_rate"] for row in report.rows}


@pytest.mark.slow
def test_cloned_insertion_generalizes_to_longer_arrays():
    config = TrainConfig(INTERFACE_BUBBLE_INSERTION, teacher="insertion", sizes="10-20", bc_epochs=20,
                         bc_episodes=50, eval_interval=5, seed=0)
    policy = _best_policy(train_bc(config, progress=False))

    rates = _solve_rates(policy, INTERFACE_BUBBLE_INSERTION, [5, 30, 50, 100, 200], episodes=100)
    assert rates == {5: 100.0, 30: 100.0, 50: 100.0, 100: 100.0, 200: 100.0}


@pytest.mark.slow
def test_full_view_policy_degrades_out_of_range():
    config = TrainConfig(INTERFACE_FULL_VIEW, teacher="selection", sizes="10-20", bc_epochs=30, bc_episodes=50,
                         eval_interval=5, seed=0)
    policy = _best_policy(train_bc(config, progress=False))

    rates = _solve_rates(policy, INTERFACE_FULL_VIEW, [10, 20, 40], episodes=100)
    assert rates[10] == 100.0
    assert rates[20] == 100.0
    assert rates[40] < rates[20]
    assert rates[40] < 50.0


@pytest.mark.slow
def test_imitation_guided_policy_gradient_keeps_solving():
    bc = TrainConfig(INTERFACE_BUBBLE_INSERTION, teacher="insertion", sizes="10-20", bc_epochs=20, bc_episodes=50,
                     eval_interval=5, seed=0)
    policy = _best_policy(train_bc(bc, progress=False))

    config = bc.copy(imitation=True, updates=100, eval_interval=20, learning_rate=1e-5)
    result = train_rl(config, policy=policy, progress=False)
    policy = _best_policy(result)

    rates = _solve_rates(policy, INTERFACE_BUBBLE_INSERTION, [10, 15, 20], episodes=100)
    assert all(rate == 100.0 for rate in rates.values())
