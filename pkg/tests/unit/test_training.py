import os

import pytest

import numpy as np

from stepwise.utils.constants import INTERFACE_BUBBLE_INSERTION, INTERFACE_SEARCH, INTERFACE_KNAPSACK, CHECKPOINT_NAME
from stepwise.utils.vm import InstructionSchema, InstructionType, var_arg
from stepwise.utils.config import TrainConfig, ConfigError
from stepwise.utils.sort_env import BUBBLE_INSERTION_SCHEMA, COMPARISON_WIDTH
from stepwise.utils.tasks import make_agent
from stepwise.utils.policy import MlpPolicy, ValueBaseline, new_policy
from stepwise.utils.optim import Adam, Sgd
from stepwise.utils.teachers import InsertionTeacher
from stepwise.utils.checkpoint import load_checkpoint
from stepwise.utils.training import (
    LEADERBOARD_COLUMNS,
    RolloutBatch,
    Actor,
    nstep_returns,
    collect_rollouts,
    make_actors,
    bc_update,
    pg_update,
    surrogate_loss,
    accumulate_surrogate_gradients,
    teacher_episode,
    greedy_agreement,
    validation_sizes,
    sweep_cells,
    check_grid,
    run_sweep,
    plot_training_curves,
    train_bc,
    train_rl,
)

from ..utils import finite_difference_gap, randomize_parameters


def _tiny(interface=INTERFACE_SEARCH, **overrides):
    values = dict(num_actors=2, n_steps=6, updates=2, eval_interval=1, eval_episodes=2, bc_epochs=2,
                  bc_episodes=3, batch_size=32, seed=0)
    values.update(overrides)
    return TrainConfig(interface, **values)


def test_nstep_return_of_two_penalties():
    assert nstep_returns([-1.0, -1.0], [0.0, 0.0, 0.0], 1.0, 2).tolist() == [-2.0, -1.0]


def test_nstep_returns_without_discount_are_the_rewards():
    rewards = [1.0, -2.0, 3.0]
    assert nstep_returns(rewards, [5.0] * 4, 0.0, 3).tolist() == rewards


def test_nstep_returns_bootstrap_the_segment_end():
    returns = nstep_returns([1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 10.0], 0.5, 2)
    assert returns.tolist() == pytest.approx([1.5, 1.5 + 0.25 * 10.0, 1.0 + 0.5 * 10.0])


def test_nstep_returns_with_a_long_horizon_are_monte_carlo():
    rewards = np.array([1.0, 0.0, 2.0, -1.0])
    dones = [False, False, False, True]
    returns = nstep_returns(rewards, np.zeros(5), 0.9, 100, dones)
    expected = [sum(0.9 ** (k - t) * rewards[k] for k in range(t, 4)) for t in range(4)]
    assert returns.tolist() == pytest.approx(expected)


def test_nstep_returns_stop_at_episode_ends():
    returns = nstep_returns([1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 0.0], 1.0, 3, dones=[True, False, False],
                            bootstrap=[7.0, 0.0, 0.0])
    assert returns.tolist() == [8.0, 2.0, 1.0]


def test_nstep_returns_reject_bad_input():
    with pytest.raises(ValueError):
        nstep_returns([1.0], [0.0], 0.9, 1)
    with pytest.raises(ValueError):
        nstep_returns([1.0], [0.0, 0.0], 0.9, 0)


def test_policy_gradient_solves_a_bandit():
    schema = InstructionSchema("bandit", [InstructionType("Arm", [var_arg("i", 3)])])
    rng = np.random.default_rng(0)
    policy = MlpPolicy(schema, 1, rng, hidden=8, depth=1, head_hidden=8)
    baseline = ValueBaseline()
    config = TrainConfig(INTERFACE_BUBBLE_INSERTION, entropy_weight=0.0, imitation=False, baseline_weight=1.0,
                         learning_rate=0.02)
    optimizer = Adam([policy, baseline], config.learning_rate)
    payout = np.array([2.0, 1.0, 0.0])
    obs = np.ones(1)

    for _ in range(500):
        actions = [policy.sample(obs, rng) for _ in range(16)]
        rewards = payout[[a.args[0] for a in actions]]
        batch = RolloutBatch([obs] * 16, actions, rewards, rewards, baseline.forward(16))
        pg_update(policy, baseline, batch, config, optimizer)

    logp, _, _ = policy.evaluate([obs], [schema.make("Arm", 0)])
    assert np.exp(logp[0]) > 0.9
    assert policy.sample(obs, greedy=True) == schema.make("Arm", 0)
    assert baseline.value[0] > 1.0


def test_surrogate_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    config = _tiny(INTERFACE_BUBBLE_INSERTION, entropy_weight=0.1, imitation_weight=0.5, baseline_weight=0.3)
    policy = MlpPolicy(BUBBLE_INSERTION_SCHEMA, COMPARISON_WIDTH, rng, hidden=6, depth=2, head_hidden=5)
    baseline = ValueBaseline(0.3)
    randomize_parameters(policy, rng)

    trace = teacher_episode(config, InsertionTeacher(), rng)
    count = min(len(trace), 12)
    observations = trace.observations[:count]
    teacher_actions = trace.instructions[:count]
    actions = [BUBBLE_INSERTION_SCHEMA.enumerate()[k] for k in rng.integers(0, 28, size=count)]
    returns = rng.normal(size=count)
    batch = RolloutBatch(observations, actions, rng.normal(size=count), returns, baseline.forward(count),
                         teacher_actions=teacher_actions)

    gap = finite_difference_gap(
        [policy, baseline],
        lambda: surrogate_loss(policy, baseline, batch, config)[0],
        lambda: accumulate_surrogate_gradients(policy, baseline, batch, config),
        rng,
    )
    assert gap < 1e-4


def test_bc_loss_falls_on_a_fixed_batch():
    config = _tiny(INTERFACE_BUBBLE_INSERTION, sizes="6-6")
    rng = np.random.default_rng(2)
    trace = teacher_episode(config, InsertionTeacher(), rng)
    policy = MlpPolicy(BUBBLE_INSERTION_SCHEMA, COMPARISON_WIDTH, rng, hidden=32, depth=2, head_hidden=32)
    optimizer = Adam([policy], 1e-2)

    first = bc_update(policy, trace.observations, trace.instructions, optimizer)
    for _ in range(100):
        last = bc_update(policy, trace.observations, trace.instructions, optimizer)
    assert last < 0.5 * first
    assert greedy_agreement(policy, trace.observations, trace.instructions) > 0.8


def test_sgd_follows_the_gradient():
    baseline = ValueBaseline(1.0)
    optimizer = Sgd([baseline], 0.5)
    optimizer.zero_grad()
    baseline.backward(np.array([2.0]))
    optimizer.step()
    assert baseline.value[0] == pytest.approx(0.0)


def test_actor_keeps_episodes_running_across_segments():
    config = _tiny(INTERFACE_SEARCH, sizes="3-5")
    rng = np.random.default_rng(3)
    policy = new_policy(INTERFACE_SEARCH, rng, hidden=8, depth=1, head_hidden=8)
    actor = Actor(config, np.random.default_rng(4))
    segment = actor.collect(policy, 0.0, 20)
    assert len(segment.rewards) == 20
    assert len(segment.dones) == 20
    assert segment.teacher_actions is None
    assert all(length <= config.cap_rule.cap(5) for length, _ in segment.episodes)


def test_collect_rollouts_shapes():
    config = _tiny(INTERFACE_KNAPSACK, imitation=True)
    policy = new_policy(INTERFACE_KNAPSACK, np.random.default_rng(0), hidden=8, depth=1, head_hidden=8)
    actors = make_actors(config, 0, make_agent("dfs", INTERFACE_KNAPSACK))
    batch = collect_rollouts(policy, ValueBaseline(), actors, config)
    assert len(batch) == config.num_actors * config.n_steps
    assert len(batch.teacher_actions) == len(batch)
    assert batch.advantages.shape == (len(batch),)


def test_train_bc_logs_and_keeps_the_best(tmpdir):
    config = _tiny(INTERFACE_SEARCH, teacher="binary", sizes="4-6")
    log_path = str(tmpdir.join("training_log.csv"))
    result = train_bc(config, log_path=log_path, progress=False)
    assert list(result.history["epoch"]) == [1, 2]
    assert os.path.exists(log_path)
    key, policy_state, baseline_state, row = result.best
    assert baseline_state is None
    assert key == (-row["solve_rate"], row["mean_length"])
    assert set(policy_state) == set(dict(result.policy.named_parameters()))


def test_train_rl_runs_with_and_without_imitation():
    for imitation in (True, False):
        config = _tiny(INTERFACE_SEARCH, imitation=imitation, sizes="3-4")
        result = train_rl(config, progress=False)
        assert list(result.history["update"]) == [1, 2]
        assert result.baseline is not None
        if imitation:
            assert result.history["imitation_agreement"].notna().all()
        else:
            assert result.history["imitation_agreement"].isna().all()


def test_training_is_reproducible():
    config = _tiny(INTERFACE_SEARCH, sizes="3-4")
    first = train_rl(config, progress=False)
    second = train_rl(config, progress=False)
    for (name, p), (_, q) in zip(first.policy.named_parameters(), second.policy.named_parameters()):
        assert np.array_equal(p, q), name


def test_validation_sizes():
    assert validation_sizes(_tiny(sizes="10-20")) == [10, 15, 20]
    assert validation_sizes(_tiny(sizes="7-7")) == [7]


def test_sweep_cells():
    cells = sweep_cells({"gamma": [0.9, 0.99], "learning_rate": [1e-4]})
    assert cells == [{"learning_rate": 1e-4, "gamma": 0.9}, {"learning_rate": 1e-4, "gamma": 0.99}]
    with pytest.raises(ConfigError):
        sweep_cells({"batch_size": [1]})


def test_check_grid():
    check_grid(INTERFACE_SEARCH, {"gamma": [0.9]})
    with pytest.raises(ConfigError):
        check_grid(INTERFACE_SEARCH, {"gamma": [0.5]})


def test_empty_sweep():
    result = run_sweep(_tiny(), {"learning_rate": []}, [0], progress=False)
    assert result.leaderboard.empty
    assert list(result.leaderboard.columns) == LEADERBOARD_COLUMNS

    result = run_sweep(_tiny(), {"learning_rate": [1e-4]}, [], progress=False)
    assert result.leaderboard.empty


def test_small_sweep(tmpdir):
    config = _tiny(INTERFACE_SEARCH, sizes="3-4")
    grid = {"learning_rate": [1e-4, 1e-5]}
    result = run_sweep(config, grid, [0, 1], updates=2, run_dir=str(tmpdir), progress=False)

    board = result.leaderboard
    assert len(board) == 4
    assert sorted(board["rank"].unique()) == [1, 2]
    assert sorted(board["seed"].tolist()) == [0, 0, 1, 1]
    assert list(board["rank"]) == sorted(board["rank"])
    assert set(result.curves) == {0, 1}
    assert list(result.curves[0].columns) == [0, 1]
    assert sorted(board["learning_rate"].unique()) == [1e-5, 1e-4]
    assert (board["gamma"] == config.gamma).all()
    assert (board["n_steps"] == config.n_steps).all()
    assert (board["entropy_weight"] == config.entropy_weight).all()

    for c in (0, 1):
        checkpoint = load_checkpoint(str(tmpdir.join(f"cell-{c}", CHECKPOINT_NAME)))
        assert checkpoint.baseline is not None
        assert checkpoint.metadata["cell"] == sweep_cells(grid)[c]

    plot_path = str(tmpdir.join("curves.png"))
    plot_training_curves(result.curves, sweep_cells(grid), plot_path, reference_length=3.0)
    assert os.path.getsize(plot_path) > 0


def test_off_grid_sweep_needs_the_flag():
    with pytest.raises(ConfigError):
        run_sweep(_tiny(), {"learning_rate": [0.5]}, [0], progress=False)
