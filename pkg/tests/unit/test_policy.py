import collections

import pytest

import numpy as np

from stepwise.utils.constants import INTERFACE_BUBBLE_INSERTION, INTERFACE_QUICK_SORT, INTERFACE_FULL_VIEW
from stepwise.utils.vm import ARG_BOOL
from stepwise.utils.sort_env import (
    BUBBLE_INSERTION_SCHEMA,
    QUICK_SORT_SCHEMA,
    FULL_VIEW_SCHEMA,
    COMPARISON_WIDTH,
    QUICK_SORT_OBS_WIDTH,
    SortState,
    observe_bubble_insertion,
    observe_quicksort,
    observe_full_view,
)
from stepwise.utils.layers import Dense, Mlp, categorical_terms, bernoulli_terms, draw, log_softmax
from stepwise.utils.policy import MlpPolicy, ValueBaseline, PolicyAgent, new_policy, policy_from_config, \
    policy_log_prob
from stepwise.utils.gnn import GnnPolicy

from ..utils import finite_difference_gap, randomize_parameters


def _small_policy(schema=BUBBLE_INSERTION_SCHEMA, width=COMPARISON_WIDTH, seed=0):
    return MlpPolicy(schema, width, np.random.default_rng(seed), hidden=8, depth=2, head_hidden=6)


def _observations(rng, count, n=6):
    out = []
    for _ in range(count):
        state = SortState(rng.permutation(n))
        state.variables = [int(v) for v in rng.integers(0, n, size=4)]
        out.append(observe_bubble_insertion(state))
    return out


def _slot_count(spec):
    return 2 if spec.kind == ARG_BOOL else spec.cardinality


def test_fresh_policy_is_uniform():
    policy = MlpPolicy(QUICK_SORT_SCHEMA, QUICK_SORT_OBS_WIDTH, np.random.default_rng(1))
    obs = observe_quicksort(SortState([3, 0, 2, 1]))
    for instr in QUICK_SORT_SCHEMA.enumerate()[::97]:
        itype = QUICK_SORT_SCHEMA.types[instr.type_id]
        expected = -np.log(QUICK_SORT_SCHEMA.num_types) - sum(np.log(_slot_count(s)) for s in itype.args)
        assert policy_log_prob(policy, obs, instr) == pytest.approx(expected)


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(2)
    policy = _small_policy()
    randomize_parameters(policy, rng)
    obs = _observations(rng, 1)[0]
    actions = BUBBLE_INSERTION_SCHEMA.enumerate()
    logp, _, _ = policy.evaluate([obs] * len(actions), actions)
    assert np.exp(logp).sum() == pytest.approx(1.0)


def test_entropy_at_init():
    policy = _small_policy()
    obs = _observations(np.random.default_rng(0), 1)[0]
    _, entropy, _ = policy.evaluate([obs], [BUBBLE_INSERTION_SCHEMA.make("MoveVar", 2, True)])
    assert entropy[0] == pytest.approx(np.log(3) + np.log(4) + np.log(2))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    policy = _small_policy()
    randomize_parameters(policy, rng)
    observations = _observations(rng, 5)
    actions = [BUBBLE_INSERTION_SCHEMA.enumerate()[k] for k in rng.integers(0, 28, size=5)]
    dlogp = rng.normal(size=5)
    dentropy = rng.normal(size=5)

    def loss():
        logp, entropy, _ = policy.evaluate(observations, actions)
        return float(np.sum(dlogp * logp + dentropy * entropy))

    def accumulate():
        _, _, cache = policy.evaluate(observations, actions)
        policy.backward(cache, dlogp, dentropy)

    assert finite_difference_gap([policy], loss, accumulate, rng) < 1e-4


def test_greedy_sampling_is_deterministic():
    rng = np.random.default_rng(4)
    policy = _small_policy()
    randomize_parameters(policy, rng)
    obs = _observations(rng, 1)[0]
    first = policy.sample(obs, greedy=True)
    assert all(policy.sample(obs, greedy=True) == first for _ in range(5))
    assert PolicyAgent(policy).act(obs) == first


def test_forced_type_head():
    policy = _small_policy()
    policy.type_head.layers[-1].b[:] = [0.0, 0.0, 50.0]
    obs = _observations(np.random.default_rng(5), 1)[0]
    rng = np.random.default_rng(5)
    for _ in range(20):
        assert BUBBLE_INSERTION_SCHEMA.name_of(policy.sample(obs, rng)) == "AssignVar"


def test_sampling_frequencies_follow_the_policy():
    policy = _small_policy()
    obs = _observations(np.random.default_rng(6), 1)[0]
    rng = np.random.default_rng(6)
    draws = 6000
    counts = collections.Counter(BUBBLE_INSERTION_SCHEMA.name_of(policy.sample(obs, rng)) for _ in range(draws))
    for name in ("SwapWithNext", "MoveVar", "AssignVar"):
        assert counts[name] / draws == pytest.approx(1 / 3, abs=0.025)

    moves = [policy.sample(obs, rng) for _ in range(draws)]
    ups = [i.args[1] for i in moves if BUBBLE_INSERTION_SCHEMA.name_of(i) == "MoveVar"]
    assert np.mean(ups) == pytest.approx(0.5, abs=0.04)


def test_mismatched_batch():
    policy = _small_policy()
    with pytest.raises(ValueError):
        policy.evaluate(_observations(np.random.default_rng(0), 2), [BUBBLE_INSERTION_SCHEMA.make("MoveVar", 0, True)])


def test_pointer_schema_needs_the_graph_policy():
    with pytest.raises(ValueError):
        MlpPolicy(FULL_VIEW_SCHEMA, 10)


def test_new_policy_picks_the_architecture():
    assert isinstance(new_policy(INTERFACE_BUBBLE_INSERTION, np.random.default_rng(0)), MlpPolicy)
    assert isinstance(new_policy(INTERFACE_FULL_VIEW, np.random.default_rng(0), layers=1), GnnPolicy)


def test_policy_from_config_rebuilds_the_shape():
    policy = new_policy(INTERFACE_QUICK_SORT, np.random.default_rng(0), hidden=12, depth=2)
    rebuilt = policy_from_config(policy.kind, policy.config)
    assert rebuilt.config == policy.config
    assert rebuilt.num_parameters == policy.num_parameters
    with pytest.raises(ValueError):
        policy_from_config("transformer", policy.config)


def test_state_dict_round_trip():
    rng = np.random.default_rng(7)
    policy = _small_policy()
    randomize_parameters(policy, rng)
    other = _small_policy(seed=1)
    other.load_state_dict(policy.state_dict())
    for (name, p), (_, q) in zip(policy.named_parameters(), other.named_parameters()):
        assert np.array_equal(p, q), name

    with pytest.raises(ValueError):
        other.load_state_dict({})


def test_value_baseline():
    baseline = ValueBaseline(2.5)
    assert baseline.forward(3).tolist() == [2.5, 2.5, 2.5]
    baseline.backward(np.array([1.0, -3.0]))
    assert baseline.dvalue[0] == -2.0
    baseline.zero_grad()
    assert baseline.dvalue[0] == 0.0
    assert baseline.num_parameters == 1


def test_dense_accepts_leading_axes():
    layer = Dense(3, 2, np.random.default_rng(0))
    y, x = layer.forward(np.ones((4, 5, 3)))
    assert y.shape == (4, 5, 2)
    dx = layer.backward(x, np.ones((4, 5, 2)))
    assert dx.shape == (4, 5, 3)
    assert layer.db.tolist() == [20.0, 20.0]


def test_mlp_needs_two_sizes():
    with pytest.raises(ValueError):
        Mlp([3], np.random.default_rng(0))


def test_draw():
    rng = np.random.default_rng(0)
    assert {draw(np.array([0.0, 0.0, 2.0]), rng) for _ in range(50)} == {2}
    counts = collections.Counter(draw(np.array([1.0, 3.0]), rng) for _ in range(8000))
    assert counts[1] / 8000 == pytest.approx(0.75, abs=0.02)


def test_gnn_sampling_draws_like_the_other_policies():
    policy = GnnPolicy(FULL_VIEW_SCHEMA, np.random.default_rng(1), node_width=4, hidden=6, layers=2,
                       pointer_hidden=4)
    graph = observe_full_view(SortState([2, 0, 3, 1]))
    rng = np.random.default_rng(9)
    instr = policy.sample(graph, np.random.default_rng(9))

    first, _ = policy.pointer_logits(graph)
    i = draw(np.exp(log_softmax(first)), rng)
    second, _ = policy.pointer_logits(graph, selected=i)
    assert instr.args == (i, draw(np.exp(log_softmax(second)), rng))


def test_categorical_and_bernoulli_terms_at_zero():
    logp, entropy, dlogp, _ = categorical_terms(np.zeros((2, 4)), [1, 3])
    assert logp == pytest.approx(np.full(2, -np.log(4)))
    assert entropy == pytest.approx(np.full(2, np.log(4)))
    assert dlogp[0].tolist() == pytest.approx([-0.25, 0.75, -0.25, -0.25])

    logp, entropy, dlogp, dent = bernoulli_terms(np.zeros(2), [True, False])
    assert logp == pytest.approx(np.full(2, -np.log(2)))
    assert entropy == pytest.approx(np.full(2, np.log(2)))
    assert dlogp.tolist() == [0.5, -0.5]
    assert dent.tolist() == [0.0, 0.0]
