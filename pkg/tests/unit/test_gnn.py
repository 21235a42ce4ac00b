import pytest

import numpy as np

from stepwise.utils.sort_env import FULL_VIEW_SCHEMA, BUBBLE_INSERTION_SCHEMA, SortState, SortGraphObservation, \
    observe_full_view
from stepwise.utils.gnn import GnnPolicy, EdgeMessages

from ..utils import finite_difference_gap, randomize_parameters


def _policy(seed=0):
    return GnnPolicy(FULL_VIEW_SCHEMA, np.random.default_rng(seed), node_width=4, hidden=6, layers=2,
                     pointer_hidden=4)


def _graph(rng, n):
    return observe_full_view(SortState(rng.permutation(n)))


def test_fresh_policy_is_uniform_over_pairs():
    policy = _policy()
    graph = _graph(np.random.default_rng(0), 5)
    logp, entropy, _ = policy.evaluate([graph, graph], [FULL_VIEW_SCHEMA.make("Swap", 0, 3),
                                                        FULL_VIEW_SCHEMA.make("Swap", 4, 4)])
    assert logp == pytest.approx(np.full(2, -2 * np.log(5)))
    assert entropy == pytest.approx(np.full(2, 2 * np.log(5)))


def test_single_node_graph():
    policy = _policy()
    randomize_parameters(policy, np.random.default_rng(1))
    graph = observe_full_view(SortState([0]))
    logp, _, _ = policy.evaluate([graph], [FULL_VIEW_SCHEMA.make("Swap", 0, 0)])
    assert logp[0] == pytest.approx(0.0)
    assert policy.sample(graph, greedy=True) == FULL_VIEW_SCHEMA.make("Swap", 0, 0)


def test_node_states_are_permutation_equivariant():
    rng = np.random.default_rng(2)
    policy = _policy()
    randomize_parameters(policy, rng)
    graph = _graph(rng, 6)
    perm = rng.permutation(6)
    permuted = SortGraphObservation(graph.node_features[perm], graph.edge_tensor[perm][:, perm])

    H = policy.node_states(graph)
    H_perm = policy.node_states(permuted)
    assert np.allclose(H_perm, H[perm])

    logits, _ = policy.pointer_logits(graph, selected=int(perm[0]))
    logits_perm, _ = policy.pointer_logits(permuted, selected=0)
    assert np.allclose(logits_perm, logits[perm])


def test_message_is_a_mean_over_other_nodes():
    rng = np.random.default_rng(3)
    net = EdgeMessages(3, 2, 5, rng)
    H = rng.normal(size=(4, 3))
    E = rng.normal(size=(4, 4, 2))
    M, _ = net.forward(H, E)

    for v in range(4):
        hidden = [np.maximum(H[v] @ net.W_self + H[u] @ net.W_nbr + E[u, v] @ net.W_edge + net.b1, 0.0)
                  for u in range(4) if u != v]
        assert np.allclose(M[v], np.mean(hidden, axis=0) @ net.W_out + net.b_out)


def test_message_uses_the_incoming_edge():
    rng = np.random.default_rng(5)
    net = EdgeMessages(3, 2, 5, rng)
    H = rng.normal(size=(3, 3))
    E = rng.normal(size=(3, 3, 2))
    before, _ = net.forward(H, E)

    # Only the edge from node 2 into node 0 changes.
    E[2, 0] += 5.0
    after, _ = net.forward(H, E)
    assert not np.allclose(before[0], after[0])
    assert np.allclose(before[1:], after[1:])


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    policy = _policy()
    randomize_parameters(policy, rng)
    graphs = [_graph(rng, int(n)) for n in (3, 5, 4)]
    actions = [FULL_VIEW_SCHEMA.make("Swap", int(rng.integers(g.num_nodes)), int(rng.integers(g.num_nodes)))
               for g in graphs]
    dlogp = rng.normal(size=3)
    dentropy = rng.normal(size=3)

    def loss():
        logp, entropy, _ = policy.evaluate(graphs, actions)
        return float(np.sum(dlogp * logp + dentropy * entropy))

    def accumulate():
        _, _, caches = policy.evaluate(graphs, actions)
        policy.backward(caches, dlogp, dentropy)

    assert finite_difference_gap([policy], loss, accumulate, rng) < 1e-4


def test_sampled_pointers_are_in_range():
    rng = np.random.default_rng(5)
    policy = _policy()
    randomize_parameters(policy, rng)
    for n in (2, 7, 30):
        graph = _graph(rng, n)
        for _ in range(10):
            FULL_VIEW_SCHEMA.validate(policy.sample(graph, rng), pointer_size=n)


def test_same_parameters_any_size():
    policy = _policy()
    count = policy.num_parameters
    policy.sample(_graph(np.random.default_rng(0), 50), greedy=True)
    assert policy.num_parameters == count


def test_rejects_non_pointer_schema():
    with pytest.raises(ValueError):
        GnnPolicy(BUBBLE_INSERTION_SCHEMA)
