import os
import sys
import logging
import tempfile
import traceback
import collections

import click_log

import numpy as np

from .constants import (
    INTERFACE_BUBBLE_INSERTION,
    INTERFACE_QUICK_SORT,
    INTERFACE_SEARCH,
    INTERFACE_KNAPSACK,
    QUERY_MEMBER,
)
from .vm import encode_prev_action, decode_prev_action, push_call, pop_return, run_episode, OUTCOME_SOLVED
from .sort_env import (
    BUBBLE_INSERTION_SCHEMA,
    QUICK_SORT_SCHEMA,
    FULL_VIEW_SCHEMA,
    COMPARISON_WIDTH,
    SortState,
    observe_full_view,
)
from .search_env import SEARCH_SCHEMA
from .knapsack_env import KNAPSACK_SCHEMA, brute_force_optimum, new_knapsack_instance, KnapsackEnv
from .teachers import DfsKnapsackTeacher, RandomAgent, make_teacher
from .tasks import CapRule
from .policy import MlpPolicy, ValueBaseline
from .gnn import GnnPolicy
from .config import TrainConfig
from .training import RolloutBatch, surrogate_loss, accumulate_surrogate_gradients
from .bench import evaluate, inversion_count, search_space_size
from .checkpoint import save_checkpoint, load_checkpoint

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("selfcheck")
click_log.basic_config(logger)

SuiteResult = collections.namedtuple("SuiteResult", ["name", "passed", "failed", "failures"])


class CheckFailed(AssertionError):
    pass


def expect(condition, message):
    if not condition:
        raise CheckFailed(message)


def randomize(module, rng, scale=0.5):
    """Replace every parameter with Gaussian noise so no output layer is trivially zero."""
    for _, p in module.named_parameters():
        p[...] = rng.normal(scale=scale, size=p.shape)


def gradient_check(modules, loss_fn, accumulate_fn, rng, samples=40, eps=1e-6):
    """Largest relative gap between accumulated and central-difference gradients
    over `samples` randomly chosen parameter entries."""

    for m in modules:
        m.zero_grad()
    accumulate_fn()
    entries = []
    for m in modules:
        for (name, p), (_, g) in zip(m.named_parameters(), m.named_gradients()):
            entries += [(p, g, idx) for idx in np.ndindex(p.shape)]

    worst = 0.0
    for k in rng.choice(len(entries), size=min(samples, len(entries)), replace=False):
        p, g, idx = entries[k]
        old = p[idx]
        p[idx] = old + eps
        up = loss_fn()
        p[idx] = old - eps
        down = loss_fn()
        p[idx] = old
        numeric = (up - down) / (2 * eps)
        scale = max(abs(numeric), abs(g[idx]), 1e-3)
        worst = max(worst, abs(numeric - g[idx]) / scale)
    return worst


################################################################################
# Suites

def check_encoding(rng):
    for schema, pointer_size in [(BUBBLE_INSERTION_SCHEMA, None), (QUICK_SORT_SCHEMA, None), (SEARCH_SCHEMA, None),
                                 (KNAPSACK_SCHEMA, None), (FULL_VIEW_SCHEMA, 5)]:
        expect(decode_prev_action(schema, encode_prev_action(schema, None, pointer_size), pointer_size) is None,
               f"{schema.name}: the empty action does not round-trip")
        for instr in schema.enumerate(pointer_size):
            back = decode_prev_action(schema, encode_prev_action(schema, instr, pointer_size), pointer_size)
            expect(back == instr, f"{schema.name}: {schema.format(instr)} decodes to {schema.format(back)}")


def check_action_counts(rng):
    expect(len(BUBBLE_INSERTION_SCHEMA.enumerate()) == 28, "bubble/insertion schema must have 28 actions")
    expect(len(QUICK_SORT_SCHEMA.enumerate()) == 2096, "quick-sort schema must have 2096 actions")


def check_call_stack(rng):
    for _ in range(50):
        state = SortState(rng.permutation(8))
        state.variables = [int(v) for v in rng.integers(0, 8, size=4)]
        before = list(state.variables)
        call = QUICK_SORT_SCHEMA.make("FunctionCall", *[int(a) for a in rng.integers(0, 2, size=1)],
                                      *[int(a) for a in rng.integers(0, 4, size=5)])
        push_call(state, QUICK_SORT_SCHEMA, call)
        state.variables = [int(v) for v in rng.integers(0, 8, size=4)]
        local = int(rng.integers(0, 4))
        returned = state.variables[local]
        pop_return(state, QUICK_SORT_SCHEMA, QUICK_SORT_SCHEMA.make("Return", local))

        expected = list(before)
        expected[call.args[-1]] = returned
        expect(state.variables == expected, f"call/return left {state.variables}, expected {expected}")
        expect(state.function_id == 0 and not state.call_stack, "call/return did not restore the caller")
        expect(state.prev_action == call, "the caller's previous action was not restored")


def _random_observations(rng, count):
    return (rng.random((count, COMPARISON_WIDTH)) < 0.5).astype(float)


def check_distribution(rng):
    for schema in (BUBBLE_INSERTION_SCHEMA, QUICK_SORT_SCHEMA):
        width = COMPARISON_WIDTH
        policy = MlpPolicy(schema, width, rng=rng, hidden=8, head_hidden=8)
        randomize(policy, rng)
        actions = schema.enumerate()
        obs = np.repeat(_random_observations(rng, 1), len(actions), axis=0)
        logp, _, _ = policy.evaluate(obs, actions)
        total = float(np.exp(logp).sum())
        expect(abs(total - 1.0) < 1e-6, f"{schema.name}: probabilities sum to {total}")


def check_mlp_gradients(rng):
    policy = MlpPolicy(BUBBLE_INSERTION_SCHEMA, COMPARISON_WIDTH, rng=rng, hidden=8, head_hidden=8)
    randomize(policy, rng)
    obs = _random_observations(rng, 6)
    actions = [BUBBLE_INSERTION_SCHEMA.enumerate()[k] for k in rng.choice(28, size=6)]
    wl, we = rng.normal(size=6), rng.normal(size=6)

    def loss():
        logp, ent, _ = policy.evaluate(obs, actions)
        return float(wl @ logp + we @ ent)

    def accumulate():
        _, _, cache = policy.evaluate(obs, actions)
        policy.backward(cache, wl, we)

    gap = gradient_check([policy], loss, accumulate, rng)
    expect(gap < 1e-4, f"MLP policy gradient differs from finite differences by {gap:.2e}")


def check_gnn_gradients(rng):
    policy = GnnPolicy(FULL_VIEW_SCHEMA, rng=rng, node_width=4, hidden=6, layers=2, pointer_hidden=4)
    randomize(policy, rng)
    graphs = [observe_full_view(SortState(rng.permutation(5))) for _ in range(3)]
    actions = [FULL_VIEW_SCHEMA.make("Swap", *[int(a) for a in rng.integers(0, 5, size=2)]) for _ in graphs]
    wl, we = rng.normal(size=3), rng.normal(size=3)

    def loss():
        logp, ent, _ = policy.evaluate(graphs, actions)
        return float(wl @ logp + we @ ent)

    def accumulate():
        _, _, cache = policy.evaluate(graphs, actions)
        policy.backward(cache, wl, we)

    gap = gradient_check([policy], loss, accumulate, rng)
    expect(gap < 1e-4, f"GNN policy gradient differs from finite differences by {gap:.2e}")


def check_surrogate_gradients(rng):
    policy = MlpPolicy(BUBBLE_INSERTION_SCHEMA, COMPARISON_WIDTH, rng=rng, hidden=8, head_hidden=8)
    randomize(policy, rng)
    baseline = ValueBaseline(rng.normal())
    actions = BUBBLE_INSERTION_SCHEMA.enumerate()
    batch = RolloutBatch(
        _random_observations(rng, 8),
        [actions[k] for k in rng.choice(28, size=8)],
        rng.normal(size=8), rng.normal(size=8), rng.normal(size=8),
        teacher_actions=[actions[k] for k in rng.choice(28, size=8)],
    )
    config = TrainConfig(INTERFACE_BUBBLE_INSERTION, entropy_weight=0.1, imitation_weight=0.5, baseline_weight=0.3)

    gap = gradient_check([policy, baseline], lambda: surrogate_loss(policy, baseline, batch, config)[0],
                         lambda: accumulate_surrogate_gradients(policy, baseline, batch, config), rng)
    expect(gap < 1e-4, f"Surrogate-loss gradient differs from finite differences by {gap:.2e}")


def check_search_space(rng):
    expect(search_space_size(INTERFACE_BUBBLE_INSERTION)[:2] == (28, 34828517376),
           "bubble/insertion search space must be (28, 34828517376)")
    expect(search_space_size(INTERFACE_QUICK_SORT).actions == 2096, "quick-sort interface must have 2096 actions")
    expect(search_space_size(INTERFACE_BUBBLE_INSERTION, k=1)[:2] == (4, 16), "k=1 search space must be (4, 16)")


def check_inversions(rng):
    expect(inversion_count([2, 1, 3]) == 1 and inversion_count(list(range(10))) == 0, "inversion count is off")
    mean = np.mean([inversion_count(rng.permutation(10)) for _ in range(10000)])
    expect(abs(mean - 22.5) / 22.5 < 0.02, f"mean inversions at n=10 is {mean}, expected about 22.5")


def check_knapsack_dfs(rng):
    teacher = DfsKnapsackTeacher()
    for _ in range(20):
        state = new_knapsack_instance(int(rng.integers(1, 9)), rng)
        w, val, W = state.w.copy(), state.val.copy(), state.W
        env = KnapsackEnv(state)
        trace = run_episode(env, teacher, 10 ** 6, rng, record=False)
        expect(trace.outcome == OUTCOME_SOLVED, "depth-first search did not return from the outermost call")
        optimum = brute_force_optimum(w, val, W)
        expect(abs(state.best_v - optimum) < 1e-9, f"depth-first search found {state.best_v}, optimum {optimum}")


def check_teachers(rng):
    cap = CapRule("n2", 10)
    seed = int(rng.integers(2 ** 31))
    for name, interface in [("bubble", INTERFACE_BUBBLE_INSERTION), ("insertion", INTERFACE_BUBBLE_INSERTION),
                            ("quicksort", INTERFACE_QUICK_SORT)]:
        report = evaluate(make_teacher(name), interface, [5, 10, 20], episodes=10, cap_rule=cap, seed=seed,
                          progress=False)
        rates = report.to_frame()["solve_rate"].tolist()
        expect(all(r == 100.0 for r in rates), f"{name} solve rates {rates}")

    report = evaluate(make_teacher("binary"), INTERFACE_SEARCH, [100], episodes=50, cap_rule=CapRule("multiplier", 4),
                      seed=seed, query_mode=QUERY_MEMBER, progress=False)
    expect(report.rows[0]["solve_rate"] == 100.0, "binary search missed member queries")


def check_determinism(rng):
    seed = int(rng.integers(2 ** 31))
    agent = RandomAgent(SEARCH_SCHEMA)
    runs = [evaluate(agent, INTERFACE_SEARCH, [10], episodes=20, seed=seed, progress=False).to_frame()
            for _ in range(2)]
    expect(runs[0].equals(runs[1]), "evaluation with a fixed seed is not reproducible")
    runs = [evaluate(make_teacher("dfs"), INTERFACE_KNAPSACK, [6], episodes=5, seed=seed, progress=False).to_frame()
            for _ in range(2)]
    expect(runs[0].equals(runs[1]), "knapsack evaluation with a fixed seed is not reproducible")


def check_checkpoint(rng):
    policies = [
        MlpPolicy(QUICK_SORT_SCHEMA, 129, rng=rng, hidden=8, head_hidden=8),
        GnnPolicy(FULL_VIEW_SCHEMA, rng=rng, node_width=4, hidden=6, layers=2, pointer_hidden=4),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        for k, policy in enumerate(policies):
            randomize(policy, rng)
            baseline = ValueBaseline(rng.normal())
            path = os.path.join(tmp, f"{k}.stw")
            save_checkpoint(path, policy, baseline, metadata={"k": k})
            loaded = load_checkpoint(path)
            for (name, a), (_, b) in zip(policy.named_parameters(), loaded.policy.named_parameters()):
                expect(a.tobytes() == b.tobytes(), f"{policy.kind} parameter {name} changed in a round trip")
            expect(loaded.baseline.value.tobytes() == baseline.value.tobytes(), "baseline changed in a round trip")
            expect(loaded.metadata == {"k": k}, "metadata changed in a round trip")


SUITES = collections.OrderedDict([
    ("encoding", [check_encoding, check_action_counts]),
    ("call-stack", [check_call_stack]),
    ("distributions", [check_distribution]),
    ("gradients", [check_mlp_gradients, check_gnn_gradients, check_surrogate_gradients]),
    ("oracles", [check_search_space, check_inversions, check_knapsack_dfs, check_teachers]),
    ("determinism", [check_determinism]),
    ("checkpoint", [check_checkpoint]),
])


def run_suite(name, seed=0):
    if name not in SUITES:
        raise KeyError(f"Unknown suite: {name} (known: {', '.join(SUITES)})")
    passed, failures = 0, []
    for k, check in enumerate(SUITES[name]):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        try:
            check(rng)
            passed += 1
        except Exception as ex:  # noqa: B902 - every failure is reported, not raised
            logger.debug(traceback.format_exc())
            failures.append(f"{check.__name__}: {ex}")
    return SuiteResult(name, passed, len(failures), failures)


def run_suites(names=None, seed=0):
    return [run_suite(name, seed) for name in (names or list(SUITES))]
