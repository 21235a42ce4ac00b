import sys
import copy
import math
import logging
import collections
import concurrent.futures

import click_log
import tqdm

import numpy as np
import pandas as pd

from .constants import (
    NUM_VARIABLES,
    NUM_FUNCTIONS,
    DEFAULT_EVAL_EPISODES,
    DEFAULT_STEP_PENALTY,
    LONG_RUNNING_SIZE,
    INTERFACE_FULL_VIEW,
    INTERFACE_BUBBLE_INSERTION,
    INTERFACE_QUICK_SORT,
    INTERFACE_KNAPSACK,
    TASK_SORT,
    TASK_SEARCH,
    QUERY_MIXED,
    REWARD_SPARSE,
)
from .vm import (
    SchemaViolation,
    StackOverflow,
    OUTCOME_BUDGET_EXHAUSTED,
    VARIABLE_LETTERS,
    FUNCTION_LETTERS,
    run_episode,
)
from .sort_env import bubble_insertion_schema, quick_sort_schema
from .tasks import get_interface, make_env, new_task_instance

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("bench")
click_log.basic_config(logger)


class TraceMismatch(ValueError):
    """A trace cannot have been produced from the given instance."""


def episode_rng(seed, size, index):
    """Per-episode generator; independent of scheduling and thread count."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(size), int(index)]))


EpisodeResult = collections.namedtuple(
    "EpisodeResult", ["index", "length", "solved", "outcome", "reward", "value", "swaps_with_next", "min_swaps"]
)


def run_evaluation_episode(agent, interface, n, index, seed, cap, query_mode=QUERY_MIXED,
                           reward_mode=REWARD_SPARSE, step_penalty=DEFAULT_STEP_PENALTY):
    """One fresh instance from (seed, n, index), driven for at most `cap` steps."""

    rng = episode_rng(seed, n, index)
    state = new_task_instance(interface, n, rng, query_mode)
    min_swaps = min_swaps_lower_bound(state.A) if get_interface(interface).task == TASK_SORT else None

    budget = cap if interface == INTERFACE_KNAPSACK else None
    env = make_env(interface, state, reward_mode, step_penalty, budget=budget)
    audit = interface == INTERFACE_BUBBLE_INSERTION
    trace = run_episode(env, agent, cap, rng, record=audit)

    # An episode cut short is charged the whole cap:
    length = cap if trace.outcome == OUTCOME_BUDGET_EXHAUSTED else len(trace)
    value = float(state.best_v) if interface == INTERFACE_KNAPSACK else float("nan")
    swaps = None
    if audit:
        swap_id = env.schema.type_id("SwapWithNext")
        swaps = sum(1 for instr in trace.instructions if instr.type_id == swap_id)

    logger.debug("%s n=%d #%d: %s after %d steps", interface, n, index, trace.outcome, len(trace))
    return EpisodeResult(index, length, trace.solved, trace.outcome, trace.total_reward, value, swaps, min_swaps)


def record_episode(agent, interface, n, index, seed, cap, query_mode=QUERY_MIXED, reward_mode=REWARD_SPARSE,
                   step_penalty=DEFAULT_STEP_PENALTY):
    """The episode `run_evaluation_episode` plays for (seed, n, index), with every step kept.

    :return: (instance as drawn, EpisodeTrace)"""

    rng = episode_rng(seed, n, index)
    state = new_task_instance(interface, n, rng, query_mode)
    instance = copy.deepcopy(state)
    budget = cap if interface == INTERFACE_KNAPSACK else None
    env = make_env(interface, state, reward_mode, step_penalty, budget=budget)
    return instance, run_episode(env, agent, cap, rng, record=True)


def _mean_min_swaps(results):
    bounds = [r.min_swaps for r in results if r.min_swaps is not None]
    return float(np.mean(bounds)) if bounds else float("nan")


class EvalReport:
    """Per (agent, size) aggregates of an evaluation run."""

    COLUMNS = [
        "agent", "interface", "query_mode", "size", "episodes", "solved", "solve_rate", "mean_length",
        "std_length", "ci95_length", "mean_reward", "mean_value", "mean_min_swaps", "cap", "cap_rule", "seed",
    ]

    def __init__(self, rows=None):
        self.rows = list(rows) if rows else []
        self.episodes = []

    def add(self, agent_name, interface, query_mode, size, cap, cap_rule, seed, results):
        lengths = np.array([r.length for r in results], dtype=float)
        solved = int(sum(r.solved for r in results))
        k = len(results)
        std = float(np.std(lengths, ddof=1)) if k > 1 else 0.0
        self.rows.append(dict(
            agent=agent_name,
            interface=interface,
            query_mode=query_mode,
            size=int(size),
            episodes=k,
            solved=solved,
            solve_rate=100.0 * solved / k if k else float("nan"),
            mean_length=float(lengths.mean()) if k else float("nan"),
            std_length=std,
            ci95_length=1.96 * std / math.sqrt(k) if k else float("nan"),
            mean_reward=float(np.mean([r.reward for r in results])) if k else float("nan"),
            mean_value=float(np.mean([r.value for r in results])) if k else float("nan"),
            mean_min_swaps=_mean_min_swaps(results),
            cap=int(cap),
            cap_rule=str(cap_rule),
            seed=int(seed),
        ))
        self.episodes.extend((agent_name, size, r) for r in results)

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=self.COLUMNS)

    def pivot(self, value="mean_length"):
        """Table view: one row per agent (and query mode), one column per size."""
        frame = self.to_frame()
        index = ["agent", "query_mode"] if frame["query_mode"].nunique() > 1 else ["agent"]
        return frame.pivot_table(index=index, columns="size", values=value, aggfunc="first")

    def table(self):
        """Solve rate and mean length side by side for every size."""
        frame = self.to_frame()
        solve = self.pivot("solve_rate")
        length = self.pivot("mean_length")
        parts = []
        for size in sorted(frame["size"].unique()):
            parts.append(solve[size].rename(f"{size}:solve_rate"))
            parts.append(length[size].rename(f"{size}:mean_length"))
        return pd.concat(parts, axis=1)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    @staticmethod
    def concat(reports):
        out = EvalReport()
        for r in reports:
            out.rows.extend(r.rows)
            out.episodes.extend(r.episodes)
        return out

    def __len__(self):
        return len(self.rows)


def check_sizes(sizes, allow_long=False):
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes):
        raise ValueError(f"Sizes must be positive: {sizes}")
    too_long = [s for s in sizes if s >= LONG_RUNNING_SIZE]
    if too_long and not allow_long:
        raise ValueError(
            f"Sizes {too_long} take very long to evaluate; pass the long-running flag to run them anyway"
        )
    return sizes


def evaluate(agent, interface, sizes, episodes=DEFAULT_EVAL_EPISODES, cap_rule=None, seed=0, threads=1,
             query_mode=QUERY_MIXED, allow_long=False, agent_name=None, reward_mode=REWARD_SPARSE,
             step_penalty=DEFAULT_STEP_PENALTY, progress=True):
    """Run `episodes` fresh instances per size and aggregate them.

    :param agent: anything with `act(observation, rng)`; learned policies should be wrapped greedily
    :param cap_rule: CapRule; defaults to the interface's own rule
    :param threads: worker count; 1 runs in-process
    :return: EvalReport"""

    sizes = check_sizes(sizes, allow_long)
    if episodes < 1:
        raise ValueError(f"episodes must be at least 1, got {episodes}")
    cap_rule = get_interface(interface).cap_rule if cap_rule is None else cap_rule
    agent_name = agent_name or getattr(agent, "name", repr(agent))

    report = EvalReport()
    for n in sizes:
        cap = cap_rule.cap(n)
        logger.info("Evaluating %s on %s n=%d (%d episodes, cap %d)", agent_name, interface, n, episodes, cap)
        results = [None] * episodes

        with tqdm.tqdm(desc="Progress", unit=" episode", total=episodes, colour="green", file=sys.stderr,
                       disable=not progress, leave=False) as pbar:
            if threads <= 1:
                for idx in range(episodes):
                    results[idx] = run_evaluation_episode(agent, interface, n, idx, seed, cap, query_mode,
                                                          reward_mode, step_penalty)
                    pbar.update(1)
            else:
                with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
                    futures = [
                        executor.submit(run_evaluation_episode, agent, interface, n, idx, seed, cap, query_mode,
                                        reward_mode, step_penalty)
                        for idx in range(episodes)
                    ]
                    for future in concurrent.futures.as_completed(futures):
                        r = future.result()
                        results[r.index] = r
                        pbar.update(1)

        report.add(agent_name, interface, query_mode, n, cap, cap_rule, seed, results)
        row = report.rows[-1]
        logger.info("n=%d: solved %d/%d, mean length %.1f", n, row["solved"], row["episodes"], row["mean_length"])

    return report


def inversion_count(A):
    """Pairs i < j with A[i] > A[j], by merge sort."""

    values = list(np.asarray(A).tolist())
    count = 0
    width = 1
    n = len(values)
    while width < n:
        merged = []
        for lo in range(0, n, 2 * width):
            left = values[lo: lo + width]
            right = values[lo + width: lo + 2 * width]
            i = j = 0
            while i < len(left) and j < len(right):
                if right[j] < left[i]:
                    merged.append(right[j])
                    count += len(left) - i
                    j += 1
                else:
                    merged.append(left[i])
                    i += 1
            merged.extend(left[i:])
            merged.extend(right[j:])
        values = merged
        width *= 2
    return count


def min_swaps_lower_bound(A):
    """Adjacent swaps needed to sort A: each one removes at most one inversion."""
    return inversion_count(A)


SearchSpace = collections.namedtuple("SearchSpace", ["actions", "states", "log10_programs"])


def search_space_size(interface, k=NUM_VARIABLES):
    """Action count, observation-state estimate and log10 of the number of
    deterministic programs |A|^|S| for the comparator interfaces.

    The state estimate counts the pairwise variable/value comparisons (3 x 3
    per pair) and the two neighbour comparisons per variable (4 x 4). The
    quick-sort interface further multiplies by the function one-hot and the
    previous-action encoding (every action plus none)."""

    if interface == INTERFACE_BUBBLE_INSERTION:
        actions = len(bubble_insertion_schema(k).enumerate())
        states = 9 ** (k * (k - 1) // 2) * 16 ** k
    elif interface == INTERFACE_QUICK_SORT:
        actions = len(quick_sort_schema(k, NUM_FUNCTIONS).enumerate())
        states = 9 ** (k * (k - 1) // 2) * 16 ** k * (NUM_FUNCTIONS + 1) * (actions + 1)
    else:
        raise ValueError(f"Search-space sizes are defined for the comparator interfaces, not {interface}")
    return SearchSpace(actions, states, states * math.log10(actions))


def _function_name(function_id):
    return "main" if not function_id else f"Func{FUNCTION_LETTERS[function_id - 1]}"


def _array_lines(values, variables, lo=0):
    cell = max(len(str(v)) for v in values) + 2
    lines = ["".join(str(v).rjust(cell) for v in values)]

    # Variables sharing a position are stacked on separate lines:
    rows = []
    for name, pos in zip(VARIABLE_LETTERS, variables):
        for row in rows:
            if pos not in row:
                row[pos] = name
                break
        else:
            rows.append({pos: name})
    for row in rows:
        line = "".join((row.get(lo + i, "")).rjust(cell) for i in range(len(values)))
        lines.append(line.rstrip())
    return lines


def _state_lines(interface, state, schema):
    if interface == INTERFACE_KNAPSACK:
        items = []
        for j in range(state.n):
            mark = "*" if state.in_sol[j] else " "
            items.append(f"{mark}{state.w[j]:.2f}/{state.val[j]:.2f}")
        cell = max(len(s) for s in items) + 2
        lines = ["".join(s.rjust(cell) for s in items)]
        pointer = ["".rjust(cell) for _ in range(state.n)]
        if 0 <= state.i < state.n:
            pointer[state.i] = "^".rjust(cell)
        position = {-1: "(before first item)", state.n: "(past last item)"}.get(state.i, "")
        lines.append(("".join(pointer) + " " + position).rstrip())
        lines.append(f"weight {state.cur_w:.3f}/{state.W:.3f}  value {state.cur_v:.3f}  best {state.best_v:.3f}")
        return lines

    task = get_interface(interface).task
    if task == TASK_SEARCH:
        return _array_lines(state.A.tolist(), state.variables) + [f"query: {state.q}"]

    values = state.A[state.low: state.high + 1].tolist()
    if interface == INTERFACE_FULL_VIEW:
        return _array_lines(values, [])
    return _array_lines(values, state.variables, lo=state.low)


def _frame(interface, state, schema, step, total, reward, cumulative, log):
    header = f"step {step}/{total}"
    if getattr(state, "function_id", None) is not None and interface == INTERFACE_QUICK_SORT:
        header += f"  function: {_function_name(state.function_id)}"
    if reward is not None:
        header += f"  reward: {reward:+.4g}  total: {cumulative:+.4g}"

    lines = [header, f"prev: {schema.format(getattr(state, 'prev_action', None))}"]
    lines += _state_lines(interface, state, schema)

    stack = getattr(state, "call_stack", None)
    if stack:
        lines.append("stack (newest last):")
        lines += [f"  [{d}] {entry}" for d, entry in enumerate(stack, start=1)]
    if log:
        lines.append("log (newest first):")
        lines += [f"  {s}" for s in log]
    return "\n".join(lines)


def instance_size(state):
    return state.n


def render_trace(trace, instance, interface, reward_mode=REWARD_SPARSE, step_penalty=DEFAULT_STEP_PENALTY,
                 log_window=8, check_rewards=True):
    """Replay `trace` on a copy of `instance` and draw one text frame per state.

    Frame 0 is the reset state; frame t follows the t-th instruction.

    :raises TraceMismatch: the trace does not fit the instance"""

    if trace.instance_size is not None and trace.instance_size != instance_size(instance):
        raise TraceMismatch(f"Trace was recorded on size {trace.instance_size}, instance has size "
                            f"{instance_size(instance)}")
    if trace.record is False and len(trace):
        raise TraceMismatch("Trace holds no per-step records to replay")

    state = copy.deepcopy(instance)
    env = make_env(interface, state, reward_mode, step_penalty)
    schema = env.schema
    total = len(trace)

    frames = [_frame(interface, state, schema, 0, total, None, 0.0, [])]
    log = []
    cumulative = 0.0
    for t, step in enumerate(trace.steps, start=1):
        if env.done:
            raise TraceMismatch(f"Episode ended after {t - 1} steps but the trace continues")
        try:
            schema.validate(step.instruction, env.pointer_size)
            reward = env.step(step.instruction)
        except (SchemaViolation, StackOverflow) as ex:
            raise TraceMismatch(f"Step {t} cannot be replayed: {ex}") from ex

        if check_rewards and not math.isclose(reward, step.reward, rel_tol=1e-9, abs_tol=1e-9):
            raise TraceMismatch(f"Step {t} replays with reward {reward}, trace recorded {step.reward}")
        cumulative += reward
        log = [schema.format(step.instruction)] + log[: log_window - 1]
        frames.append(_frame(interface, state, schema, t, total, reward, cumulative, log))

    return frames
