import sys
import logging
import itertools

import click_log

import numpy as np

from .constants import INTERFACE_KNAPSACK, STACK_LIMIT_SLACK
from .vm import (
    Environment,
    InstructionSchema,
    InstructionType,
    SchemaViolation,
    OUTCOME_SOLVED,
    OUTCOME_BUDGET_EXHAUSTED,
    dir_arg,
    encode_prev_action,
    push_call,
    pop_return,
)

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("knapsack_env")
click_log.basic_config(logger)


KNAPSACK_SCHEMA = InstructionSchema(INTERFACE_KNAPSACK, [
    InstructionType("Put"),
    InstructionType("Pop"),
    InstructionType("MoveVar", [dir_arg()]),
    InstructionType("Knapsack", is_call=True),
    InstructionType("Return", is_return=True),
])

NUM_KNAPSACK_FEATURES = 7
KNAPSACK_OBS_WIDTH = NUM_KNAPSACK_FEATURES + KNAPSACK_SCHEMA.encoding_width()


class KnapsackState:
    """Search state for 0/1 knapsack.

    The call stack only saves the previous action (depth is its length);
    the item index and the current solution persist across Return."""

    def __init__(self, w, val, W=None, stack_limit=None):
        self.w = np.array(w, dtype=float)
        self.val = np.array(val, dtype=float)
        if self.w.shape != self.val.shape or self.w.ndim != 1 or len(self.w) < 1:
            raise ValueError("Weights and values must be equal-length nonempty vectors")

        self.W = 0.5 * float(np.sum(self.w)) if W is None else float(W)
        self.i = 0
        self.in_sol = np.zeros(len(self.w), dtype=bool)
        self.cur_w = 0.0
        self.cur_v = 0.0
        self.best_v = 0.0
        self.prev_action = None
        self.call_stack = []
        self.stack_limit = 2 * self.n + STACK_LIMIT_SLACK if stack_limit is None else stack_limit
        self.budget_left = None

        # Knapsack() carries no function id and passes no variables:
        self.variables = []
        self.function_id = 0

    @property
    def n(self):
        return len(self.w)

    @property
    def depth(self):
        return len(self.call_stack)

    @property
    def sol(self):
        return frozenset(int(j) for j in np.flatnonzero(self.in_sol))

    def __repr__(self):
        return (f"KnapsackState(n={self.n}, i={self.i}, sol={sorted(self.sol)}, w={self.cur_w:.4f}/{self.W:.4f}, "
                f"v={self.cur_v:.4f}, best={self.best_v:.4f}, depth={self.depth})")


def new_knapsack_instance(n, rng):
    """Weights and values from U[0, 1], capacity half the total weight."""
    if n < 1:
        raise ValueError(f"Instance size must be at least 1, got {n}")
    w = rng.random(n)
    val = rng.random(n)
    return KnapsackState(w, val)


def _rest_start(state):
    i = state.i
    if 0 <= i < state.n and state.in_sol[i]:
        return i + 1
    return max(i, 0)


def knapsack_features(state):
    i, n = state.i, state.n
    start = _rest_start(state)
    v_rest = float(np.sum(state.val[start:]))
    w_rest = float(np.sum(state.w[start:]))
    w_min = float(np.min(state.w[start:])) if start < n else np.inf
    in_sol = 0 <= i < n and state.in_sol[i]

    return np.array([
        np.sign(i),
        np.sign(i - n),
        in_sol,
        state.cur_w <= state.W,
        state.cur_v + v_rest > state.best_v,
        state.cur_w + w_rest <= state.W,
        state.cur_w + w_min <= state.W,
    ], dtype=float)


def observe_knapsack(state, schema=KNAPSACK_SCHEMA):
    return np.concatenate([knapsack_features(state), encode_prev_action(schema, state.prev_action)])


def apply_knapsack_instruction(state, schema, instruction):
    """Apply one instruction in place; returns (state, reward, terminal)."""

    name = schema.name_of(instruction)
    i, n = state.i, state.n
    best_before = state.best_v
    terminal = False
    set_prev = True

    if name == "Put":
        if 0 <= i < n and not state.in_sol[i]:
            state.in_sol[i] = True
            state.cur_w += state.w[i]
            state.cur_v += state.val[i]
    elif name == "Pop":
        if 0 <= i < n and state.in_sol[i]:
            state.in_sol[i] = False
            state.cur_w -= state.w[i]
            state.cur_v -= state.val[i]
    elif name == "MoveVar":
        state.i = min(i + 1, n) if instruction.args[0] else max(i - 1, -1)
    elif name == "Knapsack":
        push_call(state, schema, instruction)
        set_prev = False
    elif name == "Return":
        if pop_return(state, schema, instruction):
            set_prev = False
        else:
            terminal = True
    else:
        raise SchemaViolation(f"{name} is not a knapsack instruction")

    if set_prev:
        state.prev_action = instruction

    if state.cur_w <= state.W and state.cur_v > state.best_v:
        state.best_v = state.cur_v

    return state, state.best_v - best_before, terminal


def brute_force_optimum(w, val, W):
    """Exact optimum by enumerating all 2^n subsets."""
    w = np.asarray(w, dtype=float)
    val = np.asarray(val, dtype=float)
    best = 0.0
    for mask in itertools.product([False, True], repeat=len(w)):
        m = np.array(mask, dtype=bool)
        if np.sum(w[m]) <= W:
            best = max(best, float(np.sum(val[m])))
    return best


class KnapsackEnv(Environment):
    schema = KNAPSACK_SCHEMA

    def __init__(self, state, budget=None):
        super().__init__()
        self.state = state
        self.state.budget_left = budget

    @property
    def size(self):
        return self.state.n

    def observe(self):
        return observe_knapsack(self.state, self.schema)

    def step(self, instruction):
        _, reward, terminal = apply_knapsack_instruction(self.state, self.schema, instruction)

        if terminal:
            self.status = OUTCOME_SOLVED
        elif self.state.budget_left is not None:
            self.state.budget_left -= 1
            if self.state.budget_left <= 0:
                self.status = OUTCOME_BUDGET_EXHAUSTED

        return reward
