import sys
import logging

import click_log

import numpy as np

from .constants import (
    NUM_VARIABLES,
    DEFAULT_STEP_PENALTY,
    INTERFACE_SEARCH,
    QUERY_MIXED,
    QUERY_MEMBER,
    QUERY_NON_MEMBER,
    MIXED_MEMBER_RATE,
)
from .vm import (
    Environment,
    InstructionSchema,
    InstructionType,
    SchemaViolation,
    OUTCOME_SOLVED,
    OUTCOME_TERMINATED_WRONG,
    var_arg,
    dir_arg,
    encode_prev_action,
)
from .sort_env import comparison_features

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("search_env")
click_log.basic_config(logger)


def search_schema(k=NUM_VARIABLES):
    return InstructionSchema(INTERFACE_SEARCH, [
        InstructionType("MoveVar", [var_arg("i", k), dir_arg()]),
        InstructionType("AssignVar", [var_arg("i", k), var_arg("j", k)]),
        InstructionType("AssignMid", [var_arg("i", k), var_arg("j", k), var_arg("k", k)]),
        InstructionType("Found", [var_arg("i", k)], is_terminal=True),
        InstructionType("NotFound", [], is_terminal=True),
    ])


SEARCH_SCHEMA = search_schema()

QUERY_WIDTH = 3 * NUM_VARIABLES
SEARCH_OBS_WIDTH = 6 * NUM_VARIABLES * (NUM_VARIABLES - 1) // 2 + 8 * NUM_VARIABLES + QUERY_WIDTH \
    + SEARCH_SCHEMA.encoding_width()

# Result markers held in SearchState.terminal_result:
NOT_FOUND = "not-found"


class SearchState:
    """Sorted array, query and index variables for searching an ordered list."""

    def __init__(self, A, q, k=NUM_VARIABLES):
        self.A = np.array(A, dtype=np.int64)
        if len(self.A) < 1:
            raise ValueError("Search instances need at least one element")
        if np.any(self.A[1:] < self.A[:-1]):
            raise ValueError("Search arrays must be sorted nondecreasing")

        self.q = int(q)
        self.low = 0
        self.high = len(self.A) - 1
        # v1=v2=low, v3=v4=high:
        self.variables = [self.low if i < k // 2 else self.high for i in range(k)]
        self.prev_action = None
        self.terminal_result = None

    @property
    def n(self):
        return len(self.A)

    @property
    def query_present(self):
        idx = np.searchsorted(self.A, self.q)
        return bool(idx < self.n and self.A[idx] == self.q)

    def __repr__(self):
        return f"SearchState(A={self.A.tolist()}, q={self.q}, v={self.variables})"


def new_search_instance(n, rng, mode=QUERY_MIXED, k=NUM_VARIABLES):
    """Sorted draws (with repeats) from [0, n) and a query that is present in
    the array (member) or a value in [-1, n] that is not (non-member).

    The mixed sampler picks a member query with probability MIXED_MEMBER_RATE."""
    if n < 1:
        raise ValueError(f"Instance size must be at least 1, got {n}")

    A = np.sort(rng.integers(n, size=n))
    if mode == QUERY_MEMBER:
        member = True
    elif mode == QUERY_NON_MEMBER:
        member = False
    elif mode == QUERY_MIXED:
        member = bool(rng.random() < MIXED_MEMBER_RATE)
    else:
        raise ValueError(f"Unknown query mode: {mode}")

    if member:
        q = int(A[rng.integers(n)])
    else:
        # -1 and n are always absent.
        q = int(rng.choice(np.setdiff1d(np.arange(-1, n + 1), A)))

    return SearchState(A, q, k=k)


def query_features(A, q, variables):
    out = []
    for v in variables:
        a = A[v]
        out += [q < a, q == a, q > a]
    return np.array(out, dtype=float)


def observe_search(state, schema=SEARCH_SCHEMA):
    return np.concatenate([
        comparison_features(state.A, state.low, state.high, state.variables),
        query_features(state.A, state.q, state.variables),
        encode_prev_action(schema, state.prev_action),
    ])


def apply_search_instruction(state, schema, instruction, c=DEFAULT_STEP_PENALTY, penalty=None):
    """Apply one instruction in place; returns (state, reward, terminal)."""

    name = schema.name_of(instruction)
    args = instruction.args
    v = state.variables
    penalty = state.n if penalty is None else penalty
    reward = -c
    terminal = False

    if name == "MoveVar":
        i, up = args
        v[i] = min(v[i] + 1, state.high) if up else max(v[i] - 1, state.low)
    elif name == "AssignVar":
        v[args[0]] = v[args[1]]
    elif name == "AssignMid":
        i, j, k = args
        v[i] = (v[j] + v[k]) // 2
    elif name == "Found":
        terminal = True
        state.terminal_result = v[args[0]]
        if state.A[v[args[0]]] != state.q:
            reward -= penalty
    elif name == "NotFound":
        terminal = True
        state.terminal_result = NOT_FOUND
        if state.query_present:
            reward -= penalty
    else:
        raise SchemaViolation(f"{name} is not a search instruction")

    state.prev_action = instruction
    return state, reward, terminal


def terminal_correct(state):
    if state.terminal_result is None:
        return False
    if state.terminal_result == NOT_FOUND:
        return not state.query_present
    return bool(state.A[state.terminal_result] == state.q)


class SearchEnv(Environment):
    schema = SEARCH_SCHEMA

    def __init__(self, state, step_penalty=DEFAULT_STEP_PENALTY, penalty=None):
        super().__init__()
        self.state = state
        self.step_penalty = step_penalty
        self.penalty = penalty

    @property
    def size(self):
        return self.state.n

    def observe(self):
        return observe_search(self.state, self.schema)

    def step(self, instruction):
        _, reward, terminal = apply_search_instruction(
            self.state, self.schema, instruction, self.step_penalty, self.penalty
        )
        if terminal:
            self.status = OUTCOME_SOLVED if terminal_correct(self.state) else OUTCOME_TERMINATED_WRONG
        return reward
