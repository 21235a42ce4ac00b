import sys
import logging
import itertools
import collections

import click_log

import numpy as np

from .constants import (
    NUM_VARIABLES,
    NUM_FUNCTIONS,
    DEFAULT_STEP_PENALTY,
    STACK_LIMIT_SLACK,
    INTERFACE_FULL_VIEW,
    INTERFACE_BUBBLE_INSERTION,
    INTERFACE_QUICK_SORT,
    REWARD_SPARSE,
    REWARD_SHAPING,
)
from .vm import (
    Environment,
    InstructionSchema,
    InstructionType,
    SchemaViolation,
    OUTCOME_SOLVED,
    var_arg,
    func_arg,
    dir_arg,
    node_arg,
    encode_prev_action,
    push_call,
    pop_return,
)

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("sort_env")
click_log.basic_config(logger)


def _comparator_types(k):
    return [
        InstructionType("SwapWithNext", [var_arg("i", k)]),
        InstructionType("MoveVar", [var_arg("i", k), dir_arg()]),
        InstructionType("AssignVar", [var_arg("i", k), var_arg("j", k)]),
    ]


def bubble_insertion_schema(k=NUM_VARIABLES):
    return InstructionSchema(INTERFACE_BUBBLE_INSERTION, _comparator_types(k))


def quick_sort_schema(k=NUM_VARIABLES, num_functions=NUM_FUNCTIONS):
    call = InstructionType(
        "FunctionCall",
        [func_arg("id", num_functions), var_arg("l1", k), var_arg("l2", k),
         var_arg("o1", k), var_arg("o2", k), var_arg("r1", k)],
        is_call=True,
        passed=2,
        returned=1,
    )
    ret = InstructionType("Return", [var_arg("l1", k)], is_return=True)
    swap = InstructionType("Swap", [var_arg("i", k), var_arg("j", k)])
    return InstructionSchema(INTERFACE_QUICK_SORT, _comparator_types(k) + [call, ret, swap])


def full_view_schema():
    return InstructionSchema(INTERFACE_FULL_VIEW, [InstructionType("Swap", [node_arg("i"), node_arg("j")])])


BUBBLE_INSERTION_SCHEMA = bubble_insertion_schema()
QUICK_SORT_SCHEMA = quick_sort_schema()
FULL_VIEW_SCHEMA = full_view_schema()

SORT_SCHEMAS = {
    INTERFACE_FULL_VIEW: FULL_VIEW_SCHEMA,
    INTERFACE_BUBBLE_INSERTION: BUBBLE_INSERTION_SCHEMA,
    INTERFACE_QUICK_SORT: QUICK_SORT_SCHEMA,
}

# Widths of the fixed-size observations:
COMPARISON_WIDTH = 6 * NUM_VARIABLES * (NUM_VARIABLES - 1) // 2 + 8 * NUM_VARIABLES
QUICK_SORT_OBS_WIDTH = COMPARISON_WIDTH + (NUM_FUNCTIONS + 1) + QUICK_SORT_SCHEMA.encoding_width()


def initial_variables(low, high, k=NUM_VARIABLES):
    """v1=v3=...=low and v2=v4=...=high (1-based naming)."""
    return [low if i % 2 == 0 else high for i in range(k)]


class SortState:
    """Array machine shared by the three sorting interfaces."""

    def __init__(self, A, low=None, high=None, k=NUM_VARIABLES, stack_limit=None):
        self.A = np.array(A, dtype=np.int64)
        self.low = 0 if low is None else int(low)
        self.high = len(self.A) - 1 if high is None else int(high)
        if not 0 <= self.low <= self.high < len(self.A):
            raise ValueError(f"Bad sort range [{self.low}, {self.high}] for array of length {len(self.A)}")

        self.variables = initial_variables(self.low, self.high, k)
        self.function_id = 0
        self.prev_action = None
        self.call_stack = []
        self.stack_limit = 2 * self.n + STACK_LIMIT_SLACK if stack_limit is None else stack_limit
        self.ordered_pairs = orderedness(self.A, self.low, self.high)

    @property
    def n(self):
        return self.high - self.low + 1

    @property
    def k(self):
        return len(self.variables)

    @property
    def solved(self):
        return self.ordered_pairs == self.high - self.low

    @property
    def v(self):
        return tuple(self.variables)

    def __repr__(self):
        return (f"SortState(A={self.A.tolist()}, low={self.low}, high={self.high}, "
                f"v={self.variables}, fn={self.function_id}, depth={len(self.call_stack)})")


def new_instance(n, rng, k=NUM_VARIABLES):
    """A uniform random permutation of 0..n-1 over the full range."""
    if n < 1:
        raise ValueError(f"Instance size must be at least 1, got {n}")
    return SortState(rng.permutation(n), 0, n - 1, k=k)


def orderedness(A, low, high):
    """Number of adjacent pairs A[i] <= A[i+1] for i in [low, high-1]."""
    if high <= low:
        return 0
    seg = np.asarray(A[low: high + 1])
    return int(np.count_nonzero(seg[:-1] <= seg[1:]))


def shaping_reward(prev_h, next_h, c=DEFAULT_STEP_PENALTY):
    return next_h - prev_h - c


def _swap(state, p, q):
    """Swap A[p] and A[q] keeping ordered_pairs current."""
    if p == q:
        return
    A = state.A
    touched = sorted({t for t in (p - 1, p, q - 1, q) if state.low <= t < state.high})
    before = sum(1 for t in touched if A[t] <= A[t + 1])
    A[p], A[q] = A[q], A[p]
    after = sum(1 for t in touched if A[t] <= A[t + 1])
    state.ordered_pairs += after - before


_PAIR_CACHE = {}


def variable_pairs(k):
    if k not in _PAIR_CACHE:
        _PAIR_CACHE[k] = list(itertools.combinations(range(k), 2))
    return _PAIR_CACHE[k]


def comparison_features(A, low, high, variables):
    """The variable/value comparison block shared by the sort and search interfaces.

    Per pair i<j: [v_i<v_j, v_i=v_j, v_i>v_j, A[v_i]<A[v_j], A[v_i]=A[v_j], A[v_i]>A[v_j]].
    Per variable: the left-neighbour block followed by the right-neighbour block."""

    vals = [A[v] for v in variables]
    out = []
    for i, j in variable_pairs(len(variables)):
        vi, vj = variables[i], variables[j]
        ai, aj = vals[i], vals[j]
        out += [vi < vj, vi == vj, vi > vj, ai < aj, ai == aj, ai > aj]

    for v, a in zip(variables, vals):
        if v - 1 < low:
            out += [1, 0, 0, 0]
        else:
            b = A[v - 1]
            out += [0, a > b, a == b, a < b]
        if v + 1 > high:
            out += [0, 0, 0, 1]
        else:
            b = A[v + 1]
            out += [a > b, a == b, a < b, 0]

    return np.array(out, dtype=float)


def observe_bubble_insertion(state):
    return comparison_features(state.A, state.low, state.high, state.variables)


def function_one_hot(function_id, num_functions=NUM_FUNCTIONS):
    vec = np.zeros(num_functions + 1)
    vec[function_id] = 1.0
    return vec


def observe_quicksort(state, schema=QUICK_SORT_SCHEMA):
    return np.concatenate([
        observe_bubble_insertion(state),
        function_one_hot(state.function_id),
        encode_prev_action(schema, state.prev_action),
    ])


class SortGraphObservation(collections.namedtuple("SortGraphObservation", ["node_features", "edge_tensor"])):
    """Fully connected graph over the range: n x 1 node features of ones and,
    for every ordered pair (i, j) with i != j, the edge feature
    [sign(i - j), sign(A[i] - A[j])]. `edge_tensor[i, j]` holds the feature of
    edge (i, j); its diagonal is zero and is never an edge."""

    @property
    def num_nodes(self):
        return self.node_features.shape[0]

    @property
    def edges(self):
        n = self.num_nodes
        return np.array([(i, j) for i in range(n) for j in range(n) if i != j], dtype=np.int64).reshape(-1, 2)

    @property
    def edge_features(self):
        e = self.edges
        return self.edge_tensor[e[:, 0], e[:, 1]] if len(e) else np.zeros((0, 2))


def observe_full_view(state):
    seg = state.A[state.low: state.high + 1]
    idx = np.arange(state.n)
    pos = np.sign(idx[:, None] - idx[None, :])
    val = np.sign(seg[:, None] - seg[None, :])
    return SortGraphObservation(np.ones((state.n, 1)), np.stack([pos, val], axis=-1).astype(float))


def apply_sort_instruction(state, schema, instruction, reward_mode=REWARD_SPARSE, c=DEFAULT_STEP_PENALTY):
    """Apply one instruction in place and return (state, reward)."""

    name = schema.name_of(instruction)
    args = instruction.args
    v = state.variables
    prev_h = state.ordered_pairs
    set_prev = True

    if schema.name == INTERFACE_FULL_VIEW:
        if name != "Swap":
            raise SchemaViolation(f"{name} is not part of the {schema.name} interface")
        _swap(state, state.low + args[0], state.low + args[1])

    elif name == "SwapWithNext":
        p = v[args[0]]
        if p < state.high:
            _swap(state, p, p + 1)

    elif name == "MoveVar":
        i, up = args
        v[i] = min(v[i] + 1, state.high) if up else max(v[i] - 1, state.low)

    elif name == "AssignVar":
        v[args[0]] = v[args[1]]

    elif name == "Swap":
        _swap(state, v[args[0]], v[args[1]])

    elif name == "FunctionCall":
        push_call(state, schema, instruction)
        set_prev = False

    elif name == "Return":
        # Returning from the outermost scope is a counted no-op.
        set_prev = not pop_return(state, schema, instruction)

    else:
        raise SchemaViolation(f"{name} is not a sorting instruction")

    if set_prev:
        state.prev_action = instruction

    if reward_mode == REWARD_SHAPING:
        reward = shaping_reward(prev_h, state.ordered_pairs, c)
    else:
        reward = -c

    return state, reward


class SortEnv(Environment):
    """One of the three sorting interfaces over a SortState."""

    def __init__(self, state, interface=INTERFACE_BUBBLE_INSERTION, reward_mode=REWARD_SPARSE,
                 step_penalty=DEFAULT_STEP_PENALTY):
        super().__init__()
        if interface not in SORT_SCHEMAS:
            raise ValueError(f"Unknown sorting interface: {interface}")

        self.interface = interface
        self.schema = SORT_SCHEMAS[interface]
        self.state = state
        self.reward_mode = reward_mode
        self.step_penalty = step_penalty

        if state.solved:
            self.status = OUTCOME_SOLVED

    @property
    def pointer_size(self):
        return self.state.n if self.interface == INTERFACE_FULL_VIEW else None

    @property
    def size(self):
        return self.state.n

    def observe(self):
        if self.interface == INTERFACE_FULL_VIEW:
            return observe_full_view(self.state)
        if self.interface == INTERFACE_QUICK_SORT:
            return observe_quicksort(self.state, self.schema)
        return observe_bubble_insertion(self.state)

    def step(self, instruction):
        _, reward = apply_sort_instruction(self.state, self.schema, instruction, self.reward_mode, self.step_penalty)
        if self.state.solved:
            self.status = OUTCOME_SOLVED
        return reward
