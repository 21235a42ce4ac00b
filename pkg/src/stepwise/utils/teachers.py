import sys
import logging

import click_log

import numpy as np

from .constants import (
    NUM_VARIABLES,
    NUM_FUNCTIONS,
    INTERFACE_FULL_VIEW,
    INTERFACE_BUBBLE_INSERTION,
    INTERFACE_QUICK_SORT,
    INTERFACE_SEARCH,
    INTERFACE_KNAPSACK,
)
from .vm import decode_prev_action, ARG_BOOL
from .sort_env import (
    FULL_VIEW_SCHEMA,
    BUBBLE_INSERTION_SCHEMA,
    QUICK_SORT_SCHEMA,
    COMPARISON_WIDTH,
    variable_pairs,
)
from .search_env import SEARCH_SCHEMA, QUERY_WIDTH
from .knapsack_env import KNAPSACK_SCHEMA, NUM_KNAPSACK_FEATURES

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("teachers")
click_log.basic_config(logger)


def _sign3(block):
    """[lt, eq, gt] indicator block -> -1 / 0 / +1."""
    if block[0] > 0.5:
        return -1
    if block[1] > 0.5:
        return 0
    return 1


class ComparisonView:
    """Read-only decoding of the comparison block of an interface observation."""

    def __init__(self, obs, k=NUM_VARIABLES):
        self.obs = obs
        self.k = k
        self._pair_index = {p: n for n, p in enumerate(variable_pairs(k))}
        self._var_base = 6 * len(self._pair_index)

    def _pair(self, i, j):
        if i < j:
            base = 6 * self._pair_index[(i, j)]
            return self.obs[base: base + 6], 1
        base = 6 * self._pair_index[(j, i)]
        return self.obs[base: base + 6], -1

    def var_cmp(self, i, j):
        """sign(v_i - v_j)"""
        if i == j:
            return 0
        block, s = self._pair(i, j)
        return s * _sign3(block[:3])

    def val_cmp(self, i, j):
        """sign(A[v_i] - A[v_j])"""
        if i == j:
            return 0
        block, s = self._pair(i, j)
        return s * _sign3(block[3:])

    def left(self, i):
        """sign(A[v_i] - A[v_i - 1]), or None when v_i is at low."""
        b = self.obs[self._var_base + 8 * i: self._var_base + 8 * i + 4]
        if b[0] > 0.5:
            return None
        return 1 if b[1] > 0.5 else (0 if b[2] > 0.5 else -1)

    def right(self, i):
        """sign(A[v_i] - A[v_i + 1]), or None when v_i is at high."""
        b = self.obs[self._var_base + 8 * i + 4: self._var_base + 8 * i + 8]
        if b[3] > 0.5:
            return None
        return 1 if b[0] > 0.5 else (0 if b[1] > 0.5 else -1)

    def at_low(self, i):
        return self.left(i) is None

    def at_high(self, i):
        return self.right(i) is None


class QuickSortView(ComparisonView):
    def __init__(self, obs, schema=QUICK_SORT_SCHEMA, k=NUM_VARIABLES, num_functions=NUM_FUNCTIONS):
        super().__init__(obs, k)
        fn_end = COMPARISON_WIDTH + num_functions + 1
        self.function_id = int(np.argmax(obs[COMPARISON_WIDTH: fn_end]))
        self.prev = decode_prev_action(schema, obs[fn_end:])


class SearchView(ComparisonView):
    def __init__(self, obs, schema=SEARCH_SCHEMA, k=NUM_VARIABLES):
        super().__init__(obs, k)
        self.prev = decode_prev_action(schema, obs[COMPARISON_WIDTH + QUERY_WIDTH:])

    def query_cmp(self, i):
        """sign(q - A[v_i])"""
        return _sign3(self.obs[COMPARISON_WIDTH + 3 * i: COMPARISON_WIDTH + 3 * i + 3])


class KnapsackView:
    def __init__(self, obs, schema=KNAPSACK_SCHEMA):
        f = obs[:NUM_KNAPSACK_FEATURES]
        self.sign_i = int(f[0])
        self.sign_i_minus_n = int(f[1])
        self.in_sol = f[2] > 0.5
        self.weight_ok = f[3] > 0.5
        self.can_improve = f[4] > 0.5
        self.rest_fits = f[5] > 0.5
        self.one_more_fits = f[6] > 0.5
        self.prev = decode_prev_action(schema, obs[NUM_KNAPSACK_FEATURES:])


class Teacher:
    """A deterministic scripted agent: observation in, instruction out."""

    name = None
    interface = None
    schema = None

    def act(self, obs, rng=None):
        return self.decide(obs)

    def decide(self, obs):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.interface})"


class SelectionTeacher(Teacher):
    """Put the smallest out-of-place rank into its slot (full-view interface)."""

    name = "selection"
    interface = INTERFACE_FULL_VIEW
    schema = FULL_VIEW_SCHEMA

    @staticmethod
    def ranks(graph):
        cmp = graph.edge_tensor[:, :, 1]
        # Ties broken by position: among equal values the lower index ranks first.
        earlier_ties = np.tril((cmp == 0).astype(int), k=-1).sum(axis=1)
        return (cmp > 0).sum(axis=1) + earlier_ties

    def decide(self, graph):
        ranks = self.ranks(graph)
        for slot, r in enumerate(ranks):
            if r != slot:
                pos = int(np.flatnonzero(ranks == slot)[0])
                return self.schema.make("Swap", slot, pos)
        return self.schema.make("Swap", 0, 0)


class BubbleTeacher(Teacher):
    name = "bubble"
    interface = INTERFACE_BUBBLE_INSERTION
    schema = BUBBLE_INSERTION_SCHEMA

    def decide(self, obs):
        view = ComparisonView(obs)
        make = self.schema.make
        i, j, l = 0, 1, 2

        c = view.var_cmp(i, j)
        if c < 0:
            if view.right(i) == 1:
                return make("SwapWithNext", i)
            return make("MoveVar", i, True)
        if c == 0:
            return make("MoveVar", j, False)
        return make("AssignVar", i, l)


class InsertionTeacher(Teacher):
    name = "insertion"
    interface = INTERFACE_BUBBLE_INSERTION
    schema = BUBBLE_INSERTION_SCHEMA

    def decide(self, obs):
        view = ComparisonView(obs)
        make = self.schema.make
        i, j = 0, 1

        c = view.var_cmp(i, j)
        if c < 0:
            return make("AssignVar", j, i)
        if c == 0:
            return make("MoveVar", i, True)
        if view.right(j) == 1:
            return make("SwapWithNext", j)
        if view.left(j) == -1:
            return make("MoveVar", j, False)
        return make("AssignVar", j, i)


class QuickSortTeacher(Teacher):
    """Function 1 is QuickSort, function 2 is Partition with A[high] as pivot."""

    name = "quicksort"
    interface = INTERFACE_QUICK_SORT
    schema = QUICK_SORT_SCHEMA

    I, J, L, H = 0, 1, 2, 3

    def call(self, f, a, b, c, d, e):
        """v_a <- Function f(v_b <- v_c, v_d <- v_e)"""
        return self.schema.make("FunctionCall", f - 1, b, d, c, e, a)

    def decide(self, obs):
        view = QuickSortView(obs, self.schema)
        make = self.schema.make
        i, j, l, h = self.I, self.J, self.L, self.H
        prev = view.prev

        if view.function_id == 0:
            return self.call(1, h, l, l, h, h)

        if view.function_id == 1:
            if view.var_cmp(l, h) >= 0:
                return make("Return", h)
            if prev is None:
                return self.call(2, i, l, l, h, h)
            if prev == self.call(2, i, l, l, h, h):
                return make("AssignVar", j, i)
            if prev == make("AssignVar", j, i):
                return make("MoveVar", i, False)
            if prev == make("MoveVar", i, False):
                if view.var_cmp(i, l) > 0:
                    return self.call(1, i, l, l, h, i)
                return make("MoveVar", j, True)
            if prev == self.call(1, i, l, l, h, i):
                return make("MoveVar", j, True)
            if prev == make("MoveVar", j, True) and view.var_cmp(j, h) < 0:
                return self.call(1, h, l, j, h, h)
            return make("Return", h)

        # Partition
        if prev is None:
            return make("AssignVar", i, l)
        if prev == make("AssignVar", i, l):
            return make("AssignVar", j, l)
        if view.var_cmp(j, h) < 0:
            if prev == make("Swap", i, j):
                return make("MoveVar", i, True)
            if prev in (make("AssignVar", j, l), make("MoveVar", j, True)) and view.val_cmp(j, h) < 0:
                if view.var_cmp(i, j) != 0:
                    return make("Swap", i, j)
                return make("MoveVar", i, True)
            return make("MoveVar", j, True)
        if prev == make("MoveVar", j, True):
            return make("Swap", i, h)
        return make("Return", i)


class BinarySearchTeacher(Teacher):
    name = "binary"
    interface = INTERFACE_SEARCH
    schema = SEARCH_SCHEMA

    def decide(self, obs):
        view = SearchView(obs, self.schema)
        make = self.schema.make
        i, l, h = 0, 1, 2
        prev = view.prev

        if view.var_cmp(l, h) > 0 \
                or (view.var_cmp(i, l) == 0 and view.query_cmp(i) < 0) \
                or (view.var_cmp(i, h) == 0 and view.query_cmp(i) > 0):
            return make("NotFound")
        if view.query_cmp(i) == 0:
            return make("Found", i)
        if prev is None or prev in (make("AssignVar", l, i), make("AssignVar", h, i)):
            return make("AssignMid", i, l, h)
        if prev == make("AssignMid", i, l, h):
            return make("MoveVar", i, view.query_cmp(i) > 0)
        if prev == make("MoveVar", i, True):
            return make("AssignVar", l, i)
        if prev == make("MoveVar", i, False):
            return make("AssignVar", h, i)
        # Unreachable from a reset state.
        return make("NotFound")


class LinearSearchTeacher(Teacher):
    """Scan v1 upward from low; stop at the first element >= q or at high."""

    name = "linear"
    interface = INTERFACE_SEARCH
    schema = SEARCH_SCHEMA

    def decide(self, obs):
        view = SearchView(obs, self.schema)
        make = self.schema.make
        c = view.query_cmp(0)
        if c == 0:
            return make("Found", 0)
        if c < 0 or view.at_high(0):
            return make("NotFound")
        return make("MoveVar", 0, True)


class DfsKnapsackTeacher(Teacher):
    """Depth-first enumeration of all subsets, pruning on overweight."""

    name = "dfs"
    interface = INTERFACE_KNAPSACK
    schema = KNAPSACK_SCHEMA

    def decide(self, obs):
        view = KnapsackView(obs, self.schema)
        make = self.schema.make
        prev = view.prev

        if prev is None:
            if view.sign_i_minus_n >= 0 or not view.weight_ok:
                return make("Return")
            return make("Put")
        if prev == make("Put"):
            return make("MoveVar", True)
        if prev == make("MoveVar", True):
            return make("Knapsack")
        if prev == make("Knapsack"):
            return make("MoveVar", False)
        if prev == make("MoveVar", False):
            return make("Pop") if view.in_sol else make("Return")
        if prev == make("Pop"):
            return make("MoveVar", True)
        # Unreachable: Return at depth 0 ends the episode.
        return make("Return")


class RandomAgent:
    """Uniform over every valid instruction of a schema."""

    name = "random"

    def __init__(self, schema):
        self.schema = schema

    def _widths(self, itype, pointer_size):
        return [2 if a.kind == ARG_BOOL else a.width(pointer_size) for a in itype.args]

    def act(self, obs, rng):
        pointer_size = obs.num_nodes if self.schema.has_pointers else None
        counts = np.array([np.prod(self._widths(t, pointer_size)) for t in self.schema.types], dtype=float)
        type_id = int(rng.choice(len(counts), p=counts / counts.sum()))
        itype = self.schema.types[type_id]

        args = []
        for spec, width in zip(itype.args, self._widths(itype, pointer_size)):
            value = int(rng.integers(width))
            args.append(bool(value == 0) if spec.kind == ARG_BOOL else value)
        return self.schema.make(itype.name, *args)

    def __repr__(self):
        return f"RandomAgent({self.schema.name})"


TEACHERS = {
    t.name: t
    for t in (
        SelectionTeacher,
        BubbleTeacher,
        InsertionTeacher,
        QuickSortTeacher,
        BinarySearchTeacher,
        LinearSearchTeacher,
        DfsKnapsackTeacher,
    )
}


def make_teacher(name):
    if name not in TEACHERS:
        raise KeyError(f"Unknown teacher: {name} (known: {', '.join(sorted(TEACHERS))})")
    return TEACHERS[name]()
