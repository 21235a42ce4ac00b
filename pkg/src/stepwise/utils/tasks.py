import sys
import logging
import collections

import click_log

from .constants import (
    TASK_SORT,
    TASK_SEARCH,
    TASK_KNAPSACK,
    INTERFACE_FULL_VIEW,
    INTERFACE_BUBBLE_INSERTION,
    INTERFACE_QUICK_SORT,
    INTERFACE_SEARCH,
    INTERFACE_KNAPSACK,
    DEFAULT_STEP_PENALTY,
    REWARD_SPARSE,
    QUERY_MIXED,
)
from .sort_env import SortEnv, new_instance, SORT_SCHEMAS, COMPARISON_WIDTH, QUICK_SORT_OBS_WIDTH
from .search_env import SearchEnv, new_search_instance, SEARCH_SCHEMA, SEARCH_OBS_WIDTH
from .knapsack_env import KnapsackEnv, new_knapsack_instance, KNAPSACK_SCHEMA, KNAPSACK_OBS_WIDTH
from .teachers import TEACHERS, RandomAgent

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("tasks")
click_log.basic_config(logger)


class CapRule(collections.namedtuple("CapRule", ["kind", "value"])):
    """Step cap as a function of instance size.

    Kinds: `n2` (value * n^2), `absolute` (value), `multiplier` (value * n)."""

    KINDS = ("n2", "absolute", "multiplier")

    def __new__(cls, kind, value=1):
        if kind not in cls.KINDS:
            raise ValueError(f"Unknown cap rule kind: {kind} (expected one of {', '.join(cls.KINDS)})")
        if value <= 0:
            raise ValueError(f"Cap rule value must be positive, got {value}")
        return super().__new__(cls, kind, int(value))

    def cap(self, n):
        if self.kind == "n2":
            return max(1, self.value * n * n)
        if self.kind == "multiplier":
            return max(1, self.value * n)
        return self.value

    def __str__(self):
        if self.kind == "n2":
            return "n^2" if self.value == 1 else f"{self.value}n^2"
        if self.kind == "multiplier":
            return f"{self.value}n"
        return str(self.value)

    @classmethod
    def from_options(cls, kind, value):
        """Command-line form: no kind means the interface default; `absolute` needs a value."""
        if kind is None:
            if value is not None:
                raise ValueError("a cap value needs a cap rule")
            return None
        if value is None:
            if kind == "absolute":
                raise ValueError("an absolute cap needs a cap value")
            value = 1
        return cls(kind, value)

    @classmethod
    def parse(cls, text):
        """Parse `n2`, `10n2`, `absolute:400`, `400`, `multiplier:20` or `20n`."""
        text = str(text).strip().replace("^", "").replace("²", "2")
        if ":" in text:
            kind, value = text.split(":", 1)
            return cls(kind, int(value))
        if text.endswith("n2"):
            return cls("n2", int(text[:-2] or 1))
        if text.endswith("n"):
            return cls("multiplier", int(text[:-1] or 1))
        return cls("absolute", int(text))


Interface = collections.namedtuple(
    "Interface",
    ["name", "task", "schema", "obs_width", "cap_rule", "teacher"],
)

INTERFACE_SPECS = {
    INTERFACE_FULL_VIEW: Interface(INTERFACE_FULL_VIEW, TASK_SORT, SORT_SCHEMAS[INTERFACE_FULL_VIEW], None,
                                   CapRule("n2"), "selection"),
    INTERFACE_BUBBLE_INSERTION: Interface(INTERFACE_BUBBLE_INSERTION, TASK_SORT,
                                          SORT_SCHEMAS[INTERFACE_BUBBLE_INSERTION], COMPARISON_WIDTH,
                                          CapRule("n2"), "insertion"),
    INTERFACE_QUICK_SORT: Interface(INTERFACE_QUICK_SORT, TASK_SORT, SORT_SCHEMAS[INTERFACE_QUICK_SORT],
                                    QUICK_SORT_OBS_WIDTH, CapRule("n2"), "quicksort"),
    INTERFACE_SEARCH: Interface(INTERFACE_SEARCH, TASK_SEARCH, SEARCH_SCHEMA, SEARCH_OBS_WIDTH,
                                CapRule("multiplier", 4), "binary"),
    INTERFACE_KNAPSACK: Interface(INTERFACE_KNAPSACK, TASK_KNAPSACK, KNAPSACK_SCHEMA, KNAPSACK_OBS_WIDTH,
                                  CapRule("multiplier", 20), "dfs"),
}


def get_interface(name):
    if name not in INTERFACE_SPECS:
        raise KeyError(f"Unknown interface: {name} (known: {', '.join(INTERFACE_SPECS)})")
    return INTERFACE_SPECS[name]


def interfaces_for_task(task):
    return [i.name for i in INTERFACE_SPECS.values() if i.task == task]


def resolve_interface(task, agent):
    """Interface an agent runs on. Teachers pin it; `random` takes the task's first interface."""
    if agent in TEACHERS:
        interface = TEACHERS[agent].interface
        if INTERFACE_SPECS[interface].task != task:
            raise ValueError(f"Agent {agent} does not solve task {task}")
        return interface
    if agent == "random":
        return {TASK_SORT: INTERFACE_BUBBLE_INSERTION, TASK_SEARCH: INTERFACE_SEARCH,
                TASK_KNAPSACK: INTERFACE_KNAPSACK}[task]
    raise KeyError(f"Unknown agent: {agent}")


def make_agent(name, interface):
    if name == "random":
        return RandomAgent(get_interface(interface).schema)
    agent = TEACHERS[name]()
    if agent.interface != interface:
        raise ValueError(f"Teacher {name} runs on {agent.interface}, not {interface}")
    return agent


def new_task_instance(interface, n, rng, query_mode=QUERY_MIXED):
    task = get_interface(interface).task
    if task == TASK_SORT:
        return new_instance(n, rng)
    if task == TASK_SEARCH:
        return new_search_instance(n, rng, mode=query_mode)
    return new_knapsack_instance(n, rng)


def make_env(interface, state, reward_mode=REWARD_SPARSE, step_penalty=DEFAULT_STEP_PENALTY, budget=None):
    """Wrap a task state in the environment for `interface`."""
    task = get_interface(interface).task
    if task == TASK_SORT:
        return SortEnv(state, interface, reward_mode, step_penalty)
    if task == TASK_SEARCH:
        return SearchEnv(state, step_penalty)
    return KnapsackEnv(state, budget)
