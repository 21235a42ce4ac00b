import os
import sys
import json
import time
import logging
import collections

import click_log

import numpy as np

from ..meta import VERSION
from .constants import (
    EXIT_OUTPUT_EXISTS,
    TASK_SORT,
    TASK_SEARCH,
    TASK_KNAPSACK,
    TASKS,
    MANIFEST_NAME,
    REWARD_SPARSE,
    DEFAULT_STEP_PENALTY,
)
from .vm import EpisodeTrace, TraceStep
from .sort_env import SortState
from .search_env import SearchState
from .knapsack_env import KnapsackState
from .tasks import get_interface

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("file_utils")
click_log.basic_config(logger)


def check_for_preexisting_files(file_list, exist_ok=False):
    """Checks if the files in the given file_list exist.
    If any file exists and exist_ok is False, this will exit the program.
    If any file exists and exist_ok is True, the program will continue.
    """

    # Allow users to be a little lazy with what input types they give:
    if not isinstance(file_list, (list, set, tuple)):
        file_list = [file_list]

    do_files_exist = False
    for f in file_list:
        if f is not None and os.path.exists(f):
            if exist_ok:
                logger.warning(f"Output file exists: {f}.  Overwriting.")
            else:
                logger.error(f"Output file already exists: {f}!")
                do_files_exist = True
    if do_files_exist:
        sys.exit(EXIT_OUTPUT_EXISTS)


def new_seed():
    """A fresh seed from the OS entropy pool."""
    return int(np.random.SeedSequence().entropy % (2 ** 32))


################################################################################
# Instances

def format_instance(task, state):
    """One line per instance:
        sort:     n low high A[0] ... A[n-1]
        search:   n q A[0] ... A[n-1]
        knapsack: n W w[0] ... w[n-1] v[0] ... v[n-1]"""

    if task == TASK_SORT:
        fields = [len(state.A), state.low, state.high] + state.A.tolist()
    elif task == TASK_SEARCH:
        fields = [state.n, state.q] + state.A.tolist()
    elif task == TASK_KNAPSACK:
        fields = [state.n, repr(state.W)] + [repr(float(x)) for x in state.w] + [repr(float(x)) for x in state.val]
    else:
        raise ValueError(f"Unknown task: {task}")
    return " ".join(str(f) for f in fields)


def parse_instance(task, line):
    fields = line.split()
    try:
        n = int(fields[0])
        if task == TASK_SORT:
            low, high = int(fields[1]), int(fields[2])
            values = [int(x) for x in fields[3:]]
            _check_count(values, n)
            return SortState(values, low, high)
        if task == TASK_SEARCH:
            q = int(fields[1])
            values = [int(x) for x in fields[2:]]
            _check_count(values, n)
            return SearchState(values, q)
        if task == TASK_KNAPSACK:
            W = float(fields[1])
            numbers = [float(x) for x in fields[2:]]
            _check_count(numbers, 2 * n)
            return KnapsackState(numbers[:n], numbers[n:], W)
    except (IndexError, ValueError) as ex:
        raise ValueError(f"Malformed {task} instance line: {line.strip()!r} ({ex})") from ex
    raise ValueError(f"Unknown task: {task}")


def _check_count(values, expected):
    if len(values) != expected:
        raise ValueError(f"expected {expected} values, found {len(values)}")


def write_instances(path, task, states):
    with open(path, "w") as f:
        f.write(f"# stepwise instances task={task}\n")
        for state in states:
            f.write(format_instance(task, state) + "\n")


def read_instances(path):
    """:return: (task, [state, ...])"""
    task = None
    states = []
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if line.startswith("#"):
                if "task=" in line:
                    task = line.split("task=", 1)[1].split()[0]
                continue
            if line:
                if task not in TASKS:
                    raise ValueError(f"{path} does not declare its task before the first instance")
                states.append(parse_instance(task, line))
    return task, states


################################################################################
# Traces

TraceFile = collections.namedtuple(
    "TraceFile", ["interface", "instance", "trace", "reward_mode", "step_penalty"]
)


def _json_arg(value):
    return bool(value) if isinstance(value, (bool, np.bool_)) else int(value)


def write_trace_jsonl(path, trace, interface, instance, reward_mode=REWARD_SPARSE,
                      step_penalty=DEFAULT_STEP_PENALTY, frames=None):
    """A header object followed by one object per step. `frames`, when given,
    holds the rendered frame after each step (frame 0 goes in the header)."""

    spec = get_interface(interface)
    schema = spec.schema
    header = {
        "interface": interface,
        "task": spec.task,
        "instance": format_instance(spec.task, instance),
        "instance_size": trace.instance_size,
        "outcome": trace.outcome,
        "steps": len(trace),
        "reward_mode": reward_mode,
        "step_penalty": step_penalty,
    }
    if frames:
        header["frame"] = frames[0]

    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        cumulative = 0.0
        for t, step in enumerate(trace.steps, start=1):
            cumulative += step.reward
            record = {
                "step": t,
                "instruction": schema.name_of(step.instruction),
                "args": [_json_arg(a) for a in step.instruction.args],
                "reward": step.reward,
                "cumulative_reward": cumulative,
            }
            if frames and t < len(frames):
                record["frame"] = frames[t]
            f.write(json.dumps(record) + "\n")


def read_trace_jsonl(path):
    with open(path, "r") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ValueError(f"Empty trace file: {path}")

    header = json.loads(lines[0])
    interface = header["interface"]
    spec = get_interface(interface)
    instance = parse_instance(spec.task, header["instance"])

    steps = []
    for line in lines[1:]:
        record = json.loads(line)
        instruction = spec.schema.make(record["instruction"], *record["args"])
        steps.append(TraceStep(None, instruction, float(record["reward"])))

    trace = EpisodeTrace(steps, outcome=header.get("outcome"), instance_size=header.get("instance_size"))
    return TraceFile(interface, instance, trace, header.get("reward_mode", REWARD_SPARSE),
                     float(header.get("step_penalty", DEFAULT_STEP_PENALTY)))


################################################################################
# Run directories

class RunDirectory:
    """`<root>/<YYYYmmdd-HHMMSS>-<command>/` holding every artifact of one run.

    The manifest is written once, at the end of the run."""

    def __init__(self, root, command, exist_ok=False):
        stamp = time.strftime("%Y%m%d-%H%M%S")
        base = os.path.join(root, f"{stamp}-{command}")
        path = base
        suffix = 0
        while os.path.exists(path):
            suffix += 1
            path = f"{base}-{suffix}"
        os.makedirs(path, exist_ok=exist_ok)

        self.root = root
        self.command = command
        self.path = path
        self.artifacts = {}
        self._manifest_written = False
        logger.info("Run directory: %s", self.path)

    def file(self, name):
        return os.path.join(self.path, name)

    def add_artifact(self, key, name):
        self.artifacts[key] = name
        return self.file(name)

    @property
    def manifest_path(self):
        return self.file(MANIFEST_NAME)

    def write_manifest(self, config, seed, argv=None):
        if self._manifest_written:
            raise RuntimeError(f"Manifest already written for {self.path}")
        manifest = {
            "command": self.command,
            "config": config,
            "seed": seed,
            "artifacts": self.artifacts,
            "version": VERSION,
            "argv": list(sys.argv[1:] if argv is None else argv),
        }
        with open(self.manifest_path, "w") as f:
            json.dump(manifest, f, indent=4, sort_keys=True)
        self._manifest_written = True
        return manifest


def read_manifest(run_path):
    with open(os.path.join(run_path, MANIFEST_NAME), "r") as f:
        return json.load(f)
