import sys
import copy
import logging
import itertools
import collections

import click_log

import numpy as np


logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("vm")
click_log.basic_config(logger)

# Argument kinds:
ARG_BOOL = "bool"
ARG_INT = "int"
ARG_POINTER = "pointer"

# Argument roles (only used for display):
ROLE_VARIABLE = "var"
ROLE_FUNCTION = "func"
ROLE_DIRECTION = "dir"
ROLE_NODE = "node"

# Episode outcomes:
OUTCOME_SOLVED = "solved"
OUTCOME_BUDGET_EXHAUSTED = "budget-exhausted"
OUTCOME_TERMINATED_WRONG = "terminated-wrong"

VARIABLE_LETTERS = "abcdefghijklmnopqrstuvwxyz"
FUNCTION_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


class SchemaViolation(ValueError):
    """An instruction does not conform to the schema it was issued against."""


class StackOverflow(RuntimeError):
    """The call stack grew past its configured limit."""


class ArgSpec(collections.namedtuple("ArgSpec", ["name", "kind", "cardinality", "role"])):
    """One argument slot of an instruction type.

    `cardinality` is the number of values an integer argument can take; it is
    ignored for booleans and for pointers (whose range is the node count)."""

    def width(self, pointer_size=None):
        if self.kind == ARG_BOOL:
            return 1
        if self.kind == ARG_INT:
            return self.cardinality
        if pointer_size is None:
            raise SchemaViolation(f"Pointer argument {self.name} needs a node count to be encoded.")
        return pointer_size

    def choices(self, pointer_size=None):
        if self.kind == ARG_BOOL:
            return [True, False]
        return list(range(self.width(pointer_size)))

    def format(self, value):
        if self.role == ROLE_VARIABLE:
            return VARIABLE_LETTERS[value]
        if self.role == ROLE_FUNCTION:
            return FUNCTION_LETTERS[value]
        if self.role == ROLE_DIRECTION:
            return "+1" if value else "-1"
        return str(value)


def var_arg(name, k):
    return ArgSpec(name, ARG_INT, k, ROLE_VARIABLE)


def func_arg(name, num_functions):
    return ArgSpec(name, ARG_INT, num_functions, ROLE_FUNCTION)


def dir_arg(name="dir"):
    return ArgSpec(name, ARG_BOOL, 2, ROLE_DIRECTION)


def node_arg(name):
    return ArgSpec(name, ARG_POINTER, 0, ROLE_NODE)


class InstructionType(
    collections.namedtuple(
        "InstructionType",
        ["name", "args", "is_call", "is_return", "is_terminal", "passed", "returned"],
    )
):
    """An instruction type: its argument slots and control-flow flags.

    Call types carry `passed` (p) local/outer pairs and `returned` (q) return
    targets laid out as (id?, l_1..l_p, o_1..o_p, r_1..r_q)."""

    def __new__(cls, name, args=(), is_call=False, is_return=False, is_terminal=False, passed=0, returned=0):
        return super().__new__(cls, name, tuple(args), is_call, is_return, is_terminal, passed, returned)

    @property
    def arity(self):
        return len(self.args)

    def arg_width(self, pointer_size=None):
        return sum(a.width(pointer_size) for a in self.args)

    @property
    def has_function_id(self):
        return self.is_call and self.arity > 0 and self.args[0].role == ROLE_FUNCTION


class Instruction(collections.namedtuple("Instruction", ["type_id", "args"])):
    """A typed action: index into its schema plus a tuple of argument values."""

    def __new__(cls, type_id, args=()):
        return super().__new__(cls, int(type_id), tuple(args))


class InstructionSchema:
    """The typed instruction vocabulary of one environment interface."""

    def __init__(self, name, types):
        names = [t.name for t in types]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate instruction types in schema {name}: {names}")

        self.name = name
        self.types = tuple(types)
        self._index = {t.name: i for i, t in enumerate(self.types)}

    def __repr__(self):
        return f"InstructionSchema({self.name}, {[t.name for t in self.types]})"

    @property
    def num_types(self):
        return len(self.types)

    @property
    def has_pointers(self):
        return any(a.kind == ARG_POINTER for t in self.types for a in t.args)

    def type_id(self, name):
        return self._index[name]

    def arg_width(self, pointer_size=None):
        return sum(t.arg_width(pointer_size) for t in self.types)

    def encoding_width(self, pointer_size=None):
        return self.num_types + self.arg_width(pointer_size) + 1

    def make(self, name, *args):
        """Build an instruction by type name, e.g. schema.make("MoveVar", 0, True)."""
        return Instruction(self._index[name], args)

    def name_of(self, instruction):
        return self.types[instruction.type_id].name

    def validate(self, instruction, pointer_size=None):
        if not isinstance(instruction, Instruction):
            raise SchemaViolation(f"Not an instruction: {instruction!r}")
        if not 0 <= instruction.type_id < self.num_types:
            raise SchemaViolation(f"Unknown instruction type {instruction.type_id} in schema {self.name}")

        itype = self.types[instruction.type_id]
        if len(instruction.args) != itype.arity:
            raise SchemaViolation(
                f"{itype.name} takes {itype.arity} argument(s), got {len(instruction.args)}"
            )

        for spec, value in zip(itype.args, instruction.args):
            if spec.kind == ARG_BOOL:
                if not isinstance(value, (bool, np.bool_)):
                    raise SchemaViolation(f"{itype.name}.{spec.name} must be boolean, got {value!r}")
            else:
                if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
                    raise SchemaViolation(f"{itype.name}.{spec.name} must be an integer, got {value!r}")
                limit = pointer_size if spec.kind == ARG_POINTER else spec.cardinality
                if value < 0 or (limit is not None and value >= limit):
                    raise SchemaViolation(f"{itype.name}.{spec.name} out of range [0, {limit}): {value}")

    def enumerate(self, pointer_size=None):
        """Every valid instruction of this schema, in encoding order."""
        out = []
        for type_id, itype in enumerate(self.types):
            for values in itertools.product(*[a.choices(pointer_size) for a in itype.args]):
                out.append(Instruction(type_id, values))
        return out

    def format(self, instruction):
        if instruction is None:
            return "None"
        itype = self.types[instruction.type_id]
        args = ", ".join(spec.format(v) for spec, v in zip(itype.args, instruction.args))
        return f"{itype.name}({args})"


def encode_prev_action(schema, instruction, pointer_size=None):
    """Encode an optional instruction as [type one-hot | per-type argument slots | none-bit].

    Argument slots of every type but the actual one are left at zero; booleans
    take one slot, integers and pointers a one-hot block."""

    vec = np.zeros(schema.encoding_width(pointer_size))
    if instruction is None:
        vec[-1] = 1.0
        return vec

    schema.validate(instruction, pointer_size)
    vec[instruction.type_id] = 1.0

    offset = schema.num_types
    for type_id, itype in enumerate(schema.types):
        if type_id == instruction.type_id:
            pos = offset
            for spec, value in zip(itype.args, instruction.args):
                if spec.kind == ARG_BOOL:
                    vec[pos] = 1.0 if value else 0.0
                else:
                    vec[pos + value] = 1.0
                pos += spec.width(pointer_size)
            break
        offset += itype.arg_width(pointer_size)

    return vec


def decode_prev_action(schema, vec, pointer_size=None):
    """Inverse of encode_prev_action."""
    vec = np.asarray(vec)
    if vec.shape != (schema.encoding_width(pointer_size),):
        raise SchemaViolation(f"Encoded action has shape {vec.shape}, expected ({schema.encoding_width(pointer_size)},)")

    if vec[-1] > 0.5:
        return None

    type_id = int(np.argmax(vec[: schema.num_types]))
    offset = schema.num_types + sum(t.arg_width(pointer_size) for t in schema.types[:type_id])

    args = []
    for spec in schema.types[type_id].args:
        w = spec.width(pointer_size)
        block = vec[offset: offset + w]
        if spec.kind == ARG_BOOL:
            args.append(bool(block[0] > 0.5))
        else:
            args.append(int(np.argmax(block)))
        offset += w

    return Instruction(type_id, args)


# Named tuple to hold one saved caller context:
class CallStackEntry(
    collections.namedtuple(
        "CallStackEntry",
        ["caller_function_id", "caller_prev_action", "saved_variables", "return_target_ids"],
    )
):
    def __str__(self):
        saved = ", ".join(f"{VARIABLE_LETTERS[i]}={v}" for i, v in enumerate(self.saved_variables))
        targets = ",".join(VARIABLE_LETTERS[r] for r in self.return_target_ids)
        prev_fn = "None" if not self.caller_function_id else f"Func{FUNCTION_LETTERS[self.caller_function_id - 1]}"
        return f"prev:{prev_fn} vars:({saved}) ret:{targets or '-'}"


def push_call(state, schema, instruction):
    """Enter a function.

    `state` needs `variables`, `function_id` (0 is the outermost scope),
    `prev_action`, `call_stack` and `stack_limit`. Variables that are not
    passed keep the caller's values."""

    itype = schema.types[instruction.type_id]
    if not itype.is_call:
        raise SchemaViolation(f"{itype.name} is not a function call")

    if len(state.call_stack) >= state.stack_limit:
        raise StackOverflow(f"Call stack depth would exceed {state.stack_limit}")

    args = list(instruction.args)
    callee = state.function_id
    if itype.has_function_id:
        callee = args.pop(0) + 1

    p, q = itype.passed, itype.returned
    locals_, outers, targets = args[:p], args[p: 2 * p], args[2 * p: 2 * p + q]

    saved = tuple(state.variables)
    state.call_stack.append(CallStackEntry(state.function_id, instruction, saved, tuple(targets)))

    variables = list(saved)
    for l, o in zip(locals_, outers):
        variables[l] = saved[o]

    state.variables = variables
    state.function_id = callee
    state.prev_action = None

    return state


def pop_return(state, schema, instruction):
    """Return from the current function.

    Returns False (and leaves the state alone) when the stack is empty; what
    that means is up to the environment."""

    itype = schema.types[instruction.type_id]
    if not itype.is_return:
        raise SchemaViolation(f"{itype.name} is not a return")

    if not state.call_stack:
        return False

    values = [state.variables[l] for l in instruction.args]
    entry = state.call_stack.pop()

    state.function_id = entry.caller_function_id
    state.prev_action = entry.caller_prev_action
    state.variables = list(entry.saved_variables)
    for r, v in zip(entry.return_target_ids, values):
        state.variables[r] = v

    return True


class TraceStep(collections.namedtuple("TraceStep", ["observation", "instruction", "reward"])):
    pass


class EpisodeTrace:
    """Ordered (observation, instruction, reward) records plus the episode outcome.

    A trace built with `record=False` only keeps the step count and the
    reward sum; evaluation of long episodes uses that mode."""

    def __init__(self, steps=None, outcome=None, record=True, instance_size=None):
        self.steps = list(steps) if steps else []
        self.outcome = outcome
        self.record = record
        self.instance_size = instance_size
        self._num_steps = len(self.steps)
        self._total_reward = float(sum(s.reward for s in self.steps))

    def __len__(self):
        return self._num_steps

    @property
    def total_steps(self):
        return self._num_steps

    @property
    def rewards(self):
        return np.array([s.reward for s in self.steps], dtype=float)

    @property
    def total_reward(self):
        return self._total_reward

    @property
    def instructions(self):
        return [s.instruction for s in self.steps]

    @property
    def observations(self):
        return [s.observation for s in self.steps]

    @property
    def solved(self):
        return self.outcome == OUTCOME_SOLVED

    def append(self, observation, instruction, reward):
        if self.record:
            self.steps.append(TraceStep(observation, instruction, reward))
        self._num_steps += 1
        self._total_reward += reward


class Environment:
    """Base class for every task environment.

    Subclasses set `schema`, keep `status` at None while the episode runs and
    set it to one of the OUTCOME_* values when it ends."""

    schema = None

    def __init__(self):
        self.status = None

    @property
    def done(self):
        return self.status is not None

    @property
    def pointer_size(self):
        return None

    @property
    def size(self):
        return None

    def observe(self):
        raise NotImplementedError

    def step(self, instruction):
        """Apply one instruction and return its reward."""
        raise NotImplementedError

    def clone(self):
        return copy.deepcopy(self)


def run_episode(env, agent, max_steps, rng=None, record=True):
    """Drive `agent` on a freshly reset `env` until it is done or `max_steps` is reached.

    :param env: a freshly reset Environment (mutated in place)
    :param agent: anything with `act(observation, rng) -> Instruction`
    :param max_steps: step cap, at least 1
    :param rng: numpy Generator handed to the agent
    :param record: keep per-step records; False only counts steps and reward
    :return: the EpisodeTrace"""

    if max_steps < 1:
        raise ValueError(f"max_steps must be at least 1, got {max_steps}")

    trace = EpisodeTrace(record=record, instance_size=env.size)
    if env.done:
        trace.outcome = env.status
        return trace

    for _ in range(max_steps):
        obs = env.observe()
        instruction = agent.act(obs, rng)
        env.schema.validate(instruction, env.pointer_size)

        try:
            reward = env.step(instruction)
        except StackOverflow as ex:
            logger.debug("Episode stopped: %s", ex)
            trace.outcome = OUTCOME_BUDGET_EXHAUSTED
            return trace

        trace.append(obs, instruction, reward)

        if env.done:
            trace.outcome = env.status
            return trace

    trace.outcome = OUTCOME_BUDGET_EXHAUSTED
    return trace
