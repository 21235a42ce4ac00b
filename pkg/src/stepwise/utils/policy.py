import sys
import logging

import click_log

import numpy as np

from .vm import ARG_BOOL, Instruction
from .layers import Module, Mlp, log_softmax, categorical_terms, bernoulli_terms, draw
from .gnn import GnnPolicy
from .tasks import get_interface

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("policy")
click_log.basic_config(logger)


def _slot_width(spec):
    return 1 if spec.kind == ARG_BOOL else spec.cardinality


def encode_prefix(itype, values, m):
    """Encode the first `m` argument values of each row (booleans as one bit,
    integers as one-hot blocks); `values` is an int array of shape (B, arity)."""

    rows = values.shape[0]
    blocks = []
    for k, spec in enumerate(itype.args[:m]):
        if spec.kind == ARG_BOOL:
            blocks.append(values[:, k: k + 1].astype(float))
        else:
            block = np.zeros((rows, spec.cardinality))
            block[np.arange(rows), values[:, k]] = 1.0
            blocks.append(block)
    return np.concatenate(blocks, axis=1) if blocks else np.zeros((rows, 0))


class MlpPolicy(Module):
    """Factorized policy over a fixed-width observation.

    A shared trunk feeds a softmax head over instruction types and, for every
    (type, argument slot), a head whose input is the trunk output followed by
    the encodings of the earlier arguments of that type. Integer slots use a
    softmax, boolean slots a sigmoid. All output layers start at zero, so a
    fresh policy is uniform over types and over each argument."""

    kind = "mlp"

    HIDDEN = 64
    DEPTH = 3
    HEAD_HIDDEN = 64

    def __init__(self, schema, obs_width, rng=None, hidden=HIDDEN, depth=DEPTH, head_hidden=HEAD_HIDDEN):
        if schema.has_pointers:
            raise ValueError(f"Schema {schema.name} has pointer arguments; use GnnPolicy")
        rng = np.random.default_rng(0) if rng is None else rng

        self.schema = schema
        self.obs_width = int(obs_width)
        self.hidden = int(hidden)
        self.depth = int(depth)
        self.head_hidden = int(head_hidden)

        self.trunk = Mlp([self.obs_width] + [self.hidden] * self.depth, rng, activate_output=True)
        self.type_head = Mlp([self.hidden, self.head_hidden, schema.num_types], rng, zero_last=True)
        self.arg_heads = {}
        for t, itype in enumerate(schema.types):
            prefix = 0
            for m, spec in enumerate(itype.args):
                self.arg_heads[(t, m)] = Mlp(
                    [self.hidden + prefix, self.head_hidden, _slot_width(spec)], rng, zero_last=True
                )
                prefix += _slot_width(spec)

    @property
    def interface(self):
        return self.schema.name

    @property
    def config(self):
        return {
            "interface": self.interface,
            "obs_width": self.obs_width,
            "hidden": self.hidden,
            "depth": self.depth,
            "head_hidden": self.head_hidden,
        }

    def children(self):
        out = [("trunk", self.trunk), ("type", self.type_head)]
        out += [(f"arg.{self.schema.types[t].name}.{m}", head) for (t, m), head in self.arg_heads.items()]
        return out

    def _as_batch(self, observations):
        return np.asarray(observations, dtype=float).reshape(-1, self.obs_width)

    def evaluate(self, observations, instructions):
        """Log-probabilities and per-step entropies (type entropy plus the
        entropy of every argument factor along the taken path).

        :return: (logp, entropy, cache) with one entry per row"""

        X = self._as_batch(observations)
        if len(X) != len(instructions):
            raise ValueError(f"{len(X)} observations but {len(instructions)} instructions")

        h, trunk_cache = self.trunk.forward(X)
        type_z, type_cache = self.type_head.forward(h)
        types = np.array([instr.type_id for instr in instructions], dtype=np.int64)
        logp, entropy, dl, de = categorical_terms(type_z, types)

        arg_entries = []
        for t in np.unique(types):
            itype = self.schema.types[t]
            if not itype.arity:
                continue
            rows = np.flatnonzero(types == t)
            values = np.array([instructions[r].args for r in rows], dtype=np.int64).reshape(len(rows), itype.arity)
            for m, spec in enumerate(itype.args):
                inp = np.concatenate([h[rows], encode_prefix(itype, values, m)], axis=1)
                z, head_cache = self.arg_heads[(t, m)].forward(inp)
                if spec.kind == ARG_BOOL:
                    lp, ent, adl, ade = bernoulli_terms(z, values[:, m])
                else:
                    lp, ent, adl, ade = categorical_terms(z, values[:, m])
                logp[rows] += lp
                entropy[rows] += ent
                arg_entries.append((t, m, rows, head_cache, adl, ade))

        cache = {
            "h": h,
            "trunk": trunk_cache,
            "type": (type_cache, dl, de),
            "args": arg_entries,
        }
        return logp, entropy, cache

    def backward(self, cache, dlogp, dentropy):
        """Accumulate parameter gradients of sum(dlogp * logp + dentropy * entropy)."""

        dlogp = np.asarray(dlogp, dtype=float)
        dentropy = np.broadcast_to(np.asarray(dentropy, dtype=float), dlogp.shape)
        dh = np.zeros_like(cache["h"])

        type_cache, dl, de = cache["type"]
        dh += self.type_head.backward(type_cache, dlogp[:, None] * dl + dentropy[:, None] * de)

        for t, m, rows, head_cache, adl, ade in cache["args"]:
            # Sigmoid heads return one gradient per row, softmax heads one per class:
            if adl.ndim == 1:
                dz = (dlogp[rows] * adl + dentropy[rows] * ade)[:, None]
            else:
                dz = dlogp[rows, None] * adl + dentropy[rows, None] * ade
            dinp = self.arg_heads[(t, m)].backward(head_cache, dz)
            dh[rows] += dinp[:, : self.hidden]

        self.trunk.backward(cache["trunk"], dh)

    def sample(self, observation, rng=None, greedy=False):
        """Ancestral sampling: type first, then each argument given the earlier ones."""

        h, _ = self.trunk.forward(self._as_batch(observation))
        z, _ = self.type_head.forward(h)
        p = np.exp(log_softmax(z[0]))
        t = int(np.argmax(p)) if greedy else draw(p, rng)
        itype = self.schema.types[t]

        values = np.zeros((1, itype.arity), dtype=np.int64)
        args = []
        for m, spec in enumerate(itype.args):
            inp = np.concatenate([h, encode_prefix(itype, values, m)], axis=1)
            z, _ = self.arg_heads[(t, m)].forward(inp)
            if spec.kind == ARG_BOOL:
                p_true = 1.0 / (1.0 + np.exp(-z[0, 0]))
                value = bool(p_true >= 0.5) if greedy else bool(rng.random() < p_true)
                args.append(value)
            else:
                p = np.exp(log_softmax(z[0]))
                value = int(np.argmax(p)) if greedy else draw(p, rng)
                args.append(value)
            values[0, m] = int(value)

        return Instruction(t, args)


class ValueBaseline(Module):
    """A single learned scalar used as V(s) for every state."""

    kind = "scalar"

    def __init__(self, value=0.0):
        self.value = np.array([float(value)])
        self.dvalue = np.zeros(1)

    def own_parameters(self):
        return [("value", self.value, self.dvalue)]

    def forward(self, count):
        return np.full(count, self.value[0])

    def backward(self, dvalues):
        self.dvalue += np.sum(dvalues)


class PolicyAgent:
    """Adapts a policy to the `act(observation, rng)` agent protocol."""

    def __init__(self, policy, greedy=True, name=None):
        self.policy = policy
        self.greedy = greedy
        self.name = name or f"{policy.kind}-policy"
        self.interface = policy.interface
        self.schema = policy.schema

    def act(self, observation, rng=None):
        return self.policy.sample(observation, rng, greedy=self.greedy)

    def __repr__(self):
        return f"PolicyAgent({self.name}, greedy={self.greedy})"


def policy_log_prob(policy, observation, instruction):
    logp, _, _ = policy.evaluate([observation], [instruction])
    return float(logp[0])


def new_policy(interface, rng=None, **arch):
    """Fresh policy for an interface: a GNN for pointer schemas, an MLP otherwise."""
    spec = get_interface(interface)
    if spec.schema.has_pointers:
        return GnnPolicy(spec.schema, rng=rng, **arch)
    return MlpPolicy(spec.schema, spec.obs_width, rng=rng, **arch)


def policy_from_config(kind, config):
    """Rebuild an untrained policy of the same shape (used when loading checkpoints)."""
    config = dict(config)
    spec = get_interface(config.pop("interface"))
    if kind == MlpPolicy.kind:
        return MlpPolicy(spec.schema, rng=np.random.default_rng(0), **config)
    if kind == GnnPolicy.kind:
        return GnnPolicy(spec.schema, rng=np.random.default_rng(0), **config)
    raise ValueError(f"Unknown policy kind: {kind}")
