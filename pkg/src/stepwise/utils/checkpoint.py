import sys
import gzip
import json
import logging
import collections

import click_log

import numpy as np

from construct import Struct, Const, Int16ul, Int32ul, PascalString, PrefixedArray, Prefixed, GreedyBytes
from construct import ConstructError

from .policy import ValueBaseline, policy_from_config

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("checkpoint")
click_log.basic_config(logger)

FORMAT_VERSION = 1

TENSOR = Struct(
    "name" / PascalString(Int16ul, "utf8"),
    "shape" / PrefixedArray(Int16ul, Int32ul),
    # Raw little-endian float64 values:
    "data" / Prefixed(Int32ul, GreedyBytes),
)

CHECKPOINT = Struct(
    "magic" / Const(b"STW\x01"),
    "version" / Int16ul,
    "kind" / PascalString(Int16ul, "utf8"),
    "interface" / PascalString(Int16ul, "utf8"),
    "metadata" / PascalString(Int32ul, "utf8"),
    "tensors" / PrefixedArray(Int32ul, TENSOR),
)


class CheckpointError(ValueError):
    """A checkpoint file is unreadable, of an unknown format or inconsistent."""


Checkpoint = collections.namedtuple("Checkpoint", ["policy", "baseline", "metadata"])


def _tensor(name, array):
    array = np.ascontiguousarray(array, dtype="<f8")
    return dict(name=name, shape=list(array.shape), data=array.tobytes())


def save_checkpoint(path, policy, baseline=None, metadata=None):
    """Write a policy (and optional baseline) with its architecture and free-form metadata."""

    meta = {"config": policy.config, "baseline": baseline is not None, "extra": metadata or {}}
    tensors = [_tensor(f"policy.{name}", p) for name, p in policy.named_parameters()]
    if baseline is not None:
        tensors += [_tensor(f"baseline.{name}", p) for name, p in baseline.named_parameters()]

    blob = CHECKPOINT.build(dict(
        version=FORMAT_VERSION,
        kind=policy.kind,
        interface=policy.interface,
        metadata=json.dumps(meta, sort_keys=True),
        tensors=tensors,
    ))
    with gzip.open(path, "wb") as f:
        f.write(blob)
    logger.debug("Wrote %d tensors to %s", len(tensors), path)


def load_checkpoint(path):
    """Read a checkpoint written by `save_checkpoint`.

    :return: Checkpoint(policy, baseline or None, metadata dict)"""

    try:
        with gzip.open(path, "rb") as f:
            contents = CHECKPOINT.parse_stream(f)
    except FileNotFoundError:
        raise
    except (OSError, EOFError, ConstructError) as ex:
        raise CheckpointError(f"Not a readable checkpoint: {path} ({ex})") from ex

    if contents.version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {contents.version} in {path}")

    try:
        meta = json.loads(contents.metadata)
        policy = policy_from_config(contents.kind, meta["config"])
    except (ValueError, KeyError, TypeError) as ex:
        raise CheckpointError(f"Bad checkpoint metadata in {path}: {ex}") from ex

    policy_state, baseline_state = {}, {}
    for t in contents.tensors:
        shape = tuple(t.shape)
        values = np.frombuffer(t.data, dtype="<f8")
        if values.size != int(np.prod(shape)):
            raise CheckpointError(f"Tensor {t.name} holds {values.size} values but has shape {shape}")
        values = values.reshape(shape).astype(float)
        scope, _, name = t.name.partition(".")
        (policy_state if scope == "policy" else baseline_state)[name] = values

    baseline = ValueBaseline() if meta.get("baseline") else None
    try:
        policy.load_state_dict(policy_state)
        if baseline is not None:
            baseline.load_state_dict(baseline_state)
    except ValueError as ex:
        raise CheckpointError(f"Checkpoint {path} does not match its architecture: {ex}") from ex

    return Checkpoint(policy, baseline, meta.get("extra", {}))
