import sys
import copy
import logging

import click_log

import numpy as np

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("layers")
click_log.basic_config(logger)


class Module:
    """Parameter container with hand-written backward passes.

    Subclasses list their own (name, parameter, gradient) triples in
    `own_parameters` and their sub-modules in `children`; gradients are
    accumulated by `backward` calls until `zero_grad`."""

    def own_parameters(self):
        return []

    def children(self):
        return []

    def _triples(self, prefix=""):
        for name, param, grad in self.own_parameters():
            yield prefix + name, param, grad
        for child_name, child in self.children():
            yield from child._triples(f"{prefix}{child_name}.")

    def named_parameters(self):
        return [(name, p) for name, p, _ in self._triples()]

    def named_gradients(self):
        return [(name, g) for name, _, g in self._triples()]

    def zero_grad(self):
        for _, _, g in self._triples():
            g[...] = 0.0

    @property
    def num_parameters(self):
        return int(sum(p.size for _, p in self.named_parameters()))

    def state_dict(self):
        return {name: p.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise ValueError(f"Parameter names differ: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=float)
            if value.shape != p.shape:
                raise ValueError(f"Shape mismatch for {name}: {value.shape} != {p.shape}")
            p[...] = value

    def snapshot(self):
        """Deep copy for read-only use by actors."""
        return copy.deepcopy(self)


def scaled_uniform(rng, fan_in, fan_out):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Dense(Module):
    """Affine map over the last axis; inputs may carry any leading shape."""

    def __init__(self, fan_in, fan_out, rng, zero=False):
        self.W = np.zeros((fan_in, fan_out)) if zero else scaled_uniform(rng, fan_in, fan_out)
        self.b = np.zeros(fan_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def own_parameters(self):
        return [("W", self.W, self.dW), ("b", self.b, self.db)]

    @property
    def fan_in(self):
        return self.W.shape[0]

    @property
    def fan_out(self):
        return self.W.shape[1]

    def forward(self, x):
        return x @ self.W + self.b, x

    def backward(self, x, dy):
        self.dW += x.reshape(-1, self.fan_in).T @ dy.reshape(-1, self.fan_out)
        self.db += dy.reshape(-1, self.fan_out).sum(axis=0)
        return dy @ self.W.T


class Mlp(Module):
    """Stack of Dense layers with rectifiers between them.

    :param sizes: [input, hidden..., output]
    :param zero_last: start the final layer at zero so the output is constant
    :param activate_output: apply the rectifier to the final layer too"""

    def __init__(self, sizes, rng, zero_last=False, activate_output=False):
        if len(sizes) < 2:
            raise ValueError(f"An MLP needs at least an input and an output size: {sizes}")
        self.sizes = list(sizes)
        self.activate_output = activate_output
        self.layers = [
            Dense(a, b, rng, zero=zero_last and i == len(sizes) - 2)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    def children(self):
        return [(str(i), layer) for i, layer in enumerate(self.layers)]

    def forward(self, x):
        caches = []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            z, x_in = layer.forward(x)
            activated = i < last or self.activate_output
            x = np.maximum(z, 0.0) if activated else z
            caches.append((x_in, z, activated))
        return x, caches

    def backward(self, caches, dy):
        for layer, (x_in, z, activated) in zip(reversed(self.layers), reversed(caches)):
            if activated:
                dy = dy * (z > 0)
            dy = layer.backward(x_in, dy)
        return dy


def log_softmax(z):
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def draw(p, rng):
    """Index drawn from the (unnormalized) probability vector `p`."""
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(p) - 1))


def categorical_terms(z, choice):
    """Log-prob of `choice` and entropy for each row of logits `z`, with the
    matching logit gradients `(dlogp/dz, dH/dz)`."""

    logp_all = log_softmax(z)
    p = np.exp(logp_all)
    rows = np.arange(len(z))
    logp = logp_all[rows, choice]
    entropy = -np.sum(p * logp_all, axis=-1)

    onehot = np.zeros_like(p)
    onehot[rows, choice] = 1.0
    dlogp_dz = onehot - p
    dent_dz = -p * (logp_all + entropy[:, None])
    return logp, entropy, dlogp_dz, dent_dz


def log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def bernoulli_terms(z, choice):
    """Same as `categorical_terms` for a single logit per row and boolean choices."""

    z = z.reshape(-1)
    b = np.asarray(choice, dtype=float)
    sig = 1.0 / (1.0 + np.exp(-z))
    log_p1 = log_sigmoid(z)
    log_p0 = log_sigmoid(-z)
    logp = b * log_p1 + (1.0 - b) * log_p0
    entropy = -(sig * log_p1 + (1.0 - sig) * log_p0)
    return logp, entropy, b - sig, -z * sig * (1.0 - sig)
