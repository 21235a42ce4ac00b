import sys
import logging

import click_log

import numpy as np

from .vm import Instruction
from .layers import Module, Mlp, scaled_uniform, log_softmax, categorical_terms, draw

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("gnn")
click_log.basic_config(logger)


class EdgeMessages(Module):
    """Message network with mean aggregation over every other node.

    The message from u to v is a two-layer network on [h_v, h_u, x_uv], where
    x_uv = E[u, v] is the feature of the edge (u, v). Its first layer is stored
    as separate self/neighbour/edge blocks, and because its output layer is
    affine the mean is taken over the hidden activations before that layer. A node with no other nodes receives a zero message."""

    def __init__(self, node_width, edge_width, hidden, rng):
        fan_in = 2 * node_width + edge_width
        block = scaled_uniform(rng, fan_in, hidden)
        self.W_self = block[:node_width].copy()
        self.W_nbr = block[node_width: 2 * node_width].copy()
        self.W_edge = block[2 * node_width:].copy()
        self.b1 = np.zeros(hidden)
        self.W_out = scaled_uniform(rng, hidden, hidden)
        self.b_out = np.zeros(hidden)
        self._grads = {name: np.zeros_like(p) for name, p in self._params()}

    def _params(self):
        return [("W_self", self.W_self), ("W_nbr", self.W_nbr), ("W_edge", self.W_edge),
                ("b1", self.b1), ("W_out", self.W_out), ("b_out", self.b_out)]

    def own_parameters(self):
        return [(name, p, self._grads[name]) for name, p in self._params()]

    def forward(self, H, E):
        n = H.shape[0]
        if n < 2:
            return np.zeros((n, self.b_out.shape[0])), None

        # Z[v, u] is the pre-activation of the message from u to v.
        Et = E.transpose(1, 0, 2)
        Z = (H @ self.W_self)[:, None, :] + (H @ self.W_nbr)[None, :, :] + Et @ self.W_edge + self.b1
        mask = (1.0 - np.eye(n))[:, :, None]
        S = (np.maximum(Z, 0.0) * mask).sum(axis=1) / (n - 1)
        return S @ self.W_out + self.b_out, (H, Et, Z, mask, S)

    def backward(self, cache, dM):
        if cache is None:
            return np.zeros((dM.shape[0], self.W_self.shape[0]))

        H, Et, Z, mask, S = cache
        n = H.shape[0]
        g = self._grads
        g["W_out"] += S.T @ dM
        g["b_out"] += dM.sum(axis=0)
        dS = dM @ self.W_out.T

        dZ = dS[:, None, :] * mask / (n - 1) * (Z > 0)
        d_self = dZ.sum(axis=1)
        d_nbr = dZ.sum(axis=0)
        g["W_self"] += H.T @ d_self
        g["W_nbr"] += H.T @ d_nbr
        g["W_edge"] += Et.reshape(-1, Et.shape[-1]).T @ dZ.reshape(-1, dZ.shape[-1])
        g["b1"] += dZ.sum(axis=(0, 1))
        return d_self @ self.W_self.T + d_nbr @ self.W_nbr.T


class GnnPolicy(Module):
    """Message-passing pointer policy for the full-view interface.

    Node inputs are the node feature plus a selected bit. After an embedding
    network and `layers` rounds of message passing, a pointer network scores
    every node. The first index is drawn from those scores; the second comes
    from a second pass with the selected bit set on the first index."""

    kind = "gnn"

    NODE_WIDTH = 16
    HIDDEN = 32
    LAYERS = 5
    POINTER_HIDDEN = 16
    EDGE_WIDTH = 2

    def __init__(self, schema, rng=None, node_width=NODE_WIDTH, hidden=HIDDEN, layers=LAYERS,
                 pointer_hidden=POINTER_HIDDEN):
        if schema.num_types != 1 or not schema.has_pointers:
            raise ValueError(f"GnnPolicy drives a single two-pointer instruction, not {schema}")
        rng = np.random.default_rng(0) if rng is None else rng

        self.schema = schema
        self.node_width = int(node_width)
        self.hidden = int(hidden)
        self.layers = int(layers)
        self.pointer_hidden = int(pointer_hidden)

        self.embed = Mlp([2, self.hidden, self.node_width], rng)
        self.edge_nets = [EdgeMessages(self.node_width, self.EDGE_WIDTH, self.hidden, rng) for _ in range(self.layers)]
        self.node_nets = [Mlp([self.node_width + self.hidden, self.hidden, self.node_width], rng)
                          for _ in range(self.layers)]
        self.pointer = Mlp([self.node_width, self.pointer_hidden, 1], rng, zero_last=True)

    @property
    def interface(self):
        return self.schema.name

    @property
    def config(self):
        return {
            "interface": self.interface,
            "node_width": self.node_width,
            "hidden": self.hidden,
            "layers": self.layers,
            "pointer_hidden": self.pointer_hidden,
        }

    def children(self):
        out = [("embed", self.embed)]
        for t in range(self.layers):
            out += [(f"edge{t}", self.edge_nets[t]), (f"node{t}", self.node_nets[t])]
        out.append(("pointer", self.pointer))
        return out

    def _propagate(self, graph, selected=None):
        n = graph.num_nodes
        bit = np.zeros((n, 1))
        if selected is not None:
            bit[selected, 0] = 1.0
        x = np.concatenate([np.asarray(graph.node_features, dtype=float).reshape(n, -1), bit], axis=1)
        E = np.asarray(graph.edge_tensor, dtype=float)

        H, embed_cache = self.embed.forward(x)
        rounds = []
        for edge_net, node_net in zip(self.edge_nets, self.node_nets):
            M, edge_cache = edge_net.forward(H, E)
            H, node_cache = node_net.forward(np.concatenate([H, M], axis=1))
            rounds.append((edge_cache, node_cache))
        return H, (embed_cache, rounds)

    def node_states(self, graph, selected=None):
        return self._propagate(graph, selected)[0]

    def pointer_logits(self, graph, selected=None):
        """Per-node scores; returns (logits, cache)."""
        H, prop_cache = self._propagate(graph, selected)
        out, ptr_cache = self.pointer.forward(H)
        return out[:, 0], (prop_cache, ptr_cache)

    def _backward_pass(self, cache, dlogits):
        (embed_cache, rounds), ptr_cache = cache
        dH = self.pointer.backward(ptr_cache, dlogits[:, None])
        for t in reversed(range(self.layers)):
            edge_cache, node_cache = rounds[t]
            dinp = self.node_nets[t].backward(node_cache, dH)
            dH = dinp[:, : self.node_width] + self.edge_nets[t].backward(edge_cache, dinp[:, self.node_width:])
        self.embed.backward(embed_cache, dH)

    def evaluate(self, observations, instructions):
        if len(observations) != len(instructions):
            raise ValueError(f"{len(observations)} observations but {len(instructions)} instructions")

        logp = np.zeros(len(instructions))
        entropy = np.zeros(len(instructions))
        caches = []
        for r, (graph, instr) in enumerate(zip(observations, instructions)):
            i, j = instr.args
            first, first_cache = self.pointer_logits(graph)
            second, second_cache = self.pointer_logits(graph, selected=i)
            lp1, h1, dl1, de1 = categorical_terms(first[None, :], [i])
            lp2, h2, dl2, de2 = categorical_terms(second[None, :], [j])
            logp[r] = lp1[0] + lp2[0]
            entropy[r] = h1[0] + h2[0]
            caches.append(((first_cache, dl1[0], de1[0]), (second_cache, dl2[0], de2[0])))
        return logp, entropy, caches

    def backward(self, caches, dlogp, dentropy):
        dlogp = np.asarray(dlogp, dtype=float)
        dentropy = np.broadcast_to(np.asarray(dentropy, dtype=float), dlogp.shape)
        for r, passes in enumerate(caches):
            for cache, dl, de in passes:
                self._backward_pass(cache, dlogp[r] * dl + dentropy[r] * de)

    def sample(self, graph, rng=None, greedy=False):
        picks = []
        for _ in range(2):
            logits, _ = self.pointer_logits(graph, selected=picks[0] if picks else None)
            p = np.exp(log_softmax(logits))
            picks.append(int(np.argmax(p)) if greedy else draw(p, rng))
        return Instruction(0, picks)
