import itertools

import numpy as np


def finite_difference_gap(modules, loss_fn, accumulate_fn, rng, samples=30, eps=1e-6):
    """Largest relative difference between accumulated gradients and central
    differences of `loss_fn` over randomly chosen parameter entries."""

    for m in modules:
        m.zero_grad()
    accumulate_fn()

    entries = []
    for m in modules:
        for (_, p), (_, g) in zip(m.named_parameters(), m.named_gradients()):
            entries += [(p, g, idx) for idx in np.ndindex(p.shape)]

    worst = 0.0
    for k in rng.choice(len(entries), size=min(samples, len(entries)), replace=False):
        p, g, idx = entries[k]
        old = p[idx]
        p[idx] = old + eps
        up = loss_fn()
        p[idx] = old - eps
        down = loss_fn()
        p[idx] = old
        numeric = (up - down) / (2 * eps)
        worst = max(worst, abs(numeric - g[idx]) / max(abs(numeric), abs(g[idx]), 1e-3))
    return worst


def randomize_parameters(module, rng, scale=0.5):
    for _, p in module.named_parameters():
        p[...] = rng.normal(scale=scale, size=p.shape)


def brute_force_knapsack(w, val, W):
    """Best value over all 2^n subsets, by bitmask."""
    n = len(w)
    best = 0.0
    for mask in range(1 << n):
        weight = sum(w[j] for j in range(n) if mask >> j & 1)
        if weight <= W:
            best = max(best, sum(val[j] for j in range(n) if mask >> j & 1))
    return best


def _three(a, b):
    return [1.0 if a < b else 0.0, 1.0 if a == b else 0.0, 1.0 if a > b else 0.0]


def comparison_oracle(A, low, high, v):
    """Straight-line rebuild of the variable/value comparison block."""
    out = []
    for i, j in itertools.combinations(range(len(v)), 2):
        out += _three(v[i], v[j])
        out += _three(A[v[i]], A[v[j]])
    for x in v:
        if x == low:
            out += [1.0, 0.0, 0.0, 0.0]
        else:
            out += [0.0] + _three(A[x - 1], A[x])
        if x == high:
            out += [0.0, 0.0, 0.0, 1.0]
        else:
            out += _three(A[x + 1], A[x]) + [0.0]
    return np.array(out)


def query_oracle(A, q, v):
    out = []
    for x in v:
        out += _three(q, A[x])
    return np.array(out)


def knapsack_aggregates_oracle(w, val, in_sol, i, cur_v, cur_w, best_v, W):
    """The three O(n) features: improvement still possible, everything left fits, one more fits."""
    n = len(w)
    start = i + 1 if 0 <= i < n and in_sol[i] else max(i, 0)
    rest = list(range(start, n))
    v_rest = sum(val[j] for j in rest)
    w_rest = sum(w[j] for j in rest)
    w_min = min((w[j] for j in rest), default=float("inf"))
    return [float(cur_v + v_rest > best_v), float(cur_w + w_rest <= W), float(cur_w + w_min <= W)]


def reference_quicksort(A):
    """Lomuto quick sort with A[high] as pivot: the sorted array and the swap sequence."""
    A = list(A)
    swaps = []

    def partition(lo, hi):
        pivot = A[hi]
        i = lo
        for j in range(lo, hi):
            if A[j] < pivot:
                if i != j:
                    A[i], A[j] = A[j], A[i]
                    swaps.append((i, j))
                i += 1
        A[i], A[hi] = A[hi], A[i]
        swaps.append((i, hi))
        return i

    def quicksort(lo, hi):
        if lo < hi:
            p = partition(lo, hi)
            quicksort(lo, p - 1)
            quicksort(p + 1, hi)

    quicksort(0, len(A) - 1)
    return A, swaps
