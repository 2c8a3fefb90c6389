"""Independent reference implementations used as test oracles.

Nothing here imports the code under test beyond plain data containers, so
agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def brute_force_auc(scores, labels) -> float:
    """O(n^2) pair counting with ties worth one half, in exact rationals."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    twice_wins = 0
    for p in pos:
        for q in neg:
            twice_wins += 2 if p > q else (1 if p == q else 0)
    return float(Fraction(twice_wins, 2 * len(pos) * len(neg)))


def leaky(x, slope=0.01):
    return np.where(x > 0, x, slope * x)


def mlp_oracle(x, weights_biases):
    """Straight-line dense stack: leaky ReLU between layers, linear output."""
    h = np.asarray(x, dtype=np.float64)
    for i, (w, b) in enumerate(weights_biases):
        h = h @ w + b
        if i < len(weights_biases) - 1:
            h = leaky(h)
    return h


def softmax_oracle(v):
    """e^x / sum e^x in math.fsum over Python floats, row by row."""
    rows = np.atleast_2d(np.asarray(v, dtype=np.float64))
    out = []
    for r in rows:
        m = max(r)
        e = [math.exp(x - m) for x in r]
        s = math.fsum(e)
        out.append([x / s for x in e])
    return np.array(out).reshape(np.shape(v))


def central_differences(f, arrays, h=1e-5):
    """Numerical gradient of scalar ``f(arrays)`` w.r.t. each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            up = f(arrays)
            a[i] = old - h
            down = f(arrays)
            a[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """Largest |a - n| / max(|a|, |n|) over coordinates where |a| > floor."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        mask = np.abs(a) > floor
        if mask.any():
            rel = np.abs(a[mask] - n[mask]) / np.maximum(np.abs(a[mask]), np.abs(n[mask]))
            worst = max(worst, float(rel.max()))
    return worst


def replay_partition(class_rows, proportions, num_clients):
    """Deal each class's (already permuted) rows by largest remainder.

    ``class_rows``: class -> row indices in dealing order.
    ``proportions``: class -> the Dirichlet draw that was accepted.
    Returns client -> sorted row indices.
    """
    owner = {}
    for c, rows in class_rows.items():
        p = np.asarray(proportions[c], dtype=np.float64)
        total = len(rows)
        quotas = [Fraction(float(v)) * total for v in p]
        counts = [math.floor(q) for q in quotas]
        rest = total - sum(counts)
        fracs = sorted(range(num_clients), key=lambda k: (-(quotas[k] - counts[k]), k))
        for k in fracs[:rest]:
            counts[k] += 1
        start = 0
        for k, n in enumerate(counts):
            for r in rows[start:start + n]:
                owner[int(r)] = k
            start += n
    return {k: sorted(r for r, o in owner.items() if o == k) for k in range(num_clients)}
