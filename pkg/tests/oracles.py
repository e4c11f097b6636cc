"""Slow, direct reference implementations used only by the tests.

Nothing here imports the vectorized code paths it is used to check.
"""

import itertools
import math

import numpy as np


def energy_loops(w, b, c, v, h):
    n, m = len(b), len(c)
    e = 0.0
    for i in range(n):
        for j in range(m):
            e -= w[i][j] * v[i] * h[j]
    for i in range(n):
        e -= b[i] * v[i]
    for j in range(m):
        e -= c[j] * h[j]
    return e


def configurations(n, m):
    """(index, v, h) for every joint state, index per the little-endian encoding."""
    for bits in itertools.product((0, 1), repeat=n + m):
        bits = bits[::-1]  # itertools varies the last position fastest
        index = sum(bit << k for k, bit in enumerate(bits))
        yield index, list(bits[:n]), list(bits[n:])


def naive_table(w, b, c):
    """Unnormalized exp(-E) over all states, normalized at the end, no log-sum-exp."""
    n, m = len(b), len(c)
    weights = np.zeros(2 ** (n + m))
    for index, v, h in configurations(n, m):
        weights[index] = math.exp(-energy_loops(w, b, c, v, h))
    return weights / weights.sum()


def log_likelihood(w, b, c, data):
    """Mean log P(v) over data rows by direct summation over hidden states."""
    n, m = len(b), len(c)
    table = naive_table(w, b, c)
    pv = {}
    for index, v, h in configurations(n, m):
        pv[tuple(v)] = pv.get(tuple(v), 0.0) + table[index]
    return float(np.mean([math.log(pv[tuple(int(x) for x in row)]) for row in data]))


def joint_log_likelihood(w, b, c, indices, counts):
    """sum_k Q(x_k) log P(x_k) for an empirical joint distribution."""
    table = naive_table(w, b, c)
    q = np.asarray(counts, dtype=float)
    q = q / q.sum()
    return float(np.sum(q * np.log(table[np.asarray(indices)])))


def central_difference(f, x, step):
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        up = x.copy()
        dn = x.copy()
        up.flat[k] += step
        dn.flat[k] -= step
        grad.flat[k] = (f(up) - f(dn)) / (2 * step)
    return grad
