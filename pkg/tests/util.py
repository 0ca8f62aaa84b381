"""Shared oracles for the test suite.

Everything here is written independently of the library internals (plain
loops, naive formulas) so tests compare two routes to the same number.
"""

import numpy as np


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return np.max(np.abs(a - b) / scale)


def central_diff(f, x, h):
    """Central finite difference of scalar f at scalar coordinate x."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def second_diff(f, x, h):
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def _act(net, pre):
    if net.activation == "elu":
        return np.where(pre > 0, pre, np.exp(pre) - 1.0)
    return np.where(pre > 0, pre, net.act_param * pre)


def manual_q(net, x):
    """Naive recomputation of the dueling forward pass."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    for w, b in net.trunk:
        h = _act(net, h @ w.T + b)
    v = h
    for i, (w, b) in enumerate(net.value):
        v = v @ w.T + b
        if i < len(net.value) - 1:
            v = _act(net, v)
    a = h
    for i, (w, b) in enumerate(net.advantage):
        a = a @ w.T + b
        if i < len(net.advantage) - 1:
            a = _act(net, a)
    return v + a - a.mean(axis=1, keepdims=True)


def quartiles_linear(values):
    """Quartiles with linear interpolation between order statistics.

    Index convention: the p-quantile sits at position p*(n-1) of the sorted
    sample, interpolating linearly between neighbours.
    """
    xs = sorted(float(v) for v in values)
    n = len(xs)

    def q(p):
        pos = p * (n - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, n - 1)
        frac = pos - lo
        return xs[lo] * (1.0 - frac) + xs[hi] * frac

    return q(0.25), q(0.5), q(0.75)
