"""Dueling value networks over belief vectors.

A net is a plain container of float64 arrays: a shared trunk, a value head
ending in one unit, and an advantage head ending in one unit per action.
Q(b, a) = V(b) + A(b, a) - mean_a' A(b, a'), so the value stream is pinned
to the mean of the Q outputs and can be audited on its own.

The taped forward lives in diffcore; the raw forward here uses the exact
same expressions so both paths agree bit for bit.
"""

from __future__ import annotations

import json
import numpy as np

from .diffcore import ShapeError


class DuelingNet:
    """Parameter container. Layers are (W, b) pairs with W of shape (out, in)."""

    def __init__(self, input_dim, trunk, value, advantage, activation, act_param, kind="custom"):
        if activation not in ("elu", "lrelu"):
            raise ValueError(f"unknown activation '{activation}'")
        self.input_dim = int(input_dim)
        self.trunk = trunk
        self.value = value
        self.advantage = advantage
        self.activation = activation
        self.act_param = float(act_param)
        self.kind = kind

    @property
    def n_actions(self):
        return self.advantage[-1][0].shape[0]

    def named_params(self):
        out = []
        for group, layers in (("trunk", self.trunk), ("value", self.value),
                              ("advantage", self.advantage)):
            for li, (w, b) in enumerate(layers):
                out.append((f"{group}.{li}.w", w))
                out.append((f"{group}.{li}.b", b))
        return out

    def param_count(self):
        return sum(int(p.size) for _, p in self.named_params())

    def copy(self):
        return DuelingNet(
            self.input_dim,
            [(w.copy(), b.copy()) for w, b in self.trunk],
            [(w.copy(), b.copy()) for w, b in self.value],
            [(w.copy(), b.copy()) for w, b in self.advantage],
            self.activation,
            self.act_param,
            self.kind,
        )

    def load_from(self, other):
        """Copy the other net's parameter values into this net's arrays."""
        for (name, dst), (oname, src) in zip(self.named_params(), other.named_params()):
            if name != oname or dst.shape != src.shape:
                raise ShapeError(f"parameter mismatch: {name} {dst.shape} vs {oname} {src.shape}")
            dst[...] = src


def _init_layer(rng, n_in, n_out):
    bound = 1.0 / np.sqrt(n_in)
    w = rng.uniform(-bound, bound, size=(n_out, n_in))
    b = rng.uniform(-bound, bound, size=(n_out,))
    return w, b


def _init_stack(rng, widths):
    return [_init_layer(rng, widths[i], widths[i + 1]) for i in range(len(widths) - 1)]


def make_net(input_dim, trunk_widths, value_widths, advantage_widths,
             activation, act_param, rng, kind="custom"):
    """Freshly initialized net; weights and biases drawn U(+-1/sqrt(fan_in))."""
    rng = np.random.default_rng(rng)
    trunk = _init_stack(rng, [input_dim] + list(trunk_widths))
    h = trunk_widths[-1]
    value = _init_stack(rng, [h] + list(value_widths))
    advantage = _init_stack(rng, [h] + list(advantage_widths))
    if value_widths[-1] != 1:
        raise ShapeError("value head must end in a single unit")
    return DuelingNet(input_dim, trunk, value, advantage, activation, act_param, kind)


def tiger_net(rng):
    """1 -> 10 -> 10 trunk, value 10->1, advantage 10->3, ELU. 174 params."""
    return make_net(1, [10, 10], [1], [3], "elu", 1.0, rng, kind="tiger")


def fvrs_net(rng, n_rocks=4):
    """(3k+2) -> 100x3 trunk, value 100->50->1, advantage 100->50->5, LReLU 0.03."""
    return make_net(3 * n_rocks + 2, [100, 100, 100], [50, 1], [50, 5],
                    "lrelu", 0.03, rng, kind="fvrs")


# -- raw forward (no tape) --------------------------------------------------


def _act_raw(net, x):
    if net.activation == "elu":
        return np.where(x > 0.0, x, np.expm1(x))
    return np.where(x > 0.0, x, net.act_param * x)


def _trunk_raw(net, x):
    h = x
    for w, b in net.trunk:
        h = _act_raw(net, h @ w.T + b)
    return h


def _head_raw(net, h, layers):
    for li, (w, b) in enumerate(layers):
        h = h @ w.T + b
        if li < len(layers) - 1:
            h = _act_raw(net, h)
    return h


def _promote(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.input_dim:
        raise ShapeError(f"expected input width {net.input_dim}, got shape {x.shape}")
    return xb, single


def q_values(net, x):
    """Q(b, a) for each action; (n_actions,) for a vector, (B, n_actions) for a batch."""
    xb, single = _promote(net, x)
    h = _trunk_raw(net, xb)
    v = _head_raw(net, h, net.value)
    a = _head_raw(net, h, net.advantage)
    q = v + (a - a.sum(axis=1, keepdims=True) * (1.0 / a.shape[1]))
    return q[0] if single else q


def value_stream(net, x):
    """Value-head output V(b); scalar for a vector input, (B,) for a batch."""
    xb, single = _promote(net, x)
    v = _head_raw(net, _trunk_raw(net, xb), net.value)[:, 0]
    return float(v[0]) if single else v


def greedy_action(net, x):
    """Argmax over q_values; ties break to the lowest action index."""
    q = q_values(net, x)
    return int(np.argmax(q)) if q.ndim == 1 else np.argmax(q, axis=1)


# -- nonnegativity projection ----------------------------------------------


def nonneg_param_names(net):
    """Weights constrained to stay nonnegative under the hard condition.

    Every trunk layer past the first, and every value-head layer. First layer
    (free sign so inputs can be used both ways), advantage head, and all
    biases stay unconstrained.
    """
    names = [f"trunk.{li}.w" for li in range(1, len(net.trunk))]
    names += [f"value.{li}.w" for li in range(len(net.value))]
    return names


def project_nonnegative(net):
    """Clip the constrained weights to zero from below, in place.

    Returns the number of entries that were negative.
    """
    wanted = set(nonneg_param_names(net))
    clipped = 0
    for name, p in net.named_params():
        if name in wanted:
            mask = p < 0.0
            clipped += int(mask.sum())
            p[mask] = 0.0
    return clipped


# -- checkpoints -------------------------------------------------------------

_CKPT_FORMAT = "dueling-net"


def _stack_to_json(layers):
    return [{"w": w.tolist(), "b": b.tolist()} for w, b in layers]


def _stack_from_json(obj):
    return [(np.asarray(layer["w"], dtype=np.float64),
             np.asarray(layer["b"], dtype=np.float64)) for layer in obj]


def save_checkpoint(net, path):
    """JSON checkpoint with a shape header; float64 values survive exactly."""
    doc = {
        "format": _CKPT_FORMAT,
        "version": 1,
        "kind": net.kind,
        "input_dim": net.input_dim,
        "activation": net.activation,
        "act_param": net.act_param,
        "shapes": {name: list(p.shape) for name, p in net.named_params()},
        "trunk": _stack_to_json(net.trunk),
        "value": _stack_to_json(net.value),
        "advantage": _stack_to_json(net.advantage),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != _CKPT_FORMAT:
        raise ValueError(f"not a network checkpoint: {path}")
    net = DuelingNet(
        doc["input_dim"],
        _stack_from_json(doc["trunk"]),
        _stack_from_json(doc["value"]),
        _stack_from_json(doc["advantage"]),
        doc["activation"],
        doc["act_param"],
        doc.get("kind", "custom"),
    )
    for name, p in net.named_params():
        want = tuple(doc["shapes"][name])
        if p.shape != want:
            raise ShapeError(f"checkpoint shape header mismatch on {name}: "
                             f"{p.shape} vs {want}")
    prev = net.input_dim
    for w, b in net.trunk:
        if w.shape[1] != prev or b.shape != (w.shape[0],):
            raise ShapeError("inconsistent trunk shapes in checkpoint")
        prev = w.shape[0]
    for head in (net.value, net.advantage):
        h = net.trunk[-1][0].shape[0]
        for w, b in head:
            if w.shape[1] != h or b.shape != (w.shape[0],):
                raise ShapeError("inconsistent head shapes in checkpoint")
            h = w.shape[0]
    return net
