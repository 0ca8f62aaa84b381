"""Reverse-mode tape differentiation for small dense networks.

The engine records every primitive on an append-only tape. Backward passes
can themselves be recorded (``create_graph=True``), so losses that contain
first or second derivatives of the network output w.r.t. its input remain
differentiable w.r.t. the parameters. All arithmetic is float64; third-order
chains amplify rounding error too much in float32.

Shapes: the network ops work on 2-D batches ``(B, d)``. A 1-D input is
promoted to a single-row batch and the outputs squeezed back.
"""

from __future__ import annotations

import numpy as np


class DiffError(Exception):
    """Base error for the differentiation engine."""


class ShapeError(DiffError):
    pass


class NonFiniteError(DiffError):
    """An op produced NaN or Inf; the tape treats this as a hard error."""


class UnsupportedActivationError(DiffError):
    pass


def _sum_to(arr, shape):
    """Reduce `arr` back to `shape` by summing broadcast axes."""
    if arr.shape == tuple(shape):
        return arr
    while arr.ndim > len(shape):
        arr = arr.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and arr.shape[ax] != 1:
            arr = arr.sum(axis=ax, keepdims=True)
    return arr.reshape(shape)


class Node:
    """One recorded value. Leaves have no parents."""

    __slots__ = ("tape", "idx", "value", "op", "parents", "aux")

    def __init__(self, tape, idx, value, op, parents, aux):
        self.tape = tape
        self.idx = idx
        self.value = value
        self.op = op
        self.parents = parents
        self.aux = aux

    @property
    def shape(self):
        return self.value.shape

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Node({self.idx}, {self.op}, shape={self.value.shape})"


class Tape:
    """Append-only op record; parents always precede children."""

    def __init__(self, check_finite=True):
        self.nodes = []
        self.params = {}       # name -> leaf node
        self.input = None      # leaf node of the most recent forward()
        self.check_finite = check_finite
        self._leaf_cache = {}  # id(array) -> leaf node (dedupe repeated forwards)

    def __len__(self):
        return len(self.nodes)

    def _record(self, op, value, parents, aux=None):
        value = np.asarray(value, dtype=np.float64)
        if self.check_finite and not np.isfinite(value).all():
            raise NonFiniteError(f"op '{op}' produced a non-finite value")
        node = Node(self, len(self.nodes), value, op, parents, aux)
        self.nodes.append(node)
        return node

    # -- leaves ---------------------------------------------------------

    def leaf(self, value):
        return self._record("leaf", value, ())

    def param(self, name, value):
        node = self._leaf_cache.get(id(value))
        if node is None:
            node = self.leaf(value)
            self._leaf_cache[id(value)] = node
            self.params[name] = node
        return node

    # -- primitives ------------------------------------------------------

    def linear(self, x, w, b):
        """Affine map ``x @ w.T + b`` with w of shape (out, in)."""
        if x.value.ndim != 2 or x.value.shape[1] != w.value.shape[1]:
            raise ShapeError(
                f"linear: input {x.value.shape} incompatible with weight {w.value.shape}"
            )
        return self._record("linear", x.value @ w.value.T + b.value, (x, w, b))

    def matmul(self, a, b):
        return self._record("matmul", a.value @ b.value, (a, b))

    def transpose(self, a):
        return self._record("transpose", a.value.T, (a,))

    def add(self, a, b):
        return self._record("add", a.value + b.value, (a, b))

    def sub(self, a, b):
        return self._record("sub", a.value - b.value, (a, b))

    def neg(self, a):
        return self._record("neg", -a.value, (a,))

    def mul(self, a, b):
        return self._record("mul", a.value * b.value, (a, b))

    def scale(self, a, c):
        return self._record("scale", a.value * c, (a,), float(c))

    def sum_all(self, a):
        return self._record("sum_all", np.asarray(a.value.sum()), (a,))

    def sum_axis(self, a, axis):
        return self._record("sum_axis", a.value.sum(axis=axis, keepdims=True), (a,), axis)

    def sum_to(self, a, shape):
        return self._record("sum_to", _sum_to(a.value, shape), (a,), tuple(shape))

    def expand(self, a, shape):
        return self._record("expand", np.broadcast_to(a.value, shape).copy(), (a,), tuple(shape))

    def reshape(self, a, shape):
        return self._record("reshape", a.value.reshape(shape), (a,), tuple(shape))

    def elu(self, a):
        x = a.value
        return self._record("elu", np.where(x > 0.0, x, np.expm1(x)), (a,))

    def elu_deriv(self, a, order):
        x = a.value
        pos = 1.0 if order == 1 else 0.0
        return self._record("elu_deriv", np.where(x > 0.0, pos, np.exp(x)), (a,), order)

    def lrelu(self, a, slope):
        x = a.value
        return self._record("lrelu", np.where(x > 0.0, x, slope * x), (a,), slope)

    def lrelu_deriv(self, a, slope):
        # convention: derivative at exactly 0 is the negative slope
        x = a.value
        return self._record("lrelu_deriv", np.where(x > 0.0, 1.0, slope), (a,), slope)

    def relu(self, a):
        return self._record("relu", np.maximum(a.value, 0.0), (a,))

    def step(self, a):
        return self._record("step", (a.value > 0.0).astype(np.float64), (a,))

    def gather_actions(self, q, actions):
        actions = np.asarray(actions, dtype=np.intp)
        return self._record(
            "gather_actions", q.value[np.arange(q.value.shape[0]), actions], (q,), actions
        )

    def scatter_actions(self, g, actions, n_actions):
        actions = np.asarray(actions, dtype=np.intp)
        out = np.zeros((g.value.shape[0], n_actions))
        out[np.arange(g.value.shape[0]), actions] = g.value
        return self._record("scatter_actions", out, (g,), (actions, n_actions))

    def take_cols(self, a, cols):
        cols = np.asarray(cols, dtype=np.intp)
        if a.value.ndim != 2 or (len(cols) and cols.max() >= a.value.shape[1]):
            raise ShapeError(f"take_cols: columns {cols} out of range for {a.value.shape}")
        return self._record("take_cols", a.value[:, cols], (a,), cols)

    def put_cols(self, a, cols, n_cols):
        cols = np.asarray(cols, dtype=np.intp)
        out = np.zeros((a.value.shape[0], n_cols))
        out[:, cols] = a.value
        return self._record("put_cols", out, (a,), (cols, n_cols))


# -- backward pass --------------------------------------------------------
#
# Each VJP rule is written against an ops backend, so the same rule either
# computes raw numpy cotangents (final pass) or records them as new tape
# nodes (when the result must stay differentiable).


class _RawOps:
    taped = False

    @staticmethod
    def lift(node):
        return node.value

    @staticmethod
    def ones_like(node):
        return np.ones_like(node.value)

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def matmul(a, b):
        return a @ b

    @staticmethod
    def transpose(a):
        return a.T

    @staticmethod
    def mul(a, b):
        return a * b

    @staticmethod
    def scale(a, c):
        return a * c

    @staticmethod
    def neg(a):
        return -a

    @staticmethod
    def sum_to(a, shape):
        return _sum_to(a, shape)

    @staticmethod
    def expand(a, shape):
        return np.broadcast_to(a, shape).copy()

    @staticmethod
    def reshape(a, shape):
        return a.reshape(shape)

    @staticmethod
    def elu_deriv(x_node, order, tape):
        x = x_node.value
        pos = 1.0 if order == 1 else 0.0
        return np.where(x > 0.0, pos, np.exp(x))

    @staticmethod
    def lrelu_deriv(x_node, slope, tape):
        return np.where(x_node.value > 0.0, 1.0, slope)

    @staticmethod
    def step(x_node, tape):
        return (x_node.value > 0.0).astype(np.float64)

    @staticmethod
    def gather_actions(a, actions):
        return a[np.arange(a.shape[0]), actions]

    @staticmethod
    def scatter_actions(a, actions, n_actions):
        out = np.zeros((a.shape[0], n_actions))
        out[np.arange(a.shape[0]), actions] = a
        return out

    @staticmethod
    def take_cols(a, cols):
        return a[:, cols]

    @staticmethod
    def put_cols(a, cols, n_cols):
        out = np.zeros((a.shape[0], n_cols))
        out[:, cols] = a
        return out


class _TapedOps:
    taped = True

    def __init__(self, tape):
        self.tape = tape

    @staticmethod
    def lift(node):
        return node

    def ones_like(self, node):
        return self.tape.leaf(np.ones_like(node.value))

    def add(self, a, b):
        return self.tape.add(a, b)

    def matmul(self, a, b):
        return self.tape.matmul(a, b)

    def transpose(self, a):
        return self.tape.transpose(a)

    def mul(self, a, b):
        return self.tape.mul(a, b)

    def scale(self, a, c):
        return self.tape.scale(a, c)

    def neg(self, a):
        return self.tape.neg(a)

    def sum_to(self, a, shape):
        return self.tape.sum_to(a, shape)

    def expand(self, a, shape):
        return self.tape.expand(a, shape)

    def reshape(self, a, shape):
        return self.tape.reshape(a, shape)

    def elu_deriv(self, x_node, order, tape):
        return tape.elu_deriv(x_node, order)

    def lrelu_deriv(self, x_node, slope, tape):
        return tape.lrelu_deriv(x_node, slope)

    def step(self, x_node, tape):
        return tape.step(x_node)

    def gather_actions(self, a, actions):
        return self.tape.gather_actions(a, actions)

    def scatter_actions(self, a, actions, n_actions):
        return self.tape.scatter_actions(a, actions, n_actions)

    def take_cols(self, a, cols):
        return self.tape.take_cols(a, cols)

    def put_cols(self, a, cols, n_cols):
        return self.tape.put_cols(a, cols, n_cols)


def _vjp_linear(ops, node, g):
    x, w, b = node.parents
    dx = ops.matmul(g, ops.lift(w))
    dw = ops.matmul(ops.transpose(g), ops.lift(x))
    db = ops.sum_to(g, b.value.shape)
    return [(x, dx), (w, dw), (b, db)]


def _vjp_matmul(ops, node, g):
    a, b = node.parents
    return [
        (a, ops.matmul(g, ops.transpose(ops.lift(b)))),
        (b, ops.matmul(ops.transpose(ops.lift(a)), g)),
    ]


def _vjp_transpose(ops, node, g):
    return [(node.parents[0], ops.transpose(g))]


def _vjp_add(ops, node, g):
    a, b = node.parents
    return [(a, ops.sum_to(g, a.value.shape)), (b, ops.sum_to(g, b.value.shape))]


def _vjp_sub(ops, node, g):
    a, b = node.parents
    return [(a, ops.sum_to(g, a.value.shape)), (b, ops.sum_to(ops.neg(g), b.value.shape))]


def _vjp_neg(ops, node, g):
    return [(node.parents[0], ops.neg(g))]


def _vjp_mul(ops, node, g):
    a, b = node.parents
    return [
        (a, ops.sum_to(ops.mul(g, ops.lift(b)), a.value.shape)),
        (b, ops.sum_to(ops.mul(g, ops.lift(a)), b.value.shape)),
    ]


def _vjp_scale(ops, node, g):
    return [(node.parents[0], ops.scale(g, node.aux))]


def _vjp_sum_all(ops, node, g):
    a = node.parents[0]
    return [(a, ops.expand(g, a.value.shape))]


def _vjp_sum_axis(ops, node, g):
    a = node.parents[0]
    return [(a, ops.expand(g, a.value.shape))]


def _vjp_sum_to(ops, node, g):
    a = node.parents[0]
    return [(a, ops.expand(g, a.value.shape))]


def _vjp_expand(ops, node, g):
    a = node.parents[0]
    return [(a, ops.sum_to(g, a.value.shape))]


def _vjp_reshape(ops, node, g):
    a = node.parents[0]
    return [(a, ops.reshape(g, a.value.shape))]


def _vjp_elu(ops, node, g):
    a = node.parents[0]
    return [(a, ops.mul(g, ops.elu_deriv(a, 1, node.tape)))]


def _vjp_elu_deriv(ops, node, g):
    a = node.parents[0]
    return [(a, ops.mul(g, ops.elu_deriv(a, node.aux + 1, node.tape)))]


def _vjp_lrelu(ops, node, g):
    a = node.parents[0]
    return [(a, ops.mul(g, ops.lrelu_deriv(a, node.aux, node.tape)))]


def _vjp_relu(ops, node, g):
    a = node.parents[0]
    return [(a, ops.mul(g, ops.step(a, node.tape)))]


def _vjp_zero(ops, node, g):
    # piecewise-constant factors (step, lrelu slope mask): derivative 0 a.e.
    return []


def _vjp_gather_actions(ops, node, g):
    a = node.parents[0]
    return [(a, ops.scatter_actions(g, node.aux, a.value.shape[1]))]


def _vjp_scatter_actions(ops, node, g):
    a = node.parents[0]
    actions, _ = node.aux
    return [(a, ops.gather_actions(g, actions))]


def _vjp_take_cols(ops, node, g):
    a = node.parents[0]
    return [(a, ops.put_cols(g, node.aux, a.value.shape[1]))]


def _vjp_put_cols(ops, node, g):
    a = node.parents[0]
    cols, _ = node.aux
    return [(a, ops.take_cols(g, cols))]


_VJPS = {
    "linear": _vjp_linear,
    "matmul": _vjp_matmul,
    "transpose": _vjp_transpose,
    "add": _vjp_add,
    "sub": _vjp_sub,
    "neg": _vjp_neg,
    "mul": _vjp_mul,
    "scale": _vjp_scale,
    "sum_all": _vjp_sum_all,
    "sum_axis": _vjp_sum_axis,
    "sum_to": _vjp_sum_to,
    "expand": _vjp_expand,
    "reshape": _vjp_reshape,
    "elu": _vjp_elu,
    "elu_deriv": _vjp_elu_deriv,
    "lrelu": _vjp_lrelu,
    "lrelu_deriv": _vjp_zero,
    "relu": _vjp_relu,
    "step": _vjp_zero,
    "gather_actions": _vjp_gather_actions,
    "scatter_actions": _vjp_scatter_actions,
    "take_cols": _vjp_take_cols,
    "put_cols": _vjp_put_cols,
}


def backward(tape, out, wrt, create_graph=False):
    """Cotangents of scalar node `out` w.r.t. the leaf nodes in `wrt`.

    Returns ``{node_idx: grad}`` where grad is an ndarray, or a Node when
    ``create_graph`` (the grads are then recorded and stay differentiable).
    Leaves without a path to `out` are simply absent from the result.
    """
    if out.tape is not tape:
        raise DiffError("output node is not on this tape")
    nodes = tape.nodes
    ancestors = set()
    stack = [out.idx]
    while stack:
        i = stack.pop()
        if i in ancestors:
            continue
        ancestors.add(i)
        for p in nodes[i].parents:
            if p.idx not in ancestors:
                stack.append(p.idx)
    wrt_idx = {w.idx for w in wrt}
    # restrict the sweep to nodes that actually depend on some wrt leaf
    active = set()
    for i in sorted(ancestors):
        n = nodes[i]
        if i in wrt_idx or any(p.idx in active for p in n.parents):
            active.add(i)
    if out.idx not in active:
        return {}
    ops = _TapedOps(tape) if create_graph else _RawOps()
    grads = {out.idx: ops.ones_like(out)}
    for i in sorted(ancestors, reverse=True):
        if i not in grads:
            continue
        node = nodes[i]
        if not node.parents:
            continue
        for parent, contrib in _VJPS[node.op](ops, node, grads[i]):
            if parent.idx not in active:
                continue
            if parent.idx in grads:
                grads[parent.idx] = ops.add(grads[parent.idx], contrib)
            else:
                grads[parent.idx] = contrib
    return {i: g for i, g in grads.items() if i in wrt_idx}


# -- network forward -------------------------------------------------------


class ForwardPass:
    """Result of a taped forward: dueling outputs plus the tape bookkeeping."""

    __slots__ = ("q", "v", "tape", "input", "single")

    def __init__(self, q, v, tape, input_node, single):
        self.q = q
        self.v = v
        self.tape = tape
        self.input = input_node
        self.single = single

    def __iter__(self):
        return iter((self.q, self.v, self.tape))


def _activate(tape, net, h):
    if net.activation == "elu":
        return tape.elu(h)
    if net.activation == "lrelu":
        return tape.lrelu(h, net.act_param)
    raise UnsupportedActivationError(f"unknown activation '{net.activation}'")


def _taped_trunk(tape, net, x):
    h = x
    for li, (w, b) in enumerate(net.trunk):
        wn = tape.param(f"trunk.{li}.w", w)
        bn = tape.param(f"trunk.{li}.b", b)
        h = _activate(tape, net, tape.linear(h, wn, bn))
    return h


def _taped_head(tape, net, h, layers, prefix):
    """Hidden layers are activated, the final layer is linear."""
    for li, (w, b) in enumerate(layers):
        wn = tape.param(f"{prefix}.{li}.w", w)
        bn = tape.param(f"{prefix}.{li}.b", b)
        h = tape.linear(h, wn, bn)
        if li < len(layers) - 1:
            h = _activate(tape, net, h)
    return h


def taped_value(net, tape, x_node):
    """Value-stream scalar(s): shared trunk then value head, shape (B, 1)."""
    h = _taped_trunk(tape, net, x_node)
    return _taped_head(tape, net, h, net.value, "value")


def forward(net, x, tape=None):
    """Run the dueling net on `x`, recording onto a tape.

    Returns a ForwardPass with q (one entry per action), the value-stream
    scalar v, and the tape. Accepts a single input vector or a (B, d) batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.input_dim:
        raise ShapeError(f"expected input width {net.input_dim}, got shape {x.shape}")
    if tape is None:
        tape = Tape()
    xin = tape.leaf(xb)
    if tape.input is None:
        tape.input = xin
    h = _taped_trunk(tape, net, xin)
    v = _taped_head(tape, net, h, net.value, "value")
    a = _taped_head(tape, net, h, net.advantage, "advantage")
    mean_a = tape.scale(tape.sum_axis(a, 1), 1.0 / a.value.shape[1])
    q = tape.add(v, tape.sub(a, mean_a))
    if single:
        q = tape.reshape(q, (q.value.shape[1],))
        v = tape.reshape(v, ())
    return ForwardPass(q, v, tape, xin, single)


def grad_params(tape, loss):
    """Gradient of scalar `loss` w.r.t. every parameter registered on the tape.

    Parameters without a path to the loss get zero gradients.
    """
    if loss.tape is not tape:
        raise DiffError("loss is not on this tape")
    if loss.value.ndim != 0 and loss.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")
    got = backward(tape, loss, list(tape.params.values()), create_graph=False)
    out = {}
    for name, node in tape.params.items():
        g = got.get(node.idx)
        out[name] = np.zeros_like(node.value) if g is None else g.reshape(node.value.shape)
    return out


def grad_input(tape, v, input_slice, input_node=None):
    """Recorded gradient of scalar node `v` w.r.t. selected input columns.

    The result is itself on the tape, so grad_params can differentiate
    through it. Returns a (B, n_cols) node, or (n_cols,) for a single-row
    forward.
    """
    x = input_node if input_node is not None else tape.input
    if x is None:
        raise DiffError("tape has no recorded input")
    cols = np.arange(x.value.shape[1])[input_slice] if isinstance(input_slice, slice) \
        else np.asarray(input_slice, dtype=np.intp)
    if len(cols) == 0 or cols.max() >= x.value.shape[1] or cols.min() < 0:
        raise ShapeError(f"input slice {cols} out of range for width {x.value.shape[1]}")
    got = backward(tape, v, [x], create_graph=True)
    g = got.get(x.idx)
    if g is None:
        g = tape.leaf(np.zeros_like(x.value))
    out = tape.take_cols(g, cols)
    if x.value.shape[0] == 1:
        out = tape.reshape(out, (len(cols),))
    return out


def input_jacobian_rows(tape, scalar_sum, input_node, cols):
    """Per-row input gradients for a batch of row-independent scalars.

    `scalar_sum` must be the sum over rows of per-row outputs; since rows do
    not interact in the network, the backward pass of the sum yields each
    row's own gradient. Returns a (B, n_cols) node.
    """
    got = backward(tape, scalar_sum, [input_node], create_graph=True)
    g = got.get(input_node.idx)
    if g is None:
        g = tape.leaf(np.zeros_like(input_node.value))
    return tape.take_cols(g, np.asarray(cols, dtype=np.intp))


def second_input_derivative(tape, v, i, j, input_node=None):
    """Recorded second derivative d^2 v / du_i du_j of scalar node `v`.

    Needs an activation whose first derivative is itself differentiable on
    the tape (ELU); with LReLU the result is 0 almost everywhere by the
    engine's convention. The output node supports a further parameter
    backward pass (third-order chain).
    """
    x = input_node if input_node is not None else tape.input
    if x is None:
        raise DiffError("tape has no recorded input")
    gi = grad_input(tape, v, [i], input_node=x)
    gi_scalar = tape.reshape(gi, ()) if gi.value.size == 1 else tape.reshape(
        tape.sum_all(gi), ())
    got = backward(tape, gi_scalar, [x], create_graph=True)
    g2 = got.get(x.idx)
    if g2 is None:
        g2 = tape.leaf(np.zeros_like(x.value))
    out = tape.take_cols(g2, np.asarray([j], dtype=np.intp))
    return tape.reshape(out, ())
