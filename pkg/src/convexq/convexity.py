"""Soft convexity penalties and convexity audits over sampled belief points.

The value stream f should satisfy, over belief coordinates,

    f(t u + (1-t) v) <= t f(u) + (1-t) f(v)          (point form)
    f(u) + grad f(u) . (v - u) <= f(v)               (tangent form)
    x' H(f)(u) x >= 0                                 (curvature form)

Each penalty is the mean squared positive part of the corresponding
violation over a sample batch, built on a differentiation tape so the
total training loss stays differentiable w.r.t. the parameters.

For tasks where only part of the input is a belief (rock-sampling), u and v
share their non-belief coordinates within a sample, so mixing and tangent
differences only probe the belief slice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import diffcore
from .diffcore import ShapeError, Tape, UnsupportedActivationError


def belief_columns(env_kind, input_dim):
    """Input coordinates the convexity conditions range over.

    The rock-sampling input is laid out as (x, y, belief) per rock followed
    by the agent position, so beliefs sit at columns 2, 5, 8, ...
    """
    if env_kind == "tiger":
        return np.arange(1)
    if env_kind == "fvrs":
        return np.arange(2, input_dim - 2, 3)
    raise ValueError(f"unknown env kind '{env_kind}'")


class ConvexitySamples:
    """Batch of (u, v, t[, x]) belief-mix samples; iterates as namedtuple-like rows."""

    def __init__(self, u, v, t, x=None):
        self.u = np.asarray(u, dtype=np.float64)
        self.v = np.asarray(v, dtype=np.float64)
        self.t = np.asarray(t, dtype=np.float64)
        self.x = None if x is None else np.asarray(x, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ShapeError("u and v must be equal-shape (n, d) arrays")
        if self.t.shape != (self.u.shape[0],):
            raise ShapeError("t must be one scalar per sample")
        if np.any(self.t < 0.0) or np.any(self.t > 1.0):
            raise ValueError("mixing weights t must lie in [0, 1]")
        if self.x is not None and self.x.shape != self.u.shape:
            raise ShapeError("directions x must match u's shape")

    def __len__(self):
        return self.u.shape[0]

    def __getitem__(self, i):
        return (self.u[i], self.v[i], self.t[i], None if self.x is None else self.x[i])


def sample_beliefs(env_kind, n_c, rng, states=None, n_psd=None):
    """Draw convexity samples for one penalty evaluation.

    Tiger beliefs are uniform scalars. Rock-sampling beliefs are uniform per
    rock coordinate, grafted onto real observable coordinates drawn from
    `states` (rows of encoded inputs, typically the replay buffer), shared
    between u and v. With `n_psd`, each point is paired with that many
    unit directions over the belief coordinates for the curvature penalty,
    so the flat mean over the returned samples equals the double mean over
    points and directions.
    """
    if n_c < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(rng)
    if env_kind == "tiger":
        d = 1
        u = rng.uniform(size=(n_c, 1))
        v = rng.uniform(size=(n_c, 1))
    elif env_kind == "fvrs":
        if states is None or len(states) == 0:
            raise ValueError("rock-sampling belief samples need replay states "
                             "for the non-belief coordinates; buffer is empty")
        states = np.asarray(states, dtype=np.float64)
        d = states.shape[1]
        cols = belief_columns(env_kind, d)
        rows = states[rng.integers(len(states), size=n_c)]
        u = rows.copy()
        v = rows.copy()
        u[:, cols] = rng.uniform(size=(n_c, len(cols)))
        v[:, cols] = rng.uniform(size=(n_c, len(cols)))
    else:
        raise ValueError(f"unknown env kind '{env_kind}'")
    t = rng.uniform(size=n_c)
    if n_psd is None:
        return ConvexitySamples(u, v, t)
    if n_psd < 1:
        raise ValueError("need at least one direction per point")
    cols = belief_columns(env_kind, u.shape[1])
    total = n_c * n_psd
    dirs = rng.normal(size=(total, len(cols)))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    while np.any(norms == 0.0):  # probability-zero guard
        bad = norms[:, 0] == 0.0
        dirs[bad] = rng.normal(size=(int(bad.sum()), len(cols)))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    x = np.zeros((total, u.shape[1]))
    x[:, cols] = dirs / norms
    rep = np.repeat(np.arange(n_c), n_psd)
    return ConvexitySamples(u[rep], v[rep], t[rep], x)


def _taped_value(net, tape, x_node):
    """Value stream as a tape node; stubs may provide their own taped_value."""
    fn = getattr(net, "taped_value", None)
    if fn is not None:
        return fn(tape, x_node)
    return diffcore.taped_value(net, tape, x_node)


def _require_smooth(net):
    if getattr(net, "activation", None) == "lrelu":
        raise UnsupportedActivationError(
            "curvature penalties need a twice-differentiable activation; "
            "the leaky-rectifier second derivative vanishes almost everywhere")


def _mean_sq_pos(tape, viol, n):
    pos = tape.relu(viol)
    return tape.scale(tape.sum_all(tape.mul(pos, pos)), 1.0 / n)


def point_penalty(net, samples, tape=None):
    """Mean squared positive part of f(mix) - t f(u) - (1-t) f(v)."""
    if len(samples) == 0:
        raise ValueError("empty sample batch")
    t = tape if tape is not None else Tape()
    tv = samples.t.reshape(-1, 1)
    u = t.leaf(samples.u)
    v = t.leaf(samples.v)
    tl = t.leaf(tv)
    sl = t.leaf(1.0 - tv)
    mix = t.add(t.mul(tl, u), t.mul(sl, v))
    fu = _taped_value(net, t, u)
    fv = _taped_value(net, t, v)
    fm = _taped_value(net, t, mix)
    viol = t.sub(fm, t.add(t.mul(tl, fu), t.mul(sl, fv)))
    return _mean_sq_pos(t, viol, len(samples))


def grad_penalty(net, samples, tape=None):
    """Mean squared positive part of f(u) + grad f(u) . (v - u) - f(v).

    The tangent plane of a convex function never rises above the function,
    so any positive value is a violation.
    """
    if len(samples) == 0:
        raise ValueError("empty sample batch")
    t = tape if tape is not None else Tape()
    u = t.leaf(samples.u)
    v = t.leaf(samples.v)
    fu = _taped_value(net, t, u)
    fv = _taped_value(net, t, v)
    d = samples.u.shape[1]
    g = diffcore.input_jacobian_rows(t, t.sum_all(fu), u, np.arange(d))
    dot = t.sum_axis(t.mul(g, t.sub(v, u)), 1)
    viol = t.sub(t.add(fu, dot), fv)
    return _mean_sq_pos(t, viol, len(samples))


def hess_penalty_1d(net, samples, tape=None):
    """Mean squared negative part of the second derivative at each u."""
    if len(samples) == 0:
        raise ValueError("empty sample batch")
    if samples.u.shape[1] != 1:
        raise ShapeError("the 1-D curvature penalty needs scalar beliefs")
    _require_smooth(net)
    t = tape if tape is not None else Tape()
    u = t.leaf(samples.u)
    fu = _taped_value(net, t, u)
    g = diffcore.input_jacobian_rows(t, t.sum_all(fu), u, [0])
    h = diffcore.input_jacobian_rows(t, t.sum_all(g), u, [0])
    return _mean_sq_pos(t, t.neg(h), len(samples))


def hess_penalty_nd(net, samples, tape=None):
    """Mean squared negative part of x' H(f)(u) x over points and directions."""
    if len(samples) == 0:
        raise ValueError("empty sample batch")
    if samples.x is None:
        raise ValueError("curvature samples need directions; "
                         "build them with sample_beliefs(..., n_psd=...)")
    _require_smooth(net)
    t = tape if tape is not None else Tape()
    u = t.leaf(samples.u)
    x = t.leaf(samples.x)
    fu = _taped_value(net, t, u)
    d = samples.u.shape[1]
    g = diffcore.input_jacobian_rows(t, t.sum_all(fu), u, np.arange(d))
    s = t.sum_all(t.mul(g, x))
    hx = diffcore.input_jacobian_rows(t, s, u, np.arange(d))
    qf = t.sum_axis(t.mul(hx, x), 1)
    return _mean_sq_pos(t, t.neg(qf), len(samples))


def total_loss(td, convex, c):
    """Combined objective td + c * convex; accepts tape nodes or plain floats."""
    if c < 0:
        raise ValueError("penalty weight c must be nonnegative")
    if isinstance(td, diffcore.Node):
        tape = td.tape
        if not isinstance(convex, diffcore.Node) or convex.tape is not tape:
            raise diffcore.DiffError("td and convexity losses must share a tape")
        return tape.add(td, tape.scale(convex, c))
    return float(td) + c * float(convex)


# -- audits -------------------------------------------------------------------


def point_violations(net, samples):
    """Raw point-form violations f(mix) - t f(u) - (1-t) f(v), one per sample."""
    t = Tape()
    tv = samples.t.reshape(-1, 1)
    u = t.leaf(samples.u)
    v = t.leaf(samples.v)
    mix = t.leaf(tv * samples.u + (1.0 - tv) * samples.v)
    fu = _taped_value(net, t, u).value[:, 0]
    fv = _taped_value(net, t, v).value[:, 0]
    fm = _taped_value(net, t, mix).value[:, 0]
    return fm - samples.t * fu - (1.0 - samples.t) * fv


@dataclass
class AuditReport:
    """Point-convexity audit: worst violation plus value curves for plotting."""

    env_kind: str
    n_triples: int
    max_violation: float
    worst: dict
    curves: list = field(default_factory=list)

    def to_json(self):
        return {
            "format": "convexity-audit",
            "env": self.env_kind,
            "n_triples": self.n_triples,
            "max_violation": self.max_violation,
            "worst": self.worst,
            "curves": self.curves,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def _values_on(net, xb):
    t = Tape()
    return _taped_value(net, t, t.leaf(xb)).value[:, 0]


def audit_convexity(net, env_kind, grid_resolution=21, context=None, seed=0):
    """Worst point-form violation over a deterministic triple set, plus curves.

    Tiger scans the full (u, v, t) grid. The rock-sampling belief cube is too
    large for a grid, so triples come from a fixed-seed draw around a context
    input (defaults to the episode-start encoding), and the exported curves
    vary one rock belief at a time.
    """
    r = int(grid_resolution)
    if r < 2:
        raise ValueError("grid resolution must be at least 2")
    grid = np.linspace(0.0, 1.0, r)
    if env_kind == "tiger":
        uu, vv, tt = np.meshgrid(grid, grid, grid, indexing="ij")
        samples = ConvexitySamples(
            uu.reshape(-1, 1), vv.reshape(-1, 1), tt.reshape(-1))
        viol = point_violations(net, samples)
        k = int(np.argmax(viol))
        curves = [{
            "label": "V(b)",
            "beliefs": grid.tolist(),
            "values": _values_on(net, grid[:, None]).tolist(),
        }]
    elif env_kind == "fvrs":
        if context is None:
            from .envs import fvrs as _fvrs
            context = _fvrs.default_audit_context()
        context = np.asarray(context, dtype=np.float64)
        cols = belief_columns(env_kind, len(context))
        rng = np.random.default_rng(seed)
        n = r ** 3
        base = np.tile(context, (n, 1))
        u = base.copy()
        v = base.copy()
        u[:, cols] = rng.uniform(size=(n, len(cols)))
        v[:, cols] = rng.uniform(size=(n, len(cols)))
        samples = ConvexitySamples(u, v, rng.uniform(size=n))
        viol = point_violations(net, samples)
        k = int(np.argmax(viol))
        curves = []
        for j, col in enumerate(cols):
            xb = np.tile(context, (r, 1))
            xb[:, col] = grid
            curves.append({
                "label": f"V vs rock {j} belief",
                "beliefs": grid.tolist(),
                "values": _values_on(net, xb).tolist(),
            })
    else:
        raise ValueError(f"unknown env kind '{env_kind}'")
    return AuditReport(
        env_kind=env_kind,
        n_triples=len(samples),
        max_violation=float(np.max(viol)),
        worst={
            "u": samples.u[k].tolist(),
            "v": samples.v[k].tolist(),
            "t": float(samples.t[k]),
        },
        curves=curves,
    )
