"""Penalty and audit checks against stubs with known convexity structure."""

import numpy as np
import pytest

from convexq import diffcore
from convexq.convexity import (
    ConvexitySamples,
    audit_convexity,
    belief_columns,
    grad_penalty,
    hess_penalty_1d,
    hess_penalty_nd,
    point_penalty,
    point_violations,
    sample_beliefs,
    total_loss,
)
from convexq.diffcore import ShapeError, UnsupportedActivationError
from convexq.networks import fvrs_net, make_net

from util import central_diff, rel_err


class AffineValue:
    """f(x) = w . x + b."""

    activation = "elu"

    def __init__(self, w, b=0.0):
        self.w = np.asarray(w, dtype=np.float64).reshape(1, -1)
        self.b = float(b)

    def taped_value(self, tape, x):
        out = tape.matmul(x, tape.transpose(tape.leaf(self.w)))
        return tape.add(out, tape.leaf(np.array([[self.b]])))


class NegSquareValue:
    """f(x) = -|x|^2 (concave)."""

    activation = "elu"

    def taped_value(self, tape, x):
        return tape.neg(tape.sum_axis(tape.mul(x, x), 1))


class SquareValue:
    """f(x) = |x|^2 (convex)."""

    activation = "elu"

    def taped_value(self, tape, x):
        return tape.sum_axis(tape.mul(x, x), 1)


def one_sample(u, v, t, x=None):
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))[None, :]
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))[None, :]
    xs = None if x is None else np.atleast_1d(np.asarray(x, dtype=np.float64))[None, :]
    return ConvexitySamples(u, v, np.array([t]), xs)


def small_elu_net(seed=0, d=3):
    return make_net(d, [8, 8], [4, 1], [4, 2], "elu", 1.0, seed)


# -- belief layout -------------------------------------------------------------


def test_belief_columns():
    assert belief_columns("tiger", 1).tolist() == [0]
    assert belief_columns("fvrs", 14).tolist() == [2, 5, 8, 11]
    with pytest.raises(ValueError):
        belief_columns("chess", 3)


# -- sampling -------------------------------------------------------------------


def test_tiger_samples_in_unit_interval_and_reproducible():
    a = sample_beliefs("tiger", 50, 7)
    b = sample_beliefs("tiger", 50, 7)
    assert len(a) == 50
    assert a.u.shape == (50, 1)
    for arr in (a.u, a.v, a.t):
        assert np.all(arr >= 0.0) and np.all(arr <= 1.0)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.t, b.t)
    c = sample_beliefs("tiger", 50, 8)
    assert not np.array_equal(a.u, c.u)


def test_fvrs_samples_need_states():
    with pytest.raises(ValueError):
        sample_beliefs("fvrs", 4, 0)
    with pytest.raises(ValueError):
        sample_beliefs("fvrs", 4, 0, states=np.zeros((0, 14)))


def test_fvrs_samples_share_nonbelief_coordinates():
    rng = np.random.default_rng(0)
    states = rng.uniform(size=(10, 14))
    s = sample_beliefs("fvrs", 32, 3, states=states)
    cols = belief_columns("fvrs", 14)
    other = np.setdiff1d(np.arange(14), cols)
    assert np.array_equal(s.u[:, other], s.v[:, other])
    assert np.all((s.u[:, cols] >= 0.0) & (s.u[:, cols] <= 1.0))
    # non-belief coordinates come from real states
    pool = states[:, other]
    for row in s.u[:, other]:
        assert any(np.array_equal(row, p) for p in pool)


def test_direction_samples_are_unit_norm_on_belief_slice():
    rng = np.random.default_rng(1)
    states = rng.uniform(size=(6, 14))
    s = sample_beliefs("fvrs", 5, 2, states=states, n_psd=4)
    assert len(s) == 20
    cols = belief_columns("fvrs", 14)
    other = np.setdiff1d(np.arange(14), cols)
    assert np.allclose(np.linalg.norm(s.x[:, cols], axis=1), 1.0)
    assert np.all(s.x[:, other] == 0.0)
    # points repeat per direction group
    assert np.array_equal(s.u[0], s.u[3])
    assert not np.array_equal(s.x[0], s.x[1])


def test_sample_validation():
    with pytest.raises(ValueError):
        sample_beliefs("tiger", 0, 0)
    with pytest.raises(ValueError):
        ConvexitySamples(np.zeros((2, 1)), np.zeros((2, 1)), np.array([0.5, 1.5]))
    with pytest.raises(ShapeError):
        ConvexitySamples(np.zeros((2, 1)), np.zeros((3, 1)), np.array([0.5, 0.5]))


# -- point penalty ----------------------------------------------------------------


def test_point_penalty_zero_for_affine():
    f = AffineValue([2.0, -1.0], 0.7)
    s = sample_beliefs("tiger", 40, 0)
    s2 = ConvexitySamples(np.random.default_rng(0).uniform(size=(40, 2)),
                          np.random.default_rng(1).uniform(size=(40, 2)),
                          np.random.default_rng(2).uniform(size=40))
    # affine mixes commute up to rounding; squared dust stays below 1e-28
    assert float(point_penalty(AffineValue([2.0]), s).value) < 1e-28
    assert float(point_penalty(f, s2).value) < 1e-28


def test_point_penalty_hand_value():
    # f(b) = -b^2, u=0, v=1, t=0.5: f(0.5) - 0.5 f(0) - 0.5 f(1) = 0.25
    pen = point_penalty(NegSquareValue(), one_sample([0.0], [1.0], 0.5))
    assert abs(float(pen.value) - 0.0625) < 1e-15


def test_point_penalty_endpoints_contribute_nothing():
    for t in (0.0, 1.0):
        pen = point_penalty(NegSquareValue(), one_sample([0.2], [0.9], t))
        assert float(pen.value) == 0.0


def test_point_penalty_nonnegative_on_real_net():
    net = small_elu_net(3, d=1)
    s = sample_beliefs("tiger", 64, 5)
    assert float(point_penalty(net, s).value) >= 0.0


# -- gradient penalty ----------------------------------------------------------------


def test_grad_penalty_zero_for_affine():
    s2 = ConvexitySamples(np.random.default_rng(3).uniform(size=(30, 2)),
                          np.random.default_rng(4).uniform(size=(30, 2)),
                          np.random.default_rng(5).uniform(size=30))
    assert float(grad_penalty(AffineValue([1.5, 2.5], -1.0), s2).value) < 1e-28


def test_grad_penalty_hand_value():
    # f(b) = -b^2, u=0, v=1: f(0) + f'(0)(1-0) - f(1) = 1 -> squared 1
    pen = grad_penalty(NegSquareValue(), one_sample([0.0], [1.0], 0.3))
    assert abs(float(pen.value) - 1.0) < 1e-12


def test_grad_penalty_zero_when_u_equals_v():
    pen = grad_penalty(NegSquareValue(), one_sample([0.4], [0.4], 0.5))
    assert float(pen.value) == 0.0


def test_grad_penalty_zero_on_convex_stub():
    s2 = ConvexitySamples(np.random.default_rng(6).uniform(size=(30, 3)),
                          np.random.default_rng(7).uniform(size=(30, 3)),
                          np.random.default_rng(8).uniform(size=30))
    assert float(grad_penalty(SquareValue(), s2).value) < 1e-25


# -- curvature penalties ----------------------------------------------------------------


def test_hess_1d_hand_values():
    assert float(hess_penalty_1d(SquareValue(), one_sample([0.3], [0.1], 0.5)).value) == 0.0
    assert float(hess_penalty_1d(AffineValue([3.0]), one_sample([0.3], [0.1], 0.5)).value) == 0.0
    pen = hess_penalty_1d(NegSquareValue(), one_sample([0.3], [0.1], 0.5))
    assert abs(float(pen.value) - 4.0) < 1e-12


def test_hess_1d_requires_scalar_beliefs():
    s2 = ConvexitySamples(np.zeros((2, 3)), np.zeros((2, 3)), np.array([0.5, 0.5]))
    with pytest.raises(ShapeError):
        hess_penalty_1d(SquareValue(), s2)


def test_hess_nd_hand_values():
    x = np.array([0.6, 0.8])  # unit norm
    s = one_sample([0.1, 0.2], [0.5, 0.5], 0.5, x=x)
    assert float(hess_penalty_nd(SquareValue(), s).value) == 0.0
    pen = hess_penalty_nd(NegSquareValue(), s)
    assert abs(float(pen.value) - 4.0) < 1e-12


def test_hess_nd_direction_scaling_is_quartic():
    base = one_sample([0.1, 0.2], [0.5, 0.5], 0.5, x=[0.6, 0.8])
    lam = 1.7
    scaled = one_sample([0.1, 0.2], [0.5, 0.5], 0.5, x=[0.6 * lam, 0.8 * lam])
    p0 = float(hess_penalty_nd(NegSquareValue(), base).value)
    p1 = float(hess_penalty_nd(NegSquareValue(), scaled).value)
    assert rel_err(p1, lam ** 4 * p0) < 1e-10


def test_hess_penalties_reject_nonsmooth_activation():
    net = fvrs_net(0)
    states = np.random.default_rng(0).uniform(size=(4, 14))
    s = sample_beliefs("fvrs", 4, 0, states=states, n_psd=2)
    with pytest.raises(UnsupportedActivationError):
        hess_penalty_nd(net, s)
    s1 = sample_beliefs("tiger", 4, 0)
    with pytest.raises(UnsupportedActivationError):
        hess_penalty_1d(fvrs_net(1), s1)


def test_hess_nd_requires_directions():
    s = sample_beliefs("tiger", 4, 0)
    with pytest.raises(ValueError):
        hess_penalty_nd(SquareValue(), s)


# -- combination --------------------------------------------------------------------


def test_total_loss_arithmetic():
    assert total_loss(0.5, 0.25, 2.0) == 1.0
    assert total_loss(0.7, 123.0, 0.0) == 0.7
    with pytest.raises(ValueError):
        total_loss(0.5, 0.5, -1.0)


def test_total_loss_on_tape():
    net = small_elu_net(1, d=1)
    s = sample_beliefs("tiger", 8, 2)
    pen = point_penalty(net, s)
    tape = pen.tape
    td = tape.leaf(np.asarray(0.5))
    tot = total_loss(td, pen, 2.0)
    assert abs(float(tot.value) - (0.5 + 2.0 * float(pen.value))) < 1e-15
    other = point_penalty(net, s)  # fresh tape
    with pytest.raises(diffcore.DiffError):
        total_loss(td, other, 1.0)


# -- penalty parameter gradients vs finite differences ---------------------------------


def _fd_check(net, make_penalty, h, tol, n_entries=3, seed=0):
    pen = make_penalty(net)
    assert float(pen.value) > 0.0  # meaningful check needs active violations
    grads = diffcore.grad_params(pen.tape, pen)
    # the advantage head never feeds the value stream, so only trunk and
    # value parameters appear on a penalty tape
    assert not any(name.startswith("advantage") for name in grads)
    params = dict(net.named_params())
    rng = np.random.default_rng(seed)
    for name in sorted(grads):
        p = params[name]
        for k in rng.choice(p.size, size=min(n_entries, p.size), replace=False):
            def pen_at(val, p=p, k=k):
                old = p.flat[k]
                p.flat[k] = val
                out = float(make_penalty(net).value)
                p.flat[k] = old
                return out
            fd = central_diff(pen_at, p.flat[k], h)
            assert rel_err(grads[name].flat[k], fd) < tol, name


def _concave_net(seed, d):
    # scale the value head up so convexity violations (and their parameter
    # gradients) sit well above finite-difference noise
    net = small_elu_net(seed, d=d)
    net.value[-1][0][...] *= 60.0
    return net


def test_point_penalty_param_grads_match_fd():
    net = _concave_net(27, d=1)
    s = sample_beliefs("tiger", 16, 3)
    _fd_check(net, lambda n: point_penalty(n, s), h=1e-5, tol=1e-4)


def test_grad_penalty_param_grads_match_fd():
    net = _concave_net(27, d=1)
    s = sample_beliefs("tiger", 16, 3)
    _fd_check(net, lambda n: grad_penalty(n, s), h=1e-5, tol=1e-4)


def test_hess_1d_param_grads_match_fd():
    net = _concave_net(27, d=1)
    s = sample_beliefs("tiger", 12, 4)
    _fd_check(net, lambda n: hess_penalty_1d(n, s), h=1e-5, tol=1e-4)


def test_hess_nd_param_grads_match_fd():
    net = _concave_net(11, d=3)
    rng = np.random.default_rng(9)
    u = rng.uniform(size=(10, 3))
    x = rng.normal(size=(10, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    s = ConvexitySamples(u, rng.uniform(size=(10, 3)), rng.uniform(size=10), x)
    _fd_check(net, lambda n: hess_penalty_nd(n, s), h=1e-5, tol=1e-4)


def test_penalties_deterministic():
    net = small_elu_net(2, d=1)
    s = sample_beliefs("tiger", 32, 9)
    assert float(point_penalty(net, s).value) == float(point_penalty(net, s).value)
    assert float(grad_penalty(net, s).value) == float(grad_penalty(net, s).value)


# -- audit ------------------------------------------------------------------------------


def test_audit_neg_square_worst_violation():
    rep = audit_convexity(NegSquareValue(), "tiger", grid_resolution=21)
    assert abs(rep.max_violation - 0.25) < 1e-12
    w = rep.worst
    assert {w["u"][0], w["v"][0]} == {0.0, 1.0}
    assert abs(w["t"] - 0.5) < 1e-12
    assert rep.n_triples == 21 ** 3


def test_audit_convex_stub_has_no_violations():
    rep = audit_convexity(SquareValue(), "tiger", grid_resolution=13)
    assert rep.max_violation <= 1e-12


def test_point_violations_sign_convention():
    s = one_sample([0.0], [1.0], 0.5)
    assert abs(point_violations(NegSquareValue(), s)[0] - 0.25) < 1e-15
    assert point_violations(SquareValue(), s)[0] <= 0.0


def test_audit_exports_value_curve():
    rep = audit_convexity(NegSquareValue(), "tiger", grid_resolution=11)
    assert len(rep.curves) == 1
    curve = rep.curves[0]
    assert curve["beliefs"][0] == 0.0 and curve["beliefs"][-1] == 1.0
    assert np.allclose(curve["values"], [-(b ** 2) for b in curve["beliefs"]])


def test_audit_fvrs_with_explicit_context():
    net = fvrs_net(5)
    context = np.random.default_rng(0).uniform(size=14)
    rep = audit_convexity(net, "fvrs", grid_resolution=7, context=context)
    assert rep.env_kind == "fvrs"
    assert np.isfinite(rep.max_violation)
    assert len(rep.curves) == 4
    assert all(len(c["values"]) == 7 for c in rep.curves)
    # deterministic triples: same call, same result
    rep2 = audit_convexity(net, "fvrs", grid_resolution=7, context=context)
    assert rep.max_violation == rep2.max_violation


def test_audit_report_json_roundtrip(tmp_path):
    rep = audit_convexity(NegSquareValue(), "tiger", grid_resolution=5)
    path = tmp_path / "audit.json"
    rep.save(path)
    import json
    doc = json.loads(path.read_text())
    assert doc["format"] == "convexity-audit"
    assert doc["env"] == "tiger"
    assert abs(doc["max_violation"] - rep.max_violation) < 1e-15
    assert doc["curves"][0]["label"] == "V(b)"
