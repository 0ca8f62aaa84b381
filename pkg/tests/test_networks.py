"""Network container, projection, and checkpoint behaviour."""

import numpy as np
import pytest

from convexq.diffcore import ShapeError
from convexq.networks import (
    DuelingNet,
    fvrs_net,
    greedy_action,
    load_checkpoint,
    make_net,
    nonneg_param_names,
    project_nonnegative,
    q_values,
    save_checkpoint,
    tiger_net,
    value_stream,
)


def test_tiger_parameter_count():
    assert tiger_net(0).param_count() == 174


def test_fvrs_parameter_count():
    assert fvrs_net(0).param_count() == 32106


def test_architecture_shapes():
    t = tiger_net(0)
    assert t.input_dim == 1 and t.n_actions == 3
    assert [w.shape for w, _ in t.trunk] == [(10, 1), (10, 10)]
    assert [w.shape for w, _ in t.value] == [(1, 10)]
    assert [w.shape for w, _ in t.advantage] == [(3, 10)]
    f = fvrs_net(0)
    assert f.input_dim == 14 and f.n_actions == 5
    assert [w.shape for w, _ in f.trunk] == [(100, 14), (100, 100), (100, 100)]
    assert [w.shape for w, _ in f.value] == [(50, 100), (1, 50)]
    assert [w.shape for w, _ in f.advantage] == [(50, 100), (5, 50)]


def test_value_head_must_end_in_one_unit():
    with pytest.raises(ShapeError):
        make_net(2, [4], [3], [2], "elu", 1.0, 0)


def test_init_respects_fan_in_bounds():
    net = fvrs_net(123)
    for group in (net.trunk, net.value, net.advantage):
        for w, b in group:
            bound = 1.0 / np.sqrt(w.shape[1])
            assert np.all(np.abs(w) <= bound)
            assert np.all(np.abs(b) <= bound)
            assert w.std() > 0  # actually random, not constant


def test_init_is_seed_deterministic():
    a, b = tiger_net(42), tiger_net(42)
    for (_, pa), (_, pb) in zip(a.named_params(), b.named_params()):
        assert np.array_equal(pa, pb)
    c = tiger_net(43)
    assert any(not np.array_equal(pa, pc)
               for (_, pa), (_, pc) in zip(a.named_params(), c.named_params()))


# -- dueling aggregation -----------------------------------------------------


def test_q_is_value_plus_centered_advantage():
    # V=5, A=(1,1,1) -> Q=(5,5,5); V=0, A=(1,2,3) -> Q=(-1,0,1)
    net = tiger_net(0)
    for _, p in net.named_params():
        p[...] = 0.0
    net.value[0][1][...] = 5.0
    net.advantage[0][1][...] = [1.0, 1.0, 1.0]
    assert np.allclose(q_values(net, [0.3]), [5.0, 5.0, 5.0])
    net.value[0][1][...] = 0.0
    net.advantage[0][1][...] = [1.0, 2.0, 3.0]
    assert np.allclose(q_values(net, [0.3]), [-1.0, 0.0, 1.0])


def test_mean_q_equals_value_stream():
    net = fvrs_net(3)
    x = np.random.default_rng(0).uniform(size=(8, net.input_dim))
    q = q_values(net, x)
    assert np.max(np.abs(q.mean(axis=1) - value_stream(net, x))) < 1e-12


def test_argmax_invariant_to_constant_advantage_shift():
    net = tiger_net(5)
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(16, 1))
    base = np.argmax(q_values(net, x), axis=1)
    w, b = net.advantage[-1]
    for const in rng.normal(scale=5.0, size=4):
        b += const
        assert np.array_equal(np.argmax(q_values(net, x), axis=1), base)
        b -= const


def test_greedy_tie_breaks_to_lowest_index():
    net = tiger_net(0)
    for _, p in net.named_params():
        p[...] = 0.0
    assert greedy_action(net, [0.7]) == 0
    # Q=(7,7,3): actions 0 and 1 tie
    net.advantage[0][1][...] = [7.0, 7.0, 3.0]
    assert greedy_action(net, [0.7]) == 0


def test_greedy_batched():
    net = tiger_net(9)
    x = np.array([[0.1], [0.9]])
    acts = greedy_action(net, x)
    assert acts.shape == (2,)
    assert acts[0] == greedy_action(net, x[0])


# -- projection ---------------------------------------------------------------


def test_projection_scope_and_idempotence():
    net = fvrs_net(7)
    first_layer = net.trunk[0][0].copy()
    adv = [w.copy() for w, _ in net.advantage]
    all_biases = {name: p.copy() for name, p in net.named_params() if name.endswith(".b")}
    n = project_nonnegative(net)
    assert n > 0
    assert np.array_equal(net.trunk[0][0], first_layer)          # first layer untouched
    for (w, _), w0 in zip(net.advantage, adv):                   # advantage untouched
        assert np.array_equal(w, w0)
    for name, p in net.named_params():                           # biases untouched
        if name.endswith(".b"):
            assert np.array_equal(p, all_biases[name])
    for name in nonneg_param_names(net):
        p = dict(net.named_params())[name]
        assert np.all(p >= 0.0)
    assert project_nonnegative(net) == 0                         # idempotent


def test_projection_clips_exact_example():
    net = tiger_net(0)
    net.trunk[1][0][2, 3] = -0.5
    net.trunk[1][0][0, 0] = 0.3
    net.trunk[0][0][0, 0] = -0.5
    project_nonnegative(net)
    assert net.trunk[1][0][2, 3] == 0.0
    assert net.trunk[1][0][0, 0] == 0.3
    assert net.trunk[0][0][0, 0] == -0.5


def test_advantage_weights_never_change_value_stream():
    net = tiger_net(11)
    x = np.random.default_rng(2).uniform(size=(5, 1))
    before = value_stream(net, x)
    net.advantage[0][0][...] = np.random.default_rng(3).normal(size=(3, 10))
    assert np.array_equal(value_stream(net, x), before)


# -- checkpoints ---------------------------------------------------------------


def test_checkpoint_roundtrip_exact(tmp_path):
    net = fvrs_net(31)
    for _, p in net.named_params():
        p *= np.pi  # irrational scaling: exercise full float64 precision
    path = tmp_path / "net.json"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    assert loaded.activation == net.activation
    assert loaded.act_param == net.act_param
    assert loaded.kind == net.kind
    for (na, pa), (nb, pb) in zip(net.named_params(), loaded.named_params()):
        assert na == nb
        assert np.array_equal(pa, pb)
    x = np.random.default_rng(0).uniform(size=(4, net.input_dim))
    assert np.array_equal(q_values(net, x), q_values(loaded, x))


def test_checkpoint_rejects_wrong_format(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    import json
    net = tiger_net(1)
    path = tmp_path / "net.json"
    save_checkpoint(net, path)
    doc = json.loads(path.read_text())
    doc["shapes"]["trunk.0.w"] = [10, 2]
    path.write_text(json.dumps(doc))
    with pytest.raises(ShapeError):
        load_checkpoint(path)


def test_load_from_syncs_target_net():
    src, dst = tiger_net(1), tiger_net(2)
    dst.load_from(src)
    for (_, pa), (_, pb) in zip(src.named_params(), dst.named_params()):
        assert np.array_equal(pa, pb)
    src.trunk[0][0][0, 0] += 1.0  # copies, not views
    assert dst.trunk[0][0][0, 0] != src.trunk[0][0][0, 0]


def test_load_from_rejects_mismatched_shapes():
    with pytest.raises(ShapeError):
        tiger_net(0).load_from(fvrs_net(0))
