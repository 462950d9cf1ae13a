import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import FlatAdam, fd_gradient, forward_loops, max_rel_error, random_policy_instance
from saferoute.geo import CompassAction
from saferoute.policy import (
    PARAM_NAMES,
    AdamState,
    PolicyNetwork,
    adam_step,
    forward,
    grad_log_policy,
    load_weights,
    mask_and_renormalize,
    masked_policy,
    policy_gradient,
    sample_action,
    save_weights,
)


def zero_net(n_in=4):
    return PolicyNetwork((n_in, 5, 3, 8))


def test_initialize_shapes_and_ranges():
    net = PolicyNetwork.initialize(6, 10, 7, seed=1)
    assert net.W1.shape == (10, 6) and net.W2.shape == (7, 10) and net.W3.shape == (8, 7)
    assert not net.b1.any() and not net.b2.any() and not net.b3.any()
    assert np.abs(net.W1).max() <= math.sqrt(6 / 16)
    assert np.array_equal(PolicyNetwork.initialize(6, 10, 7, seed=1).flat(), net.flat())
    assert net.W1.dtype == np.float64


def test_forward_uniform_and_closed_form():
    net = zero_net()
    np.testing.assert_allclose(forward(net, np.ones(4)), np.full(8, 0.125), rtol=0, atol=1e-15)
    net.b3[0] = 10.0
    p = forward(net, np.ones(4))
    assert p[0] == pytest.approx(math.exp(10) / (math.exp(10) + 7), rel=1e-14)
    with pytest.raises(ValueError):
        forward(net, np.ones(5))


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        sizes, params, state, _, _ = random_policy_instance(rng)
        net = PolicyNetwork((sizes[0], sizes[1], sizes[2], 8), params)
        np.testing.assert_allclose(forward(net, state), forward_loops(params, state), rtol=1e-12, atol=1e-15)


def test_forward_batch_matches_single():
    rng = np.random.default_rng(1)
    net = PolicyNetwork.initialize(6, 8, 5, seed=2)
    states = rng.normal(size=(7, 6))
    batch = forward(net, states)
    for i in range(7):
        np.testing.assert_allclose(batch[i], forward(net, states[i]), rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)), st.integers(0, 1000))
def test_forward_is_distribution(state, seed):
    net = PolicyNetwork.initialize(6, 8, 5, seed=seed)
    p = forward(net, state)
    assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-9


def test_softmax_shift_invariance():
    net = PolicyNetwork.initialize(4, 6, 5, seed=3)
    s = np.arange(4.0)
    p = forward(net, s)
    net.b3 += 123.4
    np.testing.assert_allclose(forward(net, s), p, rtol=1e-12)


def test_mask_and_renormalize_cases():
    u = np.full(8, 0.125)
    np.testing.assert_array_equal(mask_and_renormalize(u, np.ones(8, bool)), u)
    m = np.zeros(8, bool)
    m[[1, 4, 6]] = True
    np.testing.assert_allclose(mask_and_renormalize(u, m), np.where(m, 1 / 3, 0.0), rtol=1e-15)
    p = np.array([0.4, 0.4, 0.1, 0.1, 0, 0, 0, 0])
    m2 = np.array([1, 1, 0, 0, 0, 0, 0, 0], bool)
    np.testing.assert_allclose(mask_and_renormalize(p, m2), [0.5, 0.5, 0, 0, 0, 0, 0, 0], rtol=1e-15)
    with pytest.raises(ValueError):
        mask_and_renormalize(u, np.zeros(8, bool))


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, 8, elements=st.floats(1e-6, 1.0)),
    arrays(np.float64, 8, elements=st.floats(1e-6, 1.0)),
    arrays(bool, 8),
)
def test_masking_ignores_masked_entries(a, b, mask):
    if not mask.any():
        mask[0] = True
    b = np.where(mask, a, b)
    np.testing.assert_array_equal(mask_and_renormalize(a, mask), mask_and_renormalize(b, mask))


def test_masked_policy_agrees_with_two_step_version():
    rng = np.random.default_rng(4)
    net = PolicyNetwork.initialize(6, 8, 5, seed=4)
    for _ in range(50):
        s = rng.normal(size=6)
        m = rng.random(8) < 0.5
        m[rng.integers(8)] = True
        np.testing.assert_allclose(masked_policy(net, s, m), mask_and_renormalize(forward(net, s), m), rtol=1e-12, atol=1e-16)


def test_sample_action_cases():
    rng = np.random.default_rng(0)
    one_hot = np.zeros(8)
    one_hot[5] = 1.0
    assert {sample_action(one_hot, rng) for _ in range(200)} == {CompassAction.SW}
    two = np.zeros(8)
    two[[2, 7]] = 0.5
    draws = [int(sample_action(two, rng)) for _ in range(10_000)]
    assert set(draws) == {2, 7}
    assert 0.47 <= draws.count(2) / 10_000 <= 0.53
    r1, r2 = np.random.default_rng(42), np.random.default_rng(42)
    assert [sample_action(np.full(8, 0.125), r1) for _ in range(50)] == [sample_action(np.full(8, 0.125), r2) for _ in range(50)]


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(20):
        sizes, params, state, action, mask = random_policy_instance(rng)
        net = PolicyNetwork((*sizes, 8), params)
        g = grad_log_policy(net, state, action, mask)
        fd = fd_gradient({k: v.copy() for k, v in params.items()}, state, action, mask)
        for name in PARAM_NAMES:
            assert max_rel_error(g[name], fd[name]) <= 1e-4, name


def test_gradient_closed_forms():
    net = zero_net()
    g = grad_log_policy(net, np.ones(4), 3, np.ones(8, bool))
    expected = -np.full(8, 0.125)
    expected[3] += 1.0
    np.testing.assert_allclose(g["b3"], expected, rtol=0, atol=1e-15)
    net = PolicyNetwork.initialize(4, 6, 5, seed=1)
    only = np.zeros(8, bool)
    only[2] = True
    g = grad_log_policy(net, np.ones(4), 2, only)
    assert all(not g[k].any() for k in PARAM_NAMES)
    with pytest.raises(ValueError):
        grad_log_policy(net, np.ones(4), 3, only)


def test_batched_gradient_is_weighted_sum():
    rng = np.random.default_rng(6)
    net = PolicyNetwork.initialize(5, 7, 4, seed=6)
    states = rng.normal(size=(4, 5))
    masks = rng.random((4, 8)) < 0.7
    masks[:, 0] = True
    actions = [0, 0, 0, 0]
    weights = rng.normal(size=4)
    batch = policy_gradient(net, states, actions, masks, weights)
    for k in PARAM_NAMES:
        ref = sum(w * grad_log_policy(net, s, a, m)[k] for s, a, m, w in zip(states, actions, masks, weights))
        np.testing.assert_allclose(batch[k], ref, rtol=1e-12, atol=1e-14)


def test_adam_zero_gradient_and_first_step():
    net = PolicyNetwork.initialize(3, 4, 2, seed=0)
    adam = AdamState.for_network(net)
    before = net.flat()
    adam_step(net, adam, {k: np.zeros_like(v) for k, v in net.params().items()})
    assert np.array_equal(net.flat(), before) and adam.t == 1
    # one scalar parameter moving under g = 1
    net = PolicyNetwork((1, 1, 1, 1))
    adam = AdamState.for_network(net)
    grads = {k: np.zeros_like(v) for k, v in net.params().items()}
    grads["b3"] = np.array([1.0])
    adam_step(net, adam, grads)
    assert net.b3[0] == pytest.approx(1e-3, rel=1e-7)


def test_adam_matches_flat_oracle():
    rng = np.random.default_rng(7)
    net = PolicyNetwork.initialize(3, 4, 5, seed=7)
    adam = AdamState.for_network(net, lr=0.01)
    ref = FlatAdam(net.flat().size, lr=0.01)
    theta = net.flat().tolist()
    for _ in range(5):
        grads = {k: rng.normal(size=v.shape) for k, v in net.params().items()}
        scale = float(rng.uniform(-2, 2))
        adam_step(net, adam, grads, scale)
        flat_g = np.concatenate([grads[k].ravel() for k in PARAM_NAMES]) * scale
        theta = ref.step(theta, flat_g.tolist())
    np.testing.assert_allclose(net.flat(), theta, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(np.concatenate([adam.m[k].ravel() for k in PARAM_NAMES]), ref.m, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(np.concatenate([adam.v[k].ravel() for k in PARAM_NAMES]), ref.v, rtol=1e-12, atol=1e-15)
    assert adam.t == ref.t == 5


def test_adam_rejects_non_finite():
    net = PolicyNetwork.initialize(3, 4, 2, seed=0)
    adam = AdamState.for_network(net)
    grads = {k: np.zeros_like(v) for k, v in net.params().items()}
    grads["W2"][0, 0] = np.nan
    before = net.flat()
    with pytest.raises(FloatingPointError):
        adam_step(net, adam, grads)
    assert np.array_equal(net.flat(), before) and adam.t == 0


def test_adam_state_roundtrip(tmp_path):
    net = PolicyNetwork.initialize(3, 4, 2, seed=0)
    adam = AdamState.for_network(net)
    rng = np.random.default_rng(0)
    for _ in range(3):
        adam_step(net, adam, {k: rng.normal(size=v.shape) for k, v in net.params().items()})
    adam.save(tmp_path / "a.txt")
    back = AdamState.load(tmp_path / "a.txt", net)
    assert back.t == 3
    for k in PARAM_NAMES:
        assert np.array_equal(back.m[k], adam.m[k]) and np.array_equal(back.v[k], adam.v[k])


def test_weights_roundtrip_bit_exact(tmp_path):
    net = PolicyNetwork.initialize(6, 9, 4, seed=11)
    net.b2 += np.random.default_rng(0).normal(size=4)
    save_weights(net, tmp_path / "w.txt")
    lines = (tmp_path / "w.txt").read_text().splitlines()
    assert lines[0] == "6 9 4 8"
    back = load_weights(tmp_path / "w.txt", expected_sizes=(6, 9, 4, 8))
    assert np.array_equal(back.flat(), net.flat())
    states = np.random.default_rng(1).normal(size=(100, 6))
    assert np.array_equal(forward(back, states), forward(net, states))


def test_weights_load_errors(tmp_path):
    net = PolicyNetwork.initialize(6, 9, 4, seed=11)
    save_weights(net, tmp_path / "w.txt")
    with pytest.raises(ValueError, match="do not match"):
        load_weights(tmp_path / "w.txt", expected_sizes=(5, 9, 4, 8))
    text = (tmp_path / "w.txt").read_text().splitlines()
    (tmp_path / "t.txt").write_text("\n".join(text[:-10]) + "\n")
    keep = net.flat().copy()
    with pytest.raises(ValueError, match="truncated"):
        load_weights(tmp_path / "t.txt")
    assert np.array_equal(net.flat(), keep)
    (tmp_path / "c.txt").write_text("\n".join(text[:5] + ["garbage"] + text[6:]) + "\n")
    with pytest.raises(ValueError, match="corrupt"):
        load_weights(tmp_path / "c.txt")
    with pytest.raises(FileNotFoundError):
        load_weights(tmp_path / "none.txt")
