import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from comorec.neuralnet import (
    Adam,
    DenseLayer,
    EmbeddingNetwork,
    EmbeddingTable,
    adam_step,
    backward,
    bce_loss,
    dense_forward,
    embed,
    gradient_check,
    sigmoid,
)
from conftest import random_batch


def test_embed():
    table = EmbeddingTable(np.vstack([np.zeros(8), np.arange(8.0)]))
    assert np.array_equal(embed(table, 0), np.zeros(8))
    assert embed(table, 1).shape == (8,)
    assert np.array_equal(embed(table, 1), embed(table, 1))
    with pytest.raises(IndexError):
        embed(table, 2)


def test_dense_forward_cases():
    eye = np.eye(2)
    x = np.array([-1.0, 2.0])
    assert np.array_equal(dense_forward(DenseLayer(eye, np.zeros(2), "identity"), x), x)
    assert np.array_equal(dense_forward(DenseLayer(eye, np.zeros(2), "relu"), x), [0.0, 2.0])
    out = dense_forward(DenseLayer(np.zeros((1, 2)), np.zeros(1), "sigmoid"), x)
    assert out.tolist() == [0.5]
    with pytest.raises(ValueError):
        dense_forward(DenseLayer(eye, np.zeros(2)), np.ones(3))


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert abs(sigmoid(50.0) - 1.0) <= 1e-15
    assert sigmoid(-800.0) == 0.0  # no overflow warning path
    z = np.random.default_rng(0).normal(scale=20, size=1000)
    np.testing.assert_allclose(sigmoid(-z), 1.0 - sigmoid(z), atol=1e-15)


def test_sigmoid_derivative_matches_finite_difference():
    z = np.linspace(-8, 8, 101)
    h = 1e-6
    s = sigmoid(z)
    np.testing.assert_allclose((sigmoid(z + h) - sigmoid(z - h)) / (2 * h), s * (1 - s), atol=1e-9)


def test_bce_values():
    assert bce_loss(1.0, 1) == 0.0 or bce_loss(1.0, 1) < 1e-11
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-15)
    # -ln(1e-12), evaluated to 30 digits
    assert bce_loss(0.0, 1) == pytest.approx(27.6310211159285482, rel=1e-12)
    assert np.isfinite(bce_loss(1.0, 0))


def test_adam_zero_gradient_no_change():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(Adam(), p, {"w": np.zeros(2)})
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_first_step_hand_evaluated():
    # t=1: m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
    p = {"a": np.array([0.0]), "b": np.array([1.0])}
    state = Adam(learning_rate=1e-3)
    state.step(p, {"a": np.array([0.5]), "b": np.array([-3.0])})
    assert state.t == 1
    assert p["a"][0] == pytest.approx(-0.000999999980000000399999992, rel=1e-12)
    assert p["b"][0] == pytest.approx(1.0 + 0.000999999996666666677777777740741, rel=1e-12)


def test_adam_deterministic_and_shape_checked():
    def run():
        rng = np.random.default_rng(0)
        p = {"w": rng.normal(size=(3, 2))}
        st = Adam()
        for _ in range(5):
            st.step(p, {"w": rng.normal(size=(3, 2))})
        return p["w"]

    assert np.array_equal(run(), run())
    with pytest.raises(ValueError):
        Adam().step({"w": np.zeros(2)}, {"w": np.zeros(3)})


@pytest.mark.parametrize("n_inputs", [2, 3])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check_passes(n_inputs, seed):
    net = EmbeddingNetwork.build([7, 5, 4][:n_inputs], embedding_dim=8, hidden_sizes=(16, 8), seed=seed, init_scale=0.5)
    idx, y = random_batch(net, 12, seed)
    assert gradient_check(net, idx, y, h=1e-5, n_coords=60, seed=seed) < 1e-4


def test_gradient_check_detects_doubled_layer():
    net = EmbeddingNetwork.build([7, 5], hidden_sizes=(16, 8), seed=0, init_scale=0.5)
    idx, y = random_batch(net, 12, 0)

    def corrupted(net, index, y):
        grads = net.loss_and_grads(index, y)[1]
        grads["dense1.weights"] = 2 * grads["dense1.weights"]
        return grads

    assert gradient_check(net, idx, y, grad_fn=corrupted) > 1e-1


def test_gradient_check_all_zero_parameters():
    net = EmbeddingNetwork.build([3, 3], hidden_sizes=(4,), seed=0)
    for p in net.parameters().values():
        p[...] = 0.0
    idx, y = random_batch(net, 5, 1)
    err = gradient_check(net, idx, y)
    assert np.isfinite(err) and err < 1e-4


def test_untouched_embedding_rows_have_zero_gradient():
    net = EmbeddingNetwork.build([10, 6], seed=0)
    idx = np.array([[1, 2], [3, 2]])
    grads = net.loss_and_grads(idx, [1, 0])[1]
    untouched = [r for r in range(10) if r not in (1, 3)]
    assert not grads["embedding0"][untouched].any()
    assert grads["embedding0"][[1, 3]].any()
    assert not grads["embedding1"][[0, 1, 3, 4, 5]].any()


def test_zero_gradient_at_saturated_correct_prediction():
    net = EmbeddingNetwork.build([2, 2], hidden_sizes=(4,), seed=0)
    net.layers[-1].weights[...] = 0.0
    net.layers[-1].bias[...] = 60.0  # sigmoid saturates to exactly 1.0
    loss, grads = net.loss_and_grads([[0, 1]], [1])
    assert loss < 1e-11
    assert all(not g.any() for g in grads.values())


def test_batch_equals_single_forward():
    net = EmbeddingNetwork.build([9, 4, 3], seed=5, init_scale=0.3)
    idx, _ = random_batch(net, 20, 5)
    batch = net.predict(idx)
    single = np.array([net.predict(row)[0] for row in idx])
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-15)


def test_backward_matches_explicit_chain_rule_single_record():
    # hand-unrolled chain rule for one record through a one-hidden-layer tower
    net = EmbeddingNetwork.build([3, 3], embedding_dim=2, hidden_sizes=(3,), seed=4, init_scale=0.5)
    idx = np.array([[1, 2]])
    cache = net.forward(idx)
    g = backward(net, cache, [1.0])
    x = np.concatenate([net.tables[0].matrix[1], net.tables[1].matrix[2]])
    w1, b1 = net.layers[0].weights, net.layers[0].bias
    w2 = net.layers[1].weights
    z1 = w1 @ x + b1
    a1 = np.maximum(z1, 0)
    p = cache.prob[0]
    dz2 = p - 1.0
    np.testing.assert_allclose(g["dense1.weights"][0], dz2 * a1, atol=1e-15)
    dz1 = dz2 * w2[0] * (z1 > 0)
    np.testing.assert_allclose(g["dense0.weights"], np.outer(dz1, x), atol=1e-15)
    dx = w1.T @ dz1
    np.testing.assert_allclose(g["embedding0"][1], dx[:2], atol=1e-15)
    np.testing.assert_allclose(g["embedding1"][2], dx[2:], atol=1e-15)


def test_parameters_stay_finite_under_training_steps():
    net = EmbeddingNetwork.build([20, 10], seed=1)
    opt = Adam(learning_rate=1e-2)
    params = net.parameters()
    for step in range(50):
        idx, y = random_batch(net, 32, step)
        opt.step(params, net.loss_and_grads(idx, y)[1])
        assert all(np.isfinite(p).all() for p in params.values())


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_sigmoid_range(zs):
    s = sigmoid(np.array(zs))
    assert ((s > 0) & (s < 1)).all()


def test_network_shape_validation():
    with pytest.raises(ValueError):
        EmbeddingNetwork([EmbeddingTable(np.zeros((2, 2)))], [DenseLayer(np.zeros((1, 3)), np.zeros(1), "sigmoid")])
    with pytest.raises(ValueError):
        EmbeddingNetwork([EmbeddingTable(np.zeros((2, 2)))], [DenseLayer(np.zeros((1, 2)), np.zeros(1), "relu")])


def test_gradient_check_skips_few_kink_coordinates(caplog):
    import logging
    import re

    skipped = 0
    with caplog.at_level(logging.DEBUG, logger="comorec.neuralnet"):
        for seed in range(6):
            net = EmbeddingNetwork.build([40, 30, 20], seed=seed)
            idx, y = random_batch(net, 32, seed)
            assert gradient_check(net, idx, y, n_coords=60, seed=seed) < 1e-4
    for rec in caplog.records:
        m = re.search(r"skipped (\d+)", rec.getMessage())
        skipped += int(m.group(1)) if m else 0
    assert skipped <= 0.05 * 6 * 60
