import io

import numpy as np
import pytest

from serotonav import nn
from serotonav.roadrl import AgentConfig

ROADRL_SIZES = AgentConfig().layer_sizes()


def reference_forward(net: nn.DenseNet, x: np.ndarray) -> np.ndarray:
    """Straight-line loop implementation used as an independent oracle."""
    h = [float(v) for v in x]
    for layer in net.layers:
        out = []
        for i in range(layer.weights.shape[0]):
            z = float(layer.biases[i])
            for j in range(layer.weights.shape[1]):
                z += float(layer.weights[i, j]) * h[j]
            out.append(max(z, 0.0) if layer.activation == "relu" else z)
        h = out
    return np.array(h)


def test_zero_net_outputs_zero():
    net = nn.DenseNet.create([6, 4, 3], np.random.default_rng(0))
    for p in net.params():
        p[...] = 0.0
    assert np.all(net.forward(np.random.default_rng(1).normal(size=6)) == 0.0)


def test_identity_layer():
    net = nn.DenseNet([nn.Layer(np.eye(4), np.zeros(4), "identity")])
    x = np.array([1.0, -2.0, 3.5, 0.0])
    assert np.array_equal(net.forward(x), x)


def test_forward_matches_reference():
    rng = np.random.default_rng(3)
    net = nn.DenseNet.create([12, 9, 7, 3], rng)
    for p in net.params():
        p += rng.normal(scale=0.1, size=p.shape)  # non-zero biases too
    x = rng.normal(size=12)
    assert np.max(np.abs(net.forward(x) - reference_forward(net, x))) < 1e-12
    batch = rng.normal(size=(5, 12))
    assert np.max(np.abs(net.forward(batch)[2] - net.forward(batch[2]))) < 1e-12


def test_forward_shape_errors():
    net = nn.DenseNet.create([4, 3, 2], np.random.default_rng(0))
    with pytest.raises(nn.ShapeError):
        net.forward(np.zeros(5))
    with pytest.raises(nn.ShapeError):
        nn.DenseNet([nn.Layer(np.zeros((3, 4)), np.zeros(3)), nn.Layer(np.zeros((2, 4)), np.zeros(2))])
    _, cache = net.forward(np.zeros(4), keep_cache=True)
    with pytest.raises(nn.ShapeError):
        net.backward(cache, np.zeros(3))


def test_forward_is_pure():
    net = nn.DenseNet.create([8, 5, 2], np.random.default_rng(2))
    x = np.random.default_rng(4).normal(size=8)
    assert np.array_equal(net.forward(x), net.forward(x))


def test_glorot_init_and_output_activation():
    net = nn.DenseNet.create(ROADRL_SIZES, np.random.default_rng(0))
    assert net.sizes == [256, 128, 64, 5]
    assert [l.activation for l in net.layers] == ["relu", "relu", "identity"]
    for layer in net.layers:
        fan_out, fan_in = layer.weights.shape
        assert np.abs(layer.weights).max() <= np.sqrt(6.0 / (fan_in + fan_out))
        assert np.all(layer.biases == 0.0)


def test_backward_linear_case():
    rng = np.random.default_rng(0)
    net = nn.DenseNet([nn.Layer(rng.normal(size=(3, 4)), rng.normal(size=3), "identity")])
    x = rng.normal(size=4)
    g = rng.normal(size=3)
    _, cache = net.forward(x, keep_cache=True)
    (gw, gb), gx = net.backward(cache, g)
    assert np.allclose(gw, np.outer(g, x))
    assert np.allclose(gb, g)
    assert np.allclose(gx, net.layers[0].weights.T @ g)


def test_backward_dead_relu_blocks_gradient():
    net = nn.DenseNet([nn.Layer(np.eye(3), np.zeros(3), "relu"), nn.Layer(np.ones((2, 3)), np.zeros(2), "identity")])
    _, cache = net.forward(np.array([-1.0, -2.0, -0.5]), keep_cache=True)
    grads, gx = net.backward(cache, np.ones(2))
    assert np.all(grads[0] == 0.0) and np.all(grads[1] == 0.0)
    assert np.all(gx == 0.0)
    # subgradient at exactly zero is zero
    _, cache = net.forward(np.zeros(3), keep_cache=True)
    assert np.all(net.backward(cache, np.ones(2))[0][0] == 0.0)


def dqn_style_loss(net, x, actions, y):
    def loss():
        q = net.forward(x)
        return nn.huber(q[np.arange(len(actions)), actions] - y)[0]

    def analytic():
        q, cache = net.forward(x, keep_cache=True)
        _, g = nn.huber(q[np.arange(len(actions)), actions] - y)
        grad_out = np.zeros_like(q)
        grad_out[np.arange(len(actions)), actions] = g
        return net.backward(cache, grad_out)[0]

    return loss, analytic


def sampled_fd_check(net, loss, grads, rng, per_param=40, h=1e-5):
    worst = 0.0
    for p, g in zip(net.params(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in rng.choice(flat.size, size=min(per_param, flat.size), replace=False):
            orig = flat[k]
            flat[k] = orig + h
            up = loss()
            flat[k] = orig - h
            down = loss()
            flat[k] = orig
            num = (up - down) / (2 * h)
            worst = max(worst, nn.relative_error(np.array([gflat[k]]), np.array([num])))
    return worst


def test_gradient_check_small_net_full():
    rng = np.random.default_rng(0)
    net = nn.DenseNet.create([5, 7, 3], rng)
    for p in net.params():
        p += rng.normal(scale=0.1, size=p.shape)
    x = rng.normal(size=(4, 5))
    target = rng.normal(size=(4, 3))

    def loss():
        return nn.mse(net.forward(x), target)[0]

    q, cache = net.forward(x, keep_cache=True)
    grads = net.backward(cache, nn.mse(q, target)[1])[0]
    num = nn.numerical_gradients(loss, net.params(), 1e-5)
    for a, b in zip(grads, num):
        assert nn.relative_error(a, b) < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_gradient_check_roadrl_shapes(seed):
    rng = np.random.default_rng(seed)
    net = nn.DenseNet.create(ROADRL_SIZES, rng)
    for p in net.params()[1::2]:
        p += rng.normal(scale=0.05, size=p.shape)
    x = (rng.random((8, ROADRL_SIZES[0])) < 0.3).astype(float)
    actions = rng.integers(0, 5, size=8)
    y = rng.normal(scale=0.5, size=8)
    loss, analytic = dqn_style_loss(net, x, actions, y)
    assert sampled_fd_check(net, loss, analytic(), rng) < 1e-4


def test_huber():
    loss, g = nn.huber(np.array([0.5, -2.0]), 1.0)
    assert loss == pytest.approx((0.125 + 1.5) / 2)
    assert np.allclose(g, [0.25, -0.5])


def test_adam_zero_gradient_keeps_params():
    net = nn.DenseNet.create([3, 2], np.random.default_rng(0))
    before = [p.copy() for p in net.params()]
    opt = nn.Adam()
    opt.step(net, [np.zeros_like(p) for p in net.params()])
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_adam_first_step_closed_form():
    net = nn.DenseNet([nn.Layer(np.zeros((2, 2)), np.zeros(2), "identity")])
    g = [np.array([[0.3, -2.0], [1e-3, 5.0]]), np.array([-0.7, 0.0])]
    opt = nn.Adam(lr=1e-3)
    opt.step(net, g)
    for p, gi in zip(net.params(), g):
        assert np.allclose(p, -1e-3 * gi / (np.abs(gi) + 1e-8), atol=1e-15)
    with pytest.raises(nn.ShapeError):
        opt.step(net, g[:1])


def test_overfit_small_regression():
    rng = np.random.default_rng(2024)
    x = rng.normal(size=(32, 4))
    y = rng.normal(size=(32, 1))
    net = nn.DenseNet.create([4, 64, 64, 1], rng)
    opt = nn.Adam(lr=1e-3)
    losses = []
    for _ in range(2000):
        q, cache = net.forward(x, keep_cache=True)
        loss, g = nn.mse(q, y)
        losses.append(loss)
        opt.step(net, net.backward(cache, g)[0])
    assert nn.mse(net.forward(x), y)[0] < 1e-3
    # after warm-up, no step may raise the loss by more than 5% of its level at step 100
    tail = np.array(losses[100:])
    assert np.all(tail[1:] <= tail[:-1] + 0.05 * tail[0])


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    net = nn.DenseNet.create(ROADRL_SIZES, rng)
    opt = nn.Adam(lr=5e-4)
    opt.step_count = 17
    path = tmp_path / "c.bin"
    nn.save_checkpoint(net, path, opt)
    back, meta = nn.load_checkpoint(path)
    assert back.sizes == net.sizes
    assert all(np.array_equal(a, b) for a, b in zip(back.params(), net.params()))
    assert "lr=0.0005" in meta["optimizer"] and "steps=17" in meta["optimizer"]
    buf = io.BytesIO()
    nn.save_checkpoint(back, buf, opt)
    assert buf.getvalue() == path.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    net = nn.DenseNet.create([3, 2], np.random.default_rng(0))
    buf = io.BytesIO()
    nn.save_checkpoint(net, buf)
    data = buf.getvalue()
    with pytest.raises(ValueError):
        nn.loads_checkpoint(data + b"\x00")
    with pytest.raises(ValueError):
        nn.loads_checkpoint(data.replace(b"SEROTONAV-DENSENET", b"SOMETHING-ELSE-XX"))
