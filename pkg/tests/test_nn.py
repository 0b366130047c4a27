import math

import numpy as np
import pytest

from cuer.errors import InvalidArgument, LogParseError, NumericError
from cuer.nn import (
    Adam,
    Mlp,
    clip_by_global_norm,
    global_norm,
    load_arrays,
    max_relative_error,
    numerical_gradient,
    polyak_blend,
    save_arrays,
)


def loop_forward(net, x):
    """Scalar-loop reference for a single input vector."""
    h = [float(v) for v in x]
    for k in range(net.n_layers):
        W, b = net.params[2 * k], net.params[2 * k + 1]
        z = [sum(h[i] * W[i, j] for i in range(len(h))) + b[j] for j in range(W.shape[1])]
        last = k == net.n_layers - 1
        h = z if (last and net.out_act == "identity") else [math.tanh(v) for v in z]
    return np.array(h)


@pytest.mark.parametrize("sizes,out_act", [([3, 5, 2], "identity"), ([4, 8, 8, 3], "tanh"), ([2, 1], "identity")])
def test_forward_matches_loop_reference(sizes, out_act):
    net = Mlp(sizes, out_act, rng=np.random.default_rng(0))
    xs = np.random.default_rng(1).normal(size=(6, sizes[0]))
    batch = net(xs)
    for x, y in zip(xs, batch):
        assert np.allclose(y, loop_forward(net, x), rtol=0, atol=1e-12)
        assert np.allclose(net(x), y, rtol=0, atol=1e-15)


def test_zero_weights_give_zero_output():
    net = Mlp([3, 4, 2], rng=np.random.default_rng(0))
    for p in net.params:
        p[...] = 0.0
    assert np.array_equal(net(np.ones(3)), np.zeros(2))


def test_init_bounds():
    net = Mlp([16, 32, 4], rng=np.random.default_rng(2))
    for k, fan_in in enumerate([16, 32]):
        assert np.abs(net.params[2 * k]).max() <= 1 / math.sqrt(fan_in)
        assert net.params[2 * k].shape == (fan_in, net.sizes[k + 1])


def test_input_validation():
    net = Mlp([3, 2])
    with pytest.raises(InvalidArgument):
        net(np.zeros(4))
    with pytest.raises(NumericError):
        net(np.array([0.0, np.nan, 1.0]))
    with pytest.raises(InvalidArgument):
        Mlp([3])
    with pytest.raises(InvalidArgument):
        Mlp([3, 2], out_act="relu")


def grad_check(sizes, out_act, seed):
    rng = np.random.default_rng(seed)
    net = Mlp(sizes, out_act, rng=rng)
    x = rng.normal(size=(3, sizes[0]))
    c = rng.normal(size=(3, sizes[-1]))

    def loss():
        return float(np.sum(c * net(x)))

    y, cache = net.forward(x)
    grads, dx = net.backward(cache, c)
    num = numerical_gradient(loss, net.params)
    err = max_relative_error(grads, num)
    num_x = numerical_gradient(lambda: float(np.sum(c * net(x))), [x])[0]
    return max(err, max_relative_error([dx], [num_x]))


@pytest.mark.parametrize("sizes", [[1, 1], [2, 3, 1], [4, 6, 2], [8, 16, 16, 4], [5, 7, 3, 2]])
@pytest.mark.parametrize("out_act", ["identity", "tanh"])
def test_backward_matches_finite_differences(sizes, out_act):
    assert grad_check(sizes, out_act, seed=sum(sizes)) < 1e-4


def test_adam_minimises_quadratic():
    w = np.array([3.0, -2.0])
    opt = Adam([w], lr=0.1)
    for _ in range(1000):
        opt.step([w], [2 * w])
    assert float(w @ w) < 1e-2


def test_adam_first_step_size():
    w = np.array([1.0, 1.0])
    Adam([w], lr=0.01).step([w], [np.array([5.0, -0.001])])
    # bias correction makes the first step lr * sign(g)
    assert np.allclose(w, [0.99, 1.01], atol=1e-6)


def test_adam_zero_gradient_is_a_no_op():
    w = np.array([0.5, -1.5])
    opt = Adam([w], lr=0.1)
    for _ in range(10):
        opt.step([w], [np.zeros(2)])
    assert np.array_equal(w, [0.5, -1.5])


def test_adam_rejects_non_finite_before_mutating():
    w = np.array([1.0])
    opt = Adam([w], lr=0.1)
    with pytest.raises(NumericError):
        opt.step([w], [np.array([np.inf])])
    assert w[0] == 1.0 and opt.t == 0


def test_global_norm_clipping():
    g = [np.array([3.0]), np.array([[4.0]])]
    assert global_norm(g) == 5.0
    clipped, norm = clip_by_global_norm(g, 1.0)
    assert norm == 5.0
    assert global_norm(clipped) == pytest.approx(1.0)
    same, _ = clip_by_global_norm(g, 10.0)
    assert all(np.array_equal(a, b) for a, b in zip(same, g))


def test_polyak_contracts_geometrically():
    online = Mlp([2, 3, 1], rng=np.random.default_rng(0))
    target = Mlp([2, 3, 1], rng=np.random.default_rng(1))
    tau = 0.1
    gap0 = [t - o for t, o in zip(target.params, online.params)]
    for k in range(1, 6):
        polyak_blend(target, online, tau)
        for g0, t, o in zip(gap0, target.params, online.params):
            assert np.allclose(t - o, (1 - tau) ** k * g0, rtol=1e-12, atol=1e-15)
    polyak_blend(target, online, 1.0)
    assert all(np.array_equal(t, o) for t, o in zip(target.params, online.params))
    with pytest.raises(InvalidArgument):
        polyak_blend(target, online, 0.0)


def test_copy_is_independent():
    net = Mlp([2, 2], rng=np.random.default_rng(0))
    other = net.copy()
    other.params[0] += 1.0
    assert not np.array_equal(net.params[0], other.params[0])


def test_checkpoint_round_trip(tmp_path):
    net = Mlp([3, 7, 2], rng=np.random.default_rng(5))
    path = tmp_path / "net.ckpt"
    save_arrays(path, net.params)
    back = load_arrays(path)
    assert all(np.array_equal(a, b) for a, b in zip(back, net.params))
    x = np.random.default_rng(6).normal(size=(4, 3))
    clone = net.copy()
    for dst, src in zip(clone.params, back):
        dst[...] = src
    assert np.array_equal(clone(x), net(x))


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "net.ckpt"
    save_arrays(path, [np.ones((2, 2))])
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(LogParseError):
        load_arrays(path)
    path.write_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(LogParseError) as err:
        load_arrays(path)
    assert err.value.offset == 0


def test_single_affine_layer():
    net = Mlp([1, 1])
    net.params[0][...] = 2.5
    net.params[1][...] = -0.5
    assert net(np.array([3.0]))[0] == 7.0


def test_zero_upstream_gradient():
    net = Mlp([3, 4, 2], rng=np.random.default_rng(0))
    _, cache = net.forward(np.ones((2, 3)))
    grads, dx = net.backward(cache, np.zeros((2, 2)))
    assert all(not g.any() for g in grads) and not dx.any()


def test_linear_squared_loss_gradient():
    net = Mlp([3, 1], rng=np.random.default_rng(1))
    x, t = np.array([0.5, -1.0, 2.0]), 0.3
    y, cache = net.forward(x)
    grads, _ = net.backward(cache, 2 * (y - t))
    assert np.allclose(grads[0][:, 0], 2 * (y[0] - t) * x, rtol=0, atol=1e-15)
    assert np.allclose(grads[1], 2 * (y - t), rtol=0, atol=1e-15)


def test_adam_scalar_quadratic_from_one():
    w = np.array([1.0])
    opt = Adam([w], lr=0.1)
    for _ in range(1000):
        opt.step([w], [2 * w])
    assert abs(w[0]) < 1e-2


def test_polyak_single_step_value():
    online = Mlp([1, 1])
    target = online.copy()
    for p in target.params:
        p[...] = 0.0
    for p in online.params:
        p[...] = 1.0
    polyak_blend(target, online, 0.005)
    assert all(np.all(p == 0.005) for p in target.params)


def test_same_seed_same_init():
    a = Mlp([4, 8, 2], rng=np.random.default_rng(11))
    b = Mlp([4, 8, 2], rng=np.random.default_rng(11))
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))
