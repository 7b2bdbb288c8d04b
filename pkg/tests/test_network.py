import numpy as np
import pytest

from tripletreg.errors import InvalidConfig, ShapeError, TraceMismatch
from tripletreg.gradcheck import RELU_MARGIN
from tripletreg.losses import combined_loss, softmax_ce, triplet_loss
from tripletreg.mining import mine_semi_hard
from tripletreg.geometry import pairwise_sq_distances
from tripletreg.network import (
    ConvSpec,
    NetConfig,
    TwoHeadNet,
    backward,
    desk_config,
    forward,
    init_params,
    load_checkpoint,
    normalize_backward,
    predict,
    save_checkpoint,
)
from tripletreg.tensor import finite_diff_grad, relative_error


def test_desk_shapes():
    cfg = desk_config(n_classes=7, d_emb=32)
    net = init_params(cfg, 0)
    tr = forward(net, np.random.default_rng(0).normal(size=(3, 16, 16, 1)))
    assert tr.h.shape == (3, 4, 4, 8)
    assert tr.x.shape == (3, 8)
    assert tr.logits.shape == (3, 7)
    assert tr.embedding.shape == (3, 32)
    assert np.allclose(np.linalg.norm(tr.embedding, axis=1), 1.0, atol=1e-9)
    assert np.allclose(tr.x, tr.h.mean(axis=(1, 2)))


def test_single_image_input():
    net = init_params(desk_config(), 0)
    assert forward(net, np.zeros((16, 16, 1))).logits.shape == (1, 10)


def test_shape_mismatch():
    net = init_params(desk_config(), 0)
    with pytest.raises(ShapeError):
        forward(net, np.zeros((2, 8, 8, 1)))


def test_zero_w_emb_collapses():
    net = init_params(desk_config(), 0)
    net.params["W_emb"][:] = 0.0
    tr = forward(net, np.ones((1, 16, 16, 1)))
    assert np.array_equal(tr.pre_embedding, np.zeros((1, 256)))
    assert np.array_equal(tr.embedding, np.zeros((1, 256)))
    assert tr.collapse_count == 1


def test_identity_trunk_pools_input():
    cfg = NetConfig((4, 4, 1), 2, 3, (ConvSpec(1, 1, 1, 0),))
    net = init_params(cfg, 0)
    net.params["conv0.w"][:] = 1.0
    img = np.random.default_rng(1).uniform(0.1, 1.0, size=(2, 4, 4, 1))
    tr = forward(net, img)
    assert np.allclose(tr.x[:, 0], img.mean(axis=(1, 2, 3)))


def test_zero_upstream_gives_zero_grads():
    net = init_params(desk_config(), 0)
    tr = forward(net, np.random.default_rng(0).normal(size=(2, 16, 16, 1)))
    grads, _ = backward(net, tr, np.zeros_like(tr.logits), np.zeros_like(tr.embedding))
    assert all(not g.any() for g in grads.values())
    assert set(grads) == set(net.params)


def test_normalize_backward_orthogonal(rng):
    v = rng.normal(size=(6, 5))
    e = v / np.linalg.norm(v, axis=1, keepdims=True)
    g = normalize_backward(rng.normal(size=(6, 5)), e, v)
    assert np.abs(np.sum(g * e, axis=1)).max() < 1e-9


def test_stale_trace():
    net = init_params(desk_config(), 0)
    tr = forward(net, np.zeros((1, 16, 16, 1)))
    net.bump()
    with pytest.raises(TraceMismatch):
        backward(net, tr, np.zeros_like(tr.logits))
    other = init_params(desk_config(), 0)
    with pytest.raises(TraceMismatch):
        backward(other, forward(net, np.zeros((1, 16, 16, 1))), np.zeros((1, 10)))


def test_init_deterministic_and_he_uniform():
    a = init_params(desk_config(), 3)
    b = init_params(desk_config(), 3)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    w = a.params["W_emb"]
    assert np.abs(w).max() <= np.sqrt(6.0 / w.shape[0])
    assert not a.params["conv0.b"].any()


def test_zero_layer_trunk():
    with pytest.raises(InvalidConfig):
        init_params(NetConfig((16, 16, 1), 10, 8, ()), 0)


def test_param_count_closed_form():
    c, n, d, cin = 8, 10, 256, 1
    conv0 = 3 * 3 * cin * c + c
    conv1 = 3 * 3 * c * c + c
    expected = conv0 + conv1 + c * n + 4 * 4 * c * d
    cfg = desk_config()
    assert cfg.n_params() == expected == init_params(cfg, 0).n_params()


def test_embedding_head_sees_more():
    cfg = desk_config()
    h, w, c = cfg.feature_shape()
    assert cfg.param_shapes()["W_emb"][0] == h * w * cfg.param_shapes()["W_logits"][0]


def _kink_free_net(cfg, rng, inputs):
    while True:
        net = init_params(cfg, rng)
        for k in net.params:
            if k.endswith(".b"):
                net.params[k] = rng.normal(0, 0.1, size=net.params[k].shape)
        tr = forward(net, inputs)
        if min(np.abs(z).min() for z in tr.pre_acts) > RELU_MARGIN:
            return net, tr


@pytest.mark.parametrize("group", ["trunk", "W_logits", "W_emb"])
def test_gradcheck_per_parameter_group(group, rng):
    cfg = NetConfig((5, 5, 2), 3, 4, (ConvSpec(3, 3, 2, 1), ConvSpec(2, 2, 1, 0)))
    y = np.array([0, 0, 1, 1, 2])
    inputs = rng.normal(size=(5, 5, 5, 2))
    net, tr = _kink_free_net(cfg, rng, inputs)
    trip = mine_semi_hard(pairwise_sq_distances(tr.embedding), y, 0.2)

    def loss(n):
        t = forward(n, inputs)
        return combined_loss(softmax_ce(t.logits, y), triplet_loss(t.embedding, trip, 0.2, soft=True), 1.0)

    total = loss(net)
    grads, _ = backward(net, tr, total.grad_logits, total.grad_embeddings)
    names = [k for k in net.params if k.startswith("conv")] if group == "trunk" else [group]
    for name in names:
        def f(v, name=name):
            n = net.copy()
            n.params[name] = v
            return loss(n).value
        assert relative_error(grads[name], finite_diff_grad(f, net.params[name])) < 1e-4, name


def test_input_gradient(rng):
    cfg = NetConfig((4, 4, 1), 2, 3, (ConvSpec(2, 3, 1, 1),))
    inputs = rng.normal(size=(2, 4, 4, 1))
    net, tr = _kink_free_net(cfg, rng, inputs)
    y = np.array([0, 1])
    res = softmax_ce(tr.logits, y)
    _, gin = backward(net, tr, res.grad_logits, need_input_grad=True)
    num = finite_diff_grad(lambda v: softmax_ce(forward(net, v).logits, y).value, inputs)
    assert relative_error(gin, num) < 1e-4


def test_checkpoint_roundtrip(tmp_path, rng):
    net = init_params(desk_config(input_shape=(16, 16, 5), n_classes=3, d_emb=16), 4)
    for v in net.params.values():
        v += rng.normal(size=v.shape) * 1e-3
    path = tmp_path / "net.txt"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.config == net.config
    for k in net.params:
        assert np.array_equal(back.params[k], net.params[k])


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(InvalidConfig):
        load_checkpoint(p)


def test_predict_matches_forward(rng):
    net = init_params(desk_config(n_classes=4, d_emb=8), 0)
    x = rng.normal(size=(7, 16, 16, 1))
    preds, emb, pooled = predict(net, x, batch_size=3)
    tr = forward(net, x)
    assert np.array_equal(preds, tr.logits.argmax(axis=1))
    assert np.allclose(emb, tr.embedding) and np.allclose(pooled, tr.x)


def test_copy_is_independent():
    net = init_params(desk_config(), 0)
    other = net.copy()
    other.params["W_emb"][0, 0] += 1.0
    assert other.params["W_emb"][0, 0] != net.params["W_emb"][0, 0]
    assert isinstance(other, TwoHeadNet)
