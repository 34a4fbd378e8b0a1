import hashlib

import numpy as np
import pytest

from uwb_adapt.nn import (
    Adam,
    Mlp,
    Q_NETWORK_LAYERS,
    finite_difference_grads,
    fit_batch,
    mse_loss,
)


def test_q_network_shape_chain():
    net = Mlp()
    assert net.layer_sizes == (14, 128, 256, 512, 256, 128, 72)
    assert net.layer_sizes == Q_NETWORK_LAYERS


def test_parameter_count_matches_shape_chain():
    net = Mlp()
    expected = (
        14 * 128 + 128
        + 128 * 256 + 256
        + 256 * 512 + 512
        + 512 * 256 + 256
        + 256 * 128 + 128
        + 128 * 72 + 72
    )
    assert net.n_params == expected == 340_040


def test_output_width_72():
    net = Mlp(seed=1)
    out = net.forward(np.zeros(14))
    assert out.shape == (72,)


def test_zero_parameters_give_zero_output():
    net = Mlp((14, 8, 72), seed=0)
    for p in net.parameters():
        p[...] = 0.0
    assert np.allclose(net.forward(np.ones(14)), 0.0)


def test_forward_deterministic():
    x = np.linspace(0, 1, 14)
    a = Mlp(seed=3).forward(x)
    b = Mlp(seed=3).forward(x)
    assert np.array_equal(a, b)


def test_forward_batch_matches_single():
    net = Mlp((14, 16, 5), seed=2)
    xs = np.random.default_rng(0).uniform(0, 1, (4, 14))
    batch = net.forward(xs)
    for i in range(4):
        assert np.allclose(batch[i], net.forward(xs[i]))


def test_forward_shape_validated():
    net = Mlp((14, 8, 3), seed=0)
    with pytest.raises(ValueError):
        net.forward(np.zeros(13))


def test_piecewise_linear_scaling():
    # With non-negative weights and input, every pre-activation stays positive,
    # so a bias-free network is exactly linear in the input scale.
    net = Mlp((4, 6, 3), seed=5)
    for w in net.weights:
        w[...] = np.abs(w)
    x = np.abs(np.random.default_rng(1).normal(size=4))
    y1 = net.forward(x)
    y2 = net.forward(2.0 * x)
    assert np.allclose(y2, 2.0 * y1, rtol=1e-12)


def test_gradient_matches_finite_differences():
    net = Mlp((14, 4, 3), seed=7)
    rng = np.random.default_rng(11)
    x = rng.uniform(0, 1, (5, 14))
    t = rng.normal(size=(5, 3))
    _, analytic = net.loss_and_grads(x, t)
    numeric = finite_difference_grads(net, x, t, h=1e-5)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    assert worst < 1e-4


def test_fit_batch_zero_residual_keeps_parameters():
    net = Mlp((6, 8, 4), seed=9)
    x = np.random.default_rng(2).uniform(0, 1, (3, 6))
    t = net.forward(x)
    before = [p.copy() for p in net.parameters()]
    opt = Adam(net.parameters())
    loss = fit_batch(net, x, t, opt)
    assert loss == 0.0
    for p, b in zip(net.parameters(), before):
        assert np.array_equal(p, b)


def test_overfit_single_sample():
    net = Mlp((14, 32, 5), seed=4)
    x = np.random.default_rng(3).uniform(0, 1, (1, 14))
    t = np.array([[0.3, -0.2, 1.1, 0.0, 0.7]])
    opt = Adam(net.parameters(), lr=1e-2)
    initial = mse_loss(net, x, t)
    for _ in range(500):
        fit_batch(net, x, t, opt)
    assert mse_loss(net, x, t) < 1e-6 * initial


def test_loss_strictly_decreases_early():
    net = Mlp((8, 16, 3), seed=6)
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, (4, 8))
    t = rng.normal(size=(4, 3))
    opt = Adam(net.parameters())
    losses = [fit_batch(net, x, t, opt) for _ in range(50)]
    assert losses[-1] < losses[0]


def test_non_finite_loss_aborts():
    net = Mlp((3, 4, 2), seed=0)
    x = np.array([[np.inf, 0.0, 0.0]])
    t = np.zeros((1, 2))
    with pytest.raises(FloatingPointError):
        net.loss_and_grads(x, t)


def test_clone_is_independent():
    net = Mlp((6, 8, 4), seed=8)
    copy = net.clone()
    x = np.random.default_rng(4).uniform(0, 1, (2, 6))
    assert np.array_equal(net.forward(x), copy.forward(x))
    before = copy.forward(x)
    opt = Adam(net.parameters())
    fit_batch(net, x, np.ones((2, 4)), opt)
    assert np.array_equal(copy.forward(x), before)
    assert not np.array_equal(net.forward(x), before)
    # Clone of a clone equals the first clone.
    second = copy.clone()
    assert all(np.array_equal(a, b) for a, b in zip(second.parameters(), copy.parameters()))


def test_checkpoint_round_trip(tmp_path):
    net = Mlp((14, 16, 7), seed=12)
    stem = tmp_path / "model"
    net.save(stem)
    loaded = Mlp.load(stem)
    assert loaded.layer_sizes == net.layer_sizes
    for a, b in zip(net.parameters(), loaded.parameters()):
        assert np.array_equal(a, b)


def test_checkpoint_digest_deterministic(tmp_path):
    for name in ("a", "b"):
        Mlp((14, 16, 7), seed=13).save(tmp_path / name)
    d1 = hashlib.sha256((tmp_path / "a.bin").read_bytes()).hexdigest()
    d2 = hashlib.sha256((tmp_path / "b.bin").read_bytes()).hexdigest()
    assert d1 == d2


def test_checkpoint_size_mismatch_rejected(tmp_path):
    net = Mlp((6, 8, 4), seed=1)
    stem = tmp_path / "model"
    net.save(stem)
    blob = (tmp_path / "model.bin").read_bytes()
    (tmp_path / "model.bin").write_bytes(blob[:-8])
    with pytest.raises(ValueError):
        Mlp.load(stem)
