import numpy as np
import pytest

from fdcheck import max_rel_error
from masc.diffcore import Adam, Tensor, backward
from masc.marnet import MarConfig, MarNet, PretrainLossConfig, finetune_loss, pretrain_loss, ssim_tensor
from masc.metrics import ssim


def test_fresh_network_is_identity():
    net = MarNet(rng=np.random.default_rng(0))
    x = np.random.default_rng(1).random((2, 64, 64)).astype(np.float32)
    np.testing.assert_array_equal(net.correct(x), x)


@pytest.mark.parametrize("size", [64, 128])
def test_output_shape(size):
    net = MarNet(rng=np.random.default_rng(0))
    net.head.weight.data[:] = 0.1
    out = net.correct(np.zeros((size, size), np.float32))
    assert out.shape == (size, size)


def test_indivisible_extent_rejected():
    net = MarNet(MarConfig(depth=3))
    with pytest.raises(ValueError):
        net.correct(np.zeros((20, 20), np.float32))


def test_config_validation():
    with pytest.raises(ValueError):
        MarNet(MarConfig(norm="batch"))


def test_overfits_single_pair():
    rng = np.random.default_rng(0)
    x = rng.random((1, 32, 32)).astype(np.float32)
    y = np.clip(x + 0.3 * np.sin(np.arange(32) / 3.0)[None, None, :], 0, 1).astype(np.float32)
    net = MarNet(MarConfig(depth=2, base_channels=4), rng)
    opt = Adam(net.parameters(), lr=1e-3)
    first = None
    for _ in range(200):
        loss = pretrain_loss(net(x), y)
        first = float(loss.data) if first is None else first
        net.zero_grad()
        backward(loss)
        opt.step()
    assert float(pretrain_loss(net(x), y).data) < first


def test_loss_values():
    y = np.random.default_rng(2).random((2, 16, 16)).astype(np.float32)
    assert float(pretrain_loss(y, y).data) == pytest.approx(0.0, abs=1e-6)
    l1_only = PretrainLossConfig(ssim_weight=0.0)
    assert float(pretrain_loss(y + np.float32(0.1), y, l1_only).data) == pytest.approx(0.1, abs=1e-6)
    assert float(finetune_loss(y + np.float32(0.1), y).data) == pytest.approx(0.01, abs=1e-6)


def test_ssim_tensor_matches_metric():
    rng = np.random.default_rng(3)
    x, y = rng.random((16, 16)), rng.random((16, 16))
    got = float(ssim_tensor(Tensor(x[None], dtype=np.float64), Tensor(y[None], dtype=np.float64)).data)
    assert got == pytest.approx(ssim(x, y), abs=1e-10)


def test_pretrain_loss_gradient():
    rng = np.random.default_rng(4)
    t = rng.random((2, 16, 16))
    target = Tensor(t, dtype=np.float64)
    # stay clear of the |.| kink so central differences are valid everywhere
    offset = rng.choice([-1.0, 1.0], t.shape) * rng.uniform(0.01, 0.3, t.shape)

    def fn(pred):
        return pretrain_loss(pred, target)

    assert max_rel_error(fn, [t + offset]) < 1e-4


def test_version_bumps():
    net = MarNet()
    v = net.version
    net.bump_version()
    assert net.version == v + 1
